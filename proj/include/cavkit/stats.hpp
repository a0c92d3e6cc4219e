#pragma once

#include <cstddef>
#include <span>
#include <string>

namespace cavkit {

inline constexpr double kDefaultAlpha = 0.05;

/// Regularized incomplete beta I_x(a, b) by Lentz's continued fraction.
double regularized_incomplete_beta(double x, double a, double b);

/// Two-sided Student-t tail P(|T| >= |t|) with `df` degrees of freedom.
double student_t_sf(double t, double df);

struct WelchResult {
    double t = 0.0;
    double df = 0.0;
    double p = 1.0;
};

/// Welch's unequal-variance two-sample t-test, two-sided.
/// Throws InvalidArgument for fewer than 2 values per side and DegenerateSample
/// when both samples are constant with equal means.
WelchResult welch_t_test(std::span<const double> a, std::span<const double> b);

struct SignificanceResult {
    std::string concept_name;
    std::string target; // class name, or "accuracy" for the probe-accuracy test
    std::string layer;
    double t_statistic = 0.0;
    double degrees_of_freedom = 0.0;
    double p_value = 1.0;
    bool significant = false;
    double alpha = kDefaultAlpha;
};

/// Compares a concept's per-repetition values with the random-CAV baseline.
SignificanceResult test_concept(std::span<const double> concept_values, std::span<const double> baseline_values,
                                double alpha = kDefaultAlpha);

struct SampleSummary {
    std::size_t n = 0;
    double mean = 0.0;
    double std = 0.0; // n - 1 denominator; 0 for n < 2
};

SampleSummary summarize_sample(std::span<const double> values);

} // namespace cavkit
