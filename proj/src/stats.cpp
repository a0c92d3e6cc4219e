#include "cavkit/stats.hpp"

#include "cavkit/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>

namespace cavkit {

namespace {

constexpr double kBetaTolerance = 1e-10;
constexpr int kBetaMaxIterations = 10000;
constexpr double kTiny = 1e-300;

// Continued fraction for I_x(a, b); converges fast for x < (a + 1) / (a + b + 2).
double beta_continued_fraction(double x, double a, double b) {
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kBetaMaxIterations; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < kBetaTolerance) return h;
    }
    throw Error(ErrorCode::Divergence, fmt::format("incomplete beta did not converge (x = {}, a = {}, b = {})", x, a, b));
}

// I_x(a, b) given both x and y = 1 - x, so callers can pass an exact complement.
double incomplete_beta(double x, double y, double a, double b) {
    if (x <= 0.0) return 0.0;
    if (y <= 0.0) return 1.0;
    const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log(y);
    const double front = std::exp(log_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(x, a, b) / a;
    return 1.0 - front * beta_continued_fraction(y, b, a) / b;
}

double mean_of(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double variance_of(std::span<const double> v, double mean) {
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return ss / static_cast<double>(v.size() - 1);
}

} // namespace

double regularized_incomplete_beta(double x, double a, double b) {
    if (!(a > 0.0) || !(b > 0.0)) throw Error(ErrorCode::InvalidArgument, "incomplete beta needs a > 0 and b > 0");
    if (!(x >= 0.0 && x <= 1.0)) throw Error(ErrorCode::InvalidArgument, fmt::format("incomplete beta needs x in [0, 1], got {}", x));
    return incomplete_beta(x, 1.0 - x, a, b);
}

double student_t_sf(double t, double df) {
    if (!(df > 0.0)) throw Error(ErrorCode::InvalidArgument, fmt::format("degrees of freedom must be positive, got {}", df));
    if (std::isnan(t)) throw Error(ErrorCode::InvalidArgument, "t statistic is NaN");
    if (t == 0.0) return 1.0;
    if (std::isinf(t)) return 0.0;
    const double t2 = t * t;
    const double x = df / (df + t2);
    const double y = t2 / (df + t2);
    const double p = incomplete_beta(x, y, 0.5 * df, 0.5);
    return std::clamp(p, 0.0, 1.0);
}

WelchResult welch_t_test(std::span<const double> a, std::span<const double> b) {
    if (a.size() < 2 || b.size() < 2)
        throw Error(ErrorCode::InvalidArgument,
                    fmt::format("t-test needs at least 2 values per sample (got {} and {})", a.size(), b.size()));
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    const double ma = mean_of(a);
    const double mb = mean_of(b);
    const double va = variance_of(a, ma) / na;
    const double vb = variance_of(b, mb) / nb;
    const double se2 = va + vb;

    WelchResult r;
    if (se2 == 0.0) {
        if (ma == mb) throw Error(ErrorCode::DegenerateSample, "t statistic undefined: both samples constant and equal");
        r.t = ma > mb ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
        r.df = na + nb - 2.0;
        r.p = 0.0;
        return r;
    }
    r.t = (ma - mb) / std::sqrt(se2);
    r.df = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    r.p = student_t_sf(r.t, r.df);
    return r;
}

SignificanceResult test_concept(std::span<const double> concept_values, std::span<const double> baseline_values,
                                double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0))
        throw Error(ErrorCode::InvalidArgument, fmt::format("alpha must lie in (0, 1), got {}", alpha));
    const auto w = welch_t_test(concept_values, baseline_values);
    SignificanceResult r;
    r.t_statistic = w.t;
    r.degrees_of_freedom = w.df;
    r.p_value = w.p;
    r.alpha = alpha;
    r.significant = w.p < alpha;
    return r;
}

SampleSummary summarize_sample(std::span<const double> values) {
    SampleSummary s;
    s.n = values.size();
    if (s.n == 0) return s;
    s.mean = mean_of(values);
    s.std = s.n > 1 ? std::sqrt(variance_of(values, s.mean)) : 0.0;
    return s;
}

} // namespace cavkit
