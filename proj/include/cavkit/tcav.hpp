#pragma once

#include "cavkit/bundle.hpp"
#include "cavkit/linear_cav.hpp"

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace cavkit {

/// Directional derivative of a class logit along the CAV. The raw gradient is
/// mapped into the CAV's standardized coordinates first: x = mean + std * z,
/// so d/dz = std * d/dx.
double directional_sensitivity(std::span<const float> grad_row, const Cav& cav);

/// Fraction of class samples with strictly positive sensitivity.
struct TcavScore {
    std::string concept_name;
    std::string target_class;
    std::string layer;
    std::size_t repetition = 0;
    std::size_t positive_count = 0;
    std::size_t n_samples = 0;

    double score() const noexcept {
        return n_samples == 0 ? 0.0 : static_cast<double>(positive_count) / static_cast<double>(n_samples);
    }
};

/// Scores `cav` over the gradient rows `rows` (the class members).
TcavScore tcav_score(const GradientSet& grads, std::span<const std::size_t> rows, const Cav& cav);

/// Which samples form the class population X_k.
enum class ClassMembership { ground_truth, predicted };

std::vector<std::size_t> class_rows(const Bundle& bundle, const std::string& cls, ClassMembership membership);

/// One score per (cav, class), ordered by (concept, layer), then class, then repetition.
std::vector<TcavScore> score_all(const Bundle& bundle, std::span<const Cav> cavs,
                                 std::span<const std::string> target_classes,
                                 ClassMembership membership = ClassMembership::ground_truth, std::size_t jobs = 1);

struct ScoreSummary {
    std::string concept_name;
    std::string target_class;
    std::string layer;
    std::size_t n = 0;
    double mean = 0.0;
    double std = 0.0; // sample standard deviation (n - 1)
};

/// Mean/std of the repetition scores per (concept, class, layer), first-seen order.
std::vector<ScoreSummary> summarize(std::span<const TcavScore> scores);

} // namespace cavkit
