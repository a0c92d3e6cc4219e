#pragma once

#include "cavkit/bundle.hpp"
#include "cavkit/concept_dataset.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace cavkit {

using IndexList = std::vector<std::size_t>;

struct BinaryView {
    IndexList positives;
    IndexList negatives;
};

/// Splits the labelled samples of `concept`; unknown labels are dropped.
/// Throws UnknownConcept, or NotTrainable when either side is empty.
BinaryView binary_view(const ConceptDataset& ds, const std::string& concept_name);

struct KMeansOptions {
    std::size_t max_iterations = 100;
    double tolerance = 1e-6; // max centroid shift for convergence
};

struct KMeansResult {
    std::vector<std::vector<double>> centroids;
    std::vector<std::size_t> assignment; // cluster per input point
    std::size_t iterations = 0;
    bool converged = false;
};

/// Lloyd's algorithm with k-means++ seeding over the given rows.
KMeansResult kmeans(std::span<const std::span<const float>> points, std::size_t k, std::uint64_t seed,
                    const KMeansOptions& options = {});

/// Picks `target_count` representatives of `majority` (row indices into `acts`):
/// one per k-means cluster, the member nearest its centroid. Empty clusters are
/// backfilled with the unselected rows nearest any centroid. Result is sorted,
/// except that a target equal to the majority size returns it unchanged.
IndexList cluster_undersample(const ActivationSet& acts, std::span<const std::size_t> majority,
                              std::size_t target_count, std::uint64_t seed, const KMeansOptions& options = {});

/// Train/validation partition. Labels are 1 for concept-present.
struct SplitPlan {
    std::string concept_name;
    std::size_t repetition_index = 0;
    IndexList train_indices;
    std::vector<std::uint8_t> train_labels;
    IndexList val_indices;
    std::vector<std::uint8_t> val_labels;
    std::uint64_t seed = 0;
};

inline constexpr double kDefaultValFraction = 0.2;

/// Stratified split; the larger side of each partition is randomly trimmed so
/// positives and negatives match. Throws SplitTooSmall.
SplitPlan stratified_split(std::span<const std::size_t> positives, std::span<const std::size_t> negatives,
                           double val_fraction, std::uint64_t seed);

inline constexpr std::size_t kDefaultRandomCavCount = 50;
inline constexpr std::size_t kDefaultRandomSubsetSize = 1000;

/// Name of the i-th random concept, also used as its CAV concept name.
std::string random_concept_name(std::size_t i);

/// `count` subsets of `pool_ids` (pool order kept) labelled by a fair seeded coin.
std::vector<ConceptDataset> random_concept_subsets(std::span<const std::string> pool_ids, std::size_t subset_size,
                                                   std::size_t count, std::uint64_t seed);

} // namespace cavkit
