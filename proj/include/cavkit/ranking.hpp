#pragma once

#include "cavkit/bundle.hpp"
#include "cavkit/linear_cav.hpp"

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace cavkit {

struct RankedSample {
    std::string sample_id;
    double projection = 0.0;
};

/// Samples ordered from most to least concept-like.
struct ConceptRanking {
    std::string concept_name;
    std::string layer;
    std::vector<RankedSample> entries; // descending projection, ties by ascending id
};

inline constexpr std::size_t kDefaultHeadTail = 5;

/// Signed scalar projection of each standardized activation onto the unit CAV.
ConceptRanking rank_by_concept(const ActivationSet& acts, const Cav& cav);

struct HeadTail {
    std::vector<RankedSample> top;
    std::vector<RankedSample> bottom; // least similar last
};

HeadTail head_tail(const ConceptRanking& ranking, std::size_t n = kDefaultHeadTail);

/// Repetition with the highest validation accuracy; ties go to the lowest repetition.
const Cav& select_ranking_cav(std::span<const Cav> cavs);

} // namespace cavkit
