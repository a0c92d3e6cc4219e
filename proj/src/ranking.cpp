#include "cavkit/ranking.hpp"

#include "cavkit/error.hpp"

#include <fmt/format.h>

#include <algorithm>

namespace cavkit {

ConceptRanking rank_by_concept(const ActivationSet& acts, const Cav& cav) {
    if (acts.dim() != cav.dim() || cav.standardizer.dim() != cav.dim())
        throw Error(ErrorCode::DimensionMismatch, fmt::format("layer '{}' has {} features, CAV '{}' has {}",
                                                              acts.layer_name, acts.dim(), cav.concept_name, cav.dim()));
    ConceptRanking ranking{cav.concept_name, acts.layer_name, {}};
    ranking.entries.reserve(acts.sample_ids.size());
    std::vector<double> z(cav.dim());
    for (std::size_t i = 0; i < acts.sample_ids.size(); ++i) {
        cav.standardizer.transform_row(acts.tensor.row(i), z);
        double proj = 0.0;
        for (std::size_t j = 0; j < z.size(); ++j) proj += z[j] * static_cast<double>(cav.direction[j]);
        ranking.entries.push_back(RankedSample{acts.sample_ids[i], proj});
    }
    std::sort(ranking.entries.begin(), ranking.entries.end(), [](const RankedSample& a, const RankedSample& b) {
        if (a.projection != b.projection) return a.projection > b.projection;
        return a.sample_id < b.sample_id;
    });
    return ranking;
}

HeadTail head_tail(const ConceptRanking& ranking, std::size_t n) {
    const auto& e = ranking.entries;
    if (n == 0) throw Error(ErrorCode::InvalidArgument, "head/tail size must be at least 1");
    if (2 * n > e.size())
        throw Error(ErrorCode::InvalidArgument,
                    fmt::format("head/tail of {} needs at least {} ranked samples, have {}", n, 2 * n, e.size()));
    return HeadTail{{e.begin(), e.begin() + static_cast<std::ptrdiff_t>(n)},
                    {e.end() - static_cast<std::ptrdiff_t>(n), e.end()}};
}

const Cav& select_ranking_cav(std::span<const Cav> cavs) {
    if (cavs.empty()) throw Error(ErrorCode::MissingCavStore, "no CAVs to rank with");
    const Cav* best = &cavs.front();
    for (const auto& c : cavs)
        if (c.validation_accuracy > best->validation_accuracy ||
            (c.validation_accuracy == best->validation_accuracy && c.repetition < best->repetition))
            best = &c;
    return *best;
}

} // namespace cavkit
