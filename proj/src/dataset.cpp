#include "cavkit/dataset.hpp"

#include "kernels.hpp"

#include "cavkit/error.hpp"
#include "cavkit/rng.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace cavkit {

BinaryView binary_view(const ConceptDataset& ds, const std::string& concept_name) {
    const auto it = ds.concept_labels.find(concept_name);
    if (it == ds.concept_labels.end()) throw Error(ErrorCode::UnknownConcept, "unknown concept '" + concept_name + "'");
    BinaryView view;
    for (std::size_t i = 0; i < it->second.size(); ++i) {
        switch (it->second[i]) {
        case ConceptLabel::present: view.positives.push_back(i); break;
        case ConceptLabel::absent: view.negatives.push_back(i); break;
        case ConceptLabel::unknown: break;
        }
    }
    if (view.positives.empty() || view.negatives.empty())
        throw Error(ErrorCode::NotTrainable,
                    fmt::format("concept '{}' has {} positive and {} negative samples; both must be nonzero", concept_name,
                                view.positives.size(), view.negatives.size()));
    return view;
}

namespace {

double squared_distance(std::span<const float> x, const std::vector<double>& c,
                        double bound = std::numeric_limits<double>::infinity()) {
    return detail::squared_distance(x.data(), c.data(), x.size(), bound);
}

std::vector<double> to_double(std::span<const float> x) {
    return std::vector<double>(x.begin(), x.end());
}

// Lowest-index nearest centroid. `hint` seeds the search bound so most
// distance computations stop early; it does not change the result.
std::size_t nearest_centroid(std::span<const float> x, const std::vector<std::vector<double>>& centroids,
                             std::size_t hint = 0) {
    std::size_t best = hint;
    double best_d = squared_distance(x, centroids[hint]);
    for (std::size_t c = 0; c < centroids.size(); ++c) {
        if (c == hint) continue;
        const double d = squared_distance(x, centroids[c], best_d);
        if (d < best_d || (d == best_d && c < best)) {
            best_d = d;
            best = c;
        }
    }
    return best;
}

} // namespace

KMeansResult kmeans(std::span<const std::span<const float>> points, std::size_t k, std::uint64_t seed,
                    const KMeansOptions& options) {
    const std::size_t n = points.size();
    if (k == 0 || k > n)
        throw Error(ErrorCode::InvalidArgument, fmt::format("k-means needs 1 <= k <= n (k = {}, n = {})", k, n));
    Rng rng(seed);

    // k-means++ seeding
    KMeansResult result;
    std::vector<bool> chosen(n, false);
    std::vector<double> d2(n, std::numeric_limits<double>::infinity());
    std::size_t first = static_cast<std::size_t>(rng.below(n));
    result.centroids.push_back(to_double(points[first]));
    chosen[first] = true;
    while (result.centroids.size() < k) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            d2[i] = std::min(d2[i], squared_distance(points[i], result.centroids.back(), d2[i]));
            if (!chosen[i]) total += d2[i];
        }
        std::size_t pick = n;
        if (total > 0.0) {
            double r = rng.uniform() * total;
            for (std::size_t i = 0; i < n; ++i) {
                if (chosen[i]) continue;
                pick = i;
                r -= d2[i];
                if (r < 0.0) break;
            }
        } else {
            // All remaining points coincide with a centroid.
            std::size_t remaining = 0;
            for (std::size_t i = 0; i < n; ++i) remaining += chosen[i] ? 0 : 1;
            auto target = rng.below(remaining);
            for (std::size_t i = 0; i < n; ++i) {
                if (chosen[i]) continue;
                if (target-- == 0) {
                    pick = i;
                    break;
                }
            }
        }
        chosen[pick] = true;
        result.centroids.push_back(to_double(points[pick]));
    }

    // Lloyd iterations
    const std::size_t dim = points.empty() ? 0 : points[0].size();
    result.assignment.assign(n, 0);
    for (result.iterations = 0; result.iterations < options.max_iterations;) {
        for (std::size_t i = 0; i < n; ++i)
            result.assignment[i] = nearest_centroid(points[i], result.centroids, result.assignment[i]);

        std::vector<std::vector<double>> sums(k, std::vector<double>(dim, 0.0));
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            auto& s = sums[result.assignment[i]];
            for (std::size_t j = 0; j < dim; ++j) s[j] += points[i][j];
            ++counts[result.assignment[i]];
        }
        double max_shift = 0.0;
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] == 0) continue; // empty cluster keeps its centroid
            double shift = 0.0;
            for (std::size_t j = 0; j < dim; ++j) {
                const double updated = sums[c][j] / static_cast<double>(counts[c]);
                const double diff = updated - result.centroids[c][j];
                shift += diff * diff;
                result.centroids[c][j] = updated;
            }
            max_shift = std::max(max_shift, std::sqrt(shift));
        }
        ++result.iterations;
        if (max_shift < options.tolerance) {
            result.converged = true;
            break;
        }
    }
    for (std::size_t i = 0; i < n; ++i)
        result.assignment[i] = nearest_centroid(points[i], result.centroids, result.assignment[i]);
    return result;
}

IndexList cluster_undersample(const ActivationSet& acts, std::span<const std::size_t> majority,
                              std::size_t target_count, std::uint64_t seed, const KMeansOptions& options) {
    if (target_count == 0) throw Error(ErrorCode::InvalidArgument, "undersampling target must be at least 1");
    if (target_count > majority.size())
        throw Error(ErrorCode::InvalidArgument, fmt::format("undersampling target {} exceeds majority size {}",
                                                            target_count, majority.size()));
    if (target_count == majority.size()) return IndexList(majority.begin(), majority.end());

    std::vector<std::span<const float>> rows;
    rows.reserve(majority.size());
    for (auto idx : majority) rows.push_back(acts.tensor.row(idx));
    const auto km = kmeans(rows, target_count, seed, options);

    const std::size_t n = rows.size();
    std::vector<std::size_t> best(target_count, n);
    std::vector<double> best_d(target_count, std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < n; ++i) {
        const auto c = km.assignment[i];
        const double d = squared_distance(rows[i], km.centroids[c]);
        if (d < best_d[c]) {
            best_d[c] = d;
            best[c] = i;
        }
    }

    std::vector<bool> selected(n, false);
    IndexList picked;
    for (auto i : best) {
        if (i == n) continue;
        selected[i] = true;
        picked.push_back(i);
    }
    if (picked.size() < target_count) {
        std::vector<std::pair<double, std::size_t>> spare;
        for (std::size_t i = 0; i < n; ++i) {
            if (selected[i]) continue;
            const auto c = nearest_centroid(rows[i], km.centroids, km.assignment[i]);
            spare.emplace_back(squared_distance(rows[i], km.centroids[c]), i);
        }
        std::sort(spare.begin(), spare.end());
        for (std::size_t s = 0; picked.size() < target_count; ++s) picked.push_back(spare[s].second);
    }

    IndexList out;
    out.reserve(target_count);
    for (auto i : picked) out.push_back(majority[i]);
    std::sort(out.begin(), out.end());
    return out;
}

SplitPlan stratified_split(std::span<const std::size_t> positives, std::span<const std::size_t> negatives,
                           double val_fraction, std::uint64_t seed) {
    if (!(val_fraction > 0.0 && val_fraction < 1.0))
        throw Error(ErrorCode::InvalidArgument, fmt::format("val_fraction must lie in (0, 1), got {}", val_fraction));
    if (positives.size() < 2 || negatives.size() < 2)
        throw Error(ErrorCode::SplitTooSmall,
                    fmt::format("stratified split needs at least 2 positives and 2 negatives (got {} and {})",
                                positives.size(), negatives.size()));

    auto val_count = [&](std::size_t n, const char* side) {
        const auto c = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(val_fraction * static_cast<double>(n))));
        if (c >= n)
            throw Error(ErrorCode::SplitTooSmall,
                        fmt::format("{} {} samples cannot fill both partitions at val_fraction {}", n, side, val_fraction));
        return c;
    };
    const std::size_t val_pos = val_count(positives.size(), "positive");
    const std::size_t val_neg = val_count(negatives.size(), "negative");

    Rng rng(seed);
    IndexList pos(positives.begin(), positives.end());
    IndexList neg(negatives.begin(), negatives.end());
    rng.shuffle(std::span(pos));
    rng.shuffle(std::span(neg));

    const std::size_t val_n = std::min(val_pos, val_neg);
    const std::size_t train_n = std::min(pos.size() - val_pos, neg.size() - val_neg);

    SplitPlan plan;
    plan.seed = seed;
    auto emit = [](IndexList& idx, std::vector<std::uint8_t>& labels, const IndexList& src, std::size_t from,
                   std::size_t count, std::uint8_t label) {
        for (std::size_t i = 0; i < count; ++i) {
            idx.push_back(src[from + i]);
            labels.push_back(label);
        }
    };
    emit(plan.val_indices, plan.val_labels, pos, 0, val_n, 1);
    emit(plan.val_indices, plan.val_labels, neg, 0, val_n, 0);
    emit(plan.train_indices, plan.train_labels, pos, val_pos, train_n, 1);
    emit(plan.train_indices, plan.train_labels, neg, val_neg, train_n, 0);
    return plan;
}

std::string random_concept_name(std::size_t i) {
    return fmt::format("random_{}", i);
}

std::vector<ConceptDataset> random_concept_subsets(std::span<const std::string> pool_ids, std::size_t subset_size,
                                                   std::size_t count, std::uint64_t seed) {
    if (count == 0) throw Error(ErrorCode::InvalidArgument, "random subset count must be at least 1");
    if (subset_size == 0) throw Error(ErrorCode::InvalidArgument, "random subset size must be at least 1");
    if (subset_size > pool_ids.size())
        throw Error(ErrorCode::InvalidArgument,
                    fmt::format("random subset size {} exceeds pool size {}", subset_size, pool_ids.size()));

    std::vector<ConceptDataset> out;
    out.reserve(count);
    for (std::size_t r = 0; r < count; ++r) {
        Rng rng(derive_seed(seed, "random_subset", r));
        IndexList idx(pool_ids.size());
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        // partial Fisher-Yates: the first subset_size slots are a uniform sample
        for (std::size_t i = 0; i < subset_size; ++i) {
            const auto j = i + static_cast<std::size_t>(rng.below(idx.size() - i));
            std::swap(idx[i], idx[j]);
        }
        idx.resize(subset_size);
        std::sort(idx.begin(), idx.end());

        ConceptDataset ds;
        std::vector<ConceptLabel> labels;
        ds.sample_ids.reserve(subset_size);
        labels.reserve(subset_size);
        for (auto i : idx) {
            ds.sample_ids.push_back(pool_ids[i]);
            labels.push_back(rng.coin() ? ConceptLabel::present : ConceptLabel::absent);
        }
        ds.concept_labels.emplace(random_concept_name(r), std::move(labels));
        out.push_back(std::move(ds));
    }
    return out;
}

} // namespace cavkit
