#include "cavkit/tcav.hpp"

#include "cavkit/error.hpp"
#include "cavkit/parallel.hpp"

#include <fmt/format.h>

#include <cmath>
#include <map>
#include <tuple>

namespace cavkit {

double directional_sensitivity(std::span<const float> grad_row, const Cav& cav) {
    if (grad_row.size() != cav.direction.size() || cav.standardizer.dim() != cav.direction.size())
        throw Error(ErrorCode::DimensionMismatch, fmt::format("gradient has {} entries, CAV '{}' has {}", grad_row.size(),
                                                              cav.concept_name, cav.direction.size()));
    double s = 0.0;
    for (std::size_t j = 0; j < grad_row.size(); ++j) {
        const double g = grad_row[j];
        if (!std::isfinite(g)) throw Error(ErrorCode::NonFinite, fmt::format("non-finite gradient entry {}", j));
        s += (g * cav.standardizer.std[j]) * static_cast<double>(cav.direction[j]);
    }
    return s;
}

TcavScore tcav_score(const GradientSet& grads, std::span<const std::size_t> rows, const Cav& cav) {
    if (rows.empty())
        throw Error(ErrorCode::EmptyClass, fmt::format("class '{}' has no samples to score", grads.target_class));
    TcavScore out{cav.concept_name, grads.target_class, grads.layer_name, cav.repetition, 0, rows.size()};
    for (auto r : rows)
        if (directional_sensitivity(grads.tensor.row(r), cav) > 0.0) ++out.positive_count;
    return out;
}

std::vector<std::size_t> class_rows(const Bundle& bundle, const std::string& cls, ClassMembership membership) {
    const std::vector<std::string>* labels = &bundle.dataset.class_labels;
    if (membership == ClassMembership::predicted) {
        if (!bundle.predicted_labels)
            throw Error(ErrorCode::Manifest, "predicted class membership requested but the bundle has no predicted_labels");
        labels = &*bundle.predicted_labels;
    }
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < labels->size(); ++i)
        if ((*labels)[i] == cls) rows.push_back(i);
    return rows;
}

std::vector<TcavScore> score_all(const Bundle& bundle, std::span<const Cav> cavs,
                                 std::span<const std::string> target_classes, ClassMembership membership,
                                 std::size_t jobs) {
    // group CAVs by (concept, layer), keeping first-seen order
    std::vector<std::pair<std::string, std::string>> groups;
    std::map<std::pair<std::string, std::string>, std::vector<const Cav*>> members;
    for (const auto& cav : cavs) {
        auto key = std::make_pair(cav.concept_name, cav.layer);
        auto& list = members[key];
        if (list.empty()) groups.push_back(key);
        list.push_back(&cav);
    }
    for (auto& [key, list] : members)
        std::stable_sort(list.begin(), list.end(), [](const Cav* a, const Cav* b) { return a->repetition < b->repetition; });

    std::map<std::string, std::vector<std::size_t>> rows_of;
    for (const auto& cls : target_classes) {
        auto rows = class_rows(bundle, cls, membership);
        if (rows.empty()) throw Error(ErrorCode::EmptyClass, fmt::format("class '{}' has no samples", cls));
        rows_of.emplace(cls, std::move(rows));
    }

    struct Job {
        const GradientSet* grads;
        const std::vector<std::size_t>* rows;
        const Cav* cav;
    };
    std::vector<Job> plan;
    for (const auto& key : groups) {
        for (const auto& cls : target_classes) {
            const auto* g = bundle.find_gradient(key.second, cls);
            if (!g)
                throw Error(ErrorCode::MissingFile,
                            fmt::format("missing gradient file for layer '{}', class '{}'", key.second, cls));
            for (const auto* cav : members[key]) plan.push_back(Job{g, &rows_of.at(cls), cav});
        }
    }

    std::vector<TcavScore> out(plan.size());
    parallel_for(plan.size(), jobs, [&](std::size_t i) { out[i] = tcav_score(*plan[i].grads, *plan[i].rows, *plan[i].cav); });
    return out;
}

std::vector<ScoreSummary> summarize(std::span<const TcavScore> scores) {
    using Key = std::tuple<std::string, std::string, std::string>;
    std::vector<Key> order;
    std::map<Key, std::vector<double>> values;
    for (const auto& s : scores) {
        Key key{s.concept_name, s.target_class, s.layer};
        auto& v = values[key];
        if (v.empty()) order.push_back(key);
        v.push_back(s.score());
    }
    std::vector<ScoreSummary> out;
    for (const auto& key : order) {
        const auto& v = values[key];
        double mean = 0.0;
        for (double x : v) mean += x;
        mean /= static_cast<double>(v.size());
        double ss = 0.0;
        for (double x : v) ss += (x - mean) * (x - mean);
        const double sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
        out.push_back(ScoreSummary{std::get<0>(key), std::get<1>(key), std::get<2>(key), v.size(), mean, sd});
    }
    return out;
}

} // namespace cavkit
