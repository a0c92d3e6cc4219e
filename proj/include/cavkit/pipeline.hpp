#pragma once

#include "cavkit/bundle.hpp"
#include "cavkit/error.hpp"
#include "cavkit/linear_cav.hpp"
#include "cavkit/ranking.hpp"
#include "cavkit/report.hpp"
#include "cavkit/stats.hpp"
#include "cavkit/tcav.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace cavkit {

/// Settings of a full analysis run. Empty name lists mean "all".
struct RunConfig {
    std::filesystem::path manifest_path;
    std::vector<std::string> layers;
    std::vector<std::string> concepts;
    std::vector<std::string> target_classes;
    std::size_t repetitions = kDefaultRepetitions;
    std::size_t random_cavs = 50;
    std::size_t random_subset_size = 1000;
    double val_fraction = 0.2;
    double alpha = kDefaultAlpha;
    std::uint64_t master_seed = 7;
    std::filesystem::path output_dir = "cavkit_out";
    std::size_t jobs = 1;
    bool bonferroni = false;
    ClassMembership membership = ClassMembership::ground_truth;
    std::size_t top_n = kDefaultHeadTail;
    bool verbose = false;
};

/// Applies the fields present in a JSON object (RunConfig field names) onto `base`.
RunConfig run_config_from_json(const std::string& json_text, RunConfig base = {});
std::string run_config_to_json(const RunConfig& config);

/// CAVKIT_SEED, when set, replaces master_seed.
void apply_environment(RunConfig& config);

/// An error tagged with the pipeline stage that raised it.
class StageError : public Error {
public:
    StageError(std::string stage, const Error& cause);
    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

struct RunResult {
    std::vector<std::string> layers;
    std::vector<std::string> concepts;
    std::vector<std::string> classes;
    std::vector<Cav> concept_cavs;
    std::vector<Cav> random_cavs;
    std::vector<TcavScore> scores;
    std::vector<TcavScore> baseline_scores;
    std::vector<AccuracySummary> accuracy;
    std::vector<ScoreSummary> tcav_summary; // concept rows, then baseline rows
    std::vector<SignificanceResult> significance;
    std::vector<ConceptRanking> rankings;
};

/// Trains concept and random CAVs, scores them, tests significance, ranks
/// samples and writes every artifact into config.output_dir. On failure a
/// FAILED sentinel is written and a StageError is thrown.
RunResult run_pipeline(const RunConfig& config);

/// Per (concept, layer): accuracy vs random accuracies, then each class's TCAV
/// scores vs random scores. Bonferroni divides alpha by the number of tests.
std::vector<SignificanceResult> compute_significance(std::span<const TcavScore> scores,
                                                     std::span<const TcavScore> baseline_scores,
                                                     std::span<const CavRecord> records, double alpha, bool bonferroni);

/// Mean/std of accuracy per (concept, layer) plus one "random" row per layer.
std::vector<AccuracySummary> accuracy_summaries(std::span<const CavRecord> records);

/// Recomputes significance.csv in an existing run directory.
std::vector<SignificanceResult> recompute_significance(const std::filesystem::path& run_dir, double alpha, bool bonferroni);

/// Re-renders report.svg from the CSVs of a run directory.
void render_report(const std::filesystem::path& run_dir);

struct RankRequest {
    std::filesystem::path run_dir;
    std::string concept_name;
    std::optional<std::string> layer;                  // defaults to the run's first layer
    std::optional<std::filesystem::path> manifest_path; // defaults to the run's manifest
    std::size_t top_n = kDefaultHeadTail;
};

struct RankOutput {
    ConceptRanking ranking;
    HeadTail ends;
    std::filesystem::path csv_path;
    std::filesystem::path svg_path;
};

/// Ranks with the stored CAV of highest validation accuracy; writes
/// ranking_<concept>.csv and .svg into the run directory.
RankOutput rank_concept(const RankRequest& request);

} // namespace cavkit
