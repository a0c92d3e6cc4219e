#pragma once

#include "cavkit/linear_cav.hpp"
#include "cavkit/ranking.hpp"
#include "cavkit/stats.hpp"
#include "cavkit/tcav.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace cavkit {

/// Per-CAV training record (one row of validation.csv).
struct CavRecord {
    std::string concept_name;
    std::string layer;
    std::size_t repetition = 0;
    double validation_accuracy = 0.0;
    std::size_t n_train = 0;
    std::size_t n_val = 0;
    std::uint64_t seed = 0;
};

CavRecord record_of(const Cav& cav);

/// Mean/std of validation accuracy for one (concept, layer); concept "random" is the baseline.
struct AccuracySummary {
    std::string concept_name;
    std::string layer;
    SampleSummary stats;
};

inline constexpr const char* kBaselineConcept = "random";

// CSV files. Names are validated to be free of commas, quotes and newlines.
void write_scores_csv(const std::filesystem::path& path, std::span<const TcavScore> scores);
std::vector<TcavScore> read_scores_csv(const std::filesystem::path& path);
void write_validation_csv(const std::filesystem::path& path, std::span<const CavRecord> records);
std::vector<CavRecord> read_validation_csv(const std::filesystem::path& path);
void write_accuracy_csv(const std::filesystem::path& path, std::span<const AccuracySummary> rows);
std::vector<AccuracySummary> read_accuracy_csv(const std::filesystem::path& path);
void write_summary_csv(const std::filesystem::path& path, std::span<const ScoreSummary> rows);
std::vector<ScoreSummary> read_summary_csv(const std::filesystem::path& path);
void write_significance_csv(const std::filesystem::path& path, std::span<const SignificanceResult> rows);
std::vector<SignificanceResult> read_significance_csv(const std::filesystem::path& path);
void write_ranking_csv(const std::filesystem::path& path, const ConceptRanking& ranking);

/// Throws InvalidArgument for names that cannot be written to CSV unquoted.
void check_csv_name(const std::string& name, const char* what);

struct ReportData {
    std::vector<AccuracySummary> accuracy;
    std::vector<ScoreSummary> tcav; // includes baseline rows with concept "random"
    std::vector<SignificanceResult> significance;
};

/// Bar charts of validation accuracy and TCAV scores: random baseline as a red
/// line with a shaded +-1 std band, red asterisks over insignificant bars.
std::string render_report_svg(const ReportData& data);

/// Head and tail sample ids of a ranking as a two-row strip.
std::string render_ranking_svg(const ConceptRanking& ranking, const HeadTail& ends);

void write_text_file(const std::filesystem::path& path, const std::string& text);

} // namespace cavkit
