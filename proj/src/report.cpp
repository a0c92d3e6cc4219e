#include "cavkit/report.hpp"

#include "cavkit/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

namespace cavkit {

namespace fs = std::filesystem;

CavRecord record_of(const Cav& cav) {
    return CavRecord{cav.concept_name, cav.layer, cav.repetition, cav.validation_accuracy, cav.n_train, cav.n_val, cav.seed};
}

void check_csv_name(const std::string& name, const char* what) {
    if (name.empty() || name.find_first_of(",\"\r\n") != std::string::npos)
        throw Error(ErrorCode::InvalidArgument, fmt::format("{} name '{}' must be non-empty and free of commas, quotes and newlines", what, name));
}

void write_text_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot open for writing: " + path.string());
    out << text;
    if (!out) throw Error(ErrorCode::Io, "write failed: " + path.string());
}

namespace {

using Row = std::vector<std::string>;

std::vector<Row> read_csv(const fs::path& path, const Row& expected_header) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::MissingFile, "cannot open " + path.string());
    std::vector<Row> rows;
    std::string line;
    bool header = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        Row row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) row.push_back(cell);
        if (line.back() == ',') row.emplace_back();
        if (header) {
            if (row != expected_header)
                throw Error(ErrorCode::Manifest, fmt::format("{}: unexpected header '{}'", path.string(), line));
            header = false;
            continue;
        }
        if (row.size() != expected_header.size())
            throw Error(ErrorCode::Manifest, fmt::format("{}: row has {} cells, expected {}", path.string(), row.size(),
                                                         expected_header.size()));
        rows.push_back(std::move(row));
    }
    if (header) throw Error(ErrorCode::Manifest, path.string() + ": empty CSV file");
    return rows;
}

double to_double(const std::string& s, const fs::path& path) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw Error(ErrorCode::Manifest, fmt::format("{}: '{}' is not a number", path.string(), s));
    }
}

std::uint64_t to_u64(const std::string& s, const fs::path& path) {
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw Error(ErrorCode::Manifest, fmt::format("{}: '{}' is not an unsigned integer", path.string(), s));
    return v;
}

const Row kScoresHeader{"concept", "class", "layer", "repetition", "score", "n_samples"};
const Row kValidationHeader{"concept", "layer", "repetition", "validation_accuracy", "n_train", "n_val", "seed"};
const Row kAccuracyHeader{"concept", "layer", "n", "mean", "std"};
const Row kSummaryHeader{"concept", "class", "layer", "n", "mean", "std"};
const Row kSignificanceHeader{"concept", "class", "layer", "t", "df", "p", "significant"};

std::string header_line(const Row& h) {
    return fmt::format("{}\n", fmt::join(h, ","));
}

} // namespace

void write_scores_csv(const fs::path& path, std::span<const TcavScore> scores) {
    std::string out = header_line(kScoresHeader);
    for (const auto& s : scores)
        out += fmt::format("{},{},{},{},{},{}\n", s.concept_name, s.target_class, s.layer, s.repetition, s.score(), s.n_samples);
    write_text_file(path, out);
}

std::vector<TcavScore> read_scores_csv(const fs::path& path) {
    std::vector<TcavScore> out;
    for (const auto& r : read_csv(path, kScoresHeader)) {
        TcavScore s{r[0], r[1], r[2], to_u64(r[3], path), 0, to_u64(r[5], path)};
        s.positive_count = static_cast<std::size_t>(std::llround(to_double(r[4], path) * static_cast<double>(s.n_samples)));
        out.push_back(std::move(s));
    }
    return out;
}

void write_validation_csv(const fs::path& path, std::span<const CavRecord> records) {
    std::string out = header_line(kValidationHeader);
    for (const auto& r : records)
        out += fmt::format("{},{},{},{},{},{},{}\n", r.concept_name, r.layer, r.repetition, r.validation_accuracy, r.n_train,
                           r.n_val, r.seed);
    write_text_file(path, out);
}

std::vector<CavRecord> read_validation_csv(const fs::path& path) {
    std::vector<CavRecord> out;
    for (const auto& r : read_csv(path, kValidationHeader))
        out.push_back(CavRecord{r[0], r[1], to_u64(r[2], path), to_double(r[3], path), to_u64(r[4], path),
                                to_u64(r[5], path), to_u64(r[6], path)});
    return out;
}

void write_accuracy_csv(const fs::path& path, std::span<const AccuracySummary> rows) {
    std::string out = header_line(kAccuracyHeader);
    for (const auto& r : rows) out += fmt::format("{},{},{},{},{}\n", r.concept_name, r.layer, r.stats.n, r.stats.mean, r.stats.std);
    write_text_file(path, out);
}

std::vector<AccuracySummary> read_accuracy_csv(const fs::path& path) {
    std::vector<AccuracySummary> out;
    for (const auto& r : read_csv(path, kAccuracyHeader))
        out.push_back(AccuracySummary{r[0], r[1], SampleSummary{to_u64(r[2], path), to_double(r[3], path), to_double(r[4], path)}});
    return out;
}

void write_summary_csv(const fs::path& path, std::span<const ScoreSummary> rows) {
    std::string out = header_line(kSummaryHeader);
    for (const auto& r : rows)
        out += fmt::format("{},{},{},{},{},{}\n", r.concept_name, r.target_class, r.layer, r.n, r.mean, r.std);
    write_text_file(path, out);
}

std::vector<ScoreSummary> read_summary_csv(const fs::path& path) {
    std::vector<ScoreSummary> out;
    for (const auto& r : read_csv(path, kSummaryHeader))
        out.push_back(ScoreSummary{r[0], r[1], r[2], to_u64(r[3], path), to_double(r[4], path), to_double(r[5], path)});
    return out;
}

void write_significance_csv(const fs::path& path, std::span<const SignificanceResult> rows) {
    std::string out = header_line(kSignificanceHeader);
    for (const auto& r : rows)
        out += fmt::format("{},{},{},{},{},{},{}\n", r.concept_name, r.target, r.layer, r.t_statistic, r.degrees_of_freedom,
                           r.p_value, r.significant ? "true" : "false");
    write_text_file(path, out);
}

std::vector<SignificanceResult> read_significance_csv(const fs::path& path) {
    std::vector<SignificanceResult> out;
    for (const auto& r : read_csv(path, kSignificanceHeader)) {
        if (r[6] != "true" && r[6] != "false")
            throw Error(ErrorCode::Manifest, fmt::format("{}: significant must be true or false, got '{}'", path.string(), r[6]));
        SignificanceResult s;
        s.concept_name = r[0];
        s.target = r[1];
        s.layer = r[2];
        s.t_statistic = to_double(r[3], path);
        s.degrees_of_freedom = to_double(r[4], path);
        s.p_value = to_double(r[5], path);
        s.significant = r[6] == "true";
        out.push_back(std::move(s));
    }
    return out;
}

void write_ranking_csv(const fs::path& path, const ConceptRanking& ranking) {
    std::string out = "rank,sample_id,projection\n";
    for (std::size_t i = 0; i < ranking.entries.size(); ++i)
        out += fmt::format("{},{},{}\n", i + 1, ranking.entries[i].sample_id, ranking.entries[i].projection);
    write_text_file(path, out);
}

// ---------------------------------------------------------------------------
// SVG

namespace {

std::string escape_xml(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
        }
    }
    return out;
}

struct Bar {
    std::string label;
    double mean = 0.0;
    double std = 0.0;
    bool insignificant = false;
};

constexpr double kPanelWidth = 640;
constexpr double kPanelHeight = 260;
constexpr double kPlotLeft = 60;
constexpr double kPlotTop = 40;
constexpr double kPlotHeight = 170;

// One bar chart on a [0, 1] axis; returns SVG group markup.
std::string bar_panel(const std::string& title, const std::vector<Bar>& bars, const SampleSummary* baseline, double y_offset) {
    const double plot_width = kPanelWidth - kPlotLeft - 20;
    auto y_of = [&](double v) { return y_offset + kPlotTop + kPlotHeight * (1.0 - std::clamp(v, 0.0, 1.0)); };
    std::string g = fmt::format("<g>\n<text x=\"{}\" y=\"{}\" font-size=\"14\" font-weight=\"bold\">{}</text>\n",
                                kPlotLeft, y_offset + 20, escape_xml(title));
    g += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"black\"/>\n", kPlotLeft, y_of(1.0), y_of(0.0));
    g += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"black\"/>\n", kPlotLeft, y_of(0.0),
                     kPlotLeft + plot_width);
    for (double tick : {0.0, 0.25, 0.5, 0.75, 1.0})
        g += fmt::format("<text x=\"{}\" y=\"{}\" font-size=\"10\" text-anchor=\"end\">{:.2f}</text>\n", kPlotLeft - 5,
                         y_of(tick) + 3, tick);
    if (baseline) {
        const double lo = baseline->mean - baseline->std;
        const double hi = baseline->mean + baseline->std;
        g += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"red\" fill-opacity=\"0.15\"/>\n", kPlotLeft,
                         y_of(hi), plot_width, y_of(lo) - y_of(hi));
        g += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"red\" stroke-width=\"1.5\"/>\n", kPlotLeft,
                         y_of(baseline->mean), kPlotLeft + plot_width);
    }
    const double slot = bars.empty() ? plot_width : plot_width / static_cast<double>(bars.size());
    for (std::size_t i = 0; i < bars.size(); ++i) {
        const auto& b = bars[i];
        const double x = kPlotLeft + slot * static_cast<double>(i) + slot * 0.2;
        const double w = slot * 0.6;
        g += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"steelblue\"/>\n", x, y_of(b.mean), w,
                         y_of(0.0) - y_of(b.mean));
        const double cx = x + w / 2;
        g += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"black\"/>\n", cx, y_of(b.mean + b.std),
                         y_of(b.mean - b.std));
        if (b.insignificant)
            g += fmt::format("<text x=\"{}\" y=\"{}\" font-size=\"16\" fill=\"red\" text-anchor=\"middle\">*</text>\n", cx,
                             y_of(b.mean + b.std) - 4);
        g += fmt::format("<text x=\"{}\" y=\"{}\" font-size=\"10\" text-anchor=\"middle\">{}</text>\n", cx, y_of(0.0) + 14,
                         escape_xml(b.label));
    }
    g += "</g>\n";
    return g;
}

} // namespace

std::string render_report_svg(const ReportData& data) {
    std::map<std::tuple<std::string, std::string, std::string>, bool> significant;
    for (const auto& s : data.significance) significant[{s.concept_name, s.target, s.layer}] = s.significant;
    auto insignificant = [&](const std::string& concept_name, const std::string& target, const std::string& layer) {
        const auto it = significant.find({concept_name, target, layer});
        return it != significant.end() && !it->second;
    };

    std::vector<std::string> layers;
    for (const auto& a : data.accuracy)
        if (std::find(layers.begin(), layers.end(), a.layer) == layers.end()) layers.push_back(a.layer);
    for (const auto& t : data.tcav)
        if (std::find(layers.begin(), layers.end(), t.layer) == layers.end()) layers.push_back(t.layer);

    std::string body;
    double y = 0;
    for (const auto& layer : layers) {
        std::vector<Bar> bars;
        const SampleSummary* baseline = nullptr;
        for (const auto& a : data.accuracy) {
            if (a.layer != layer) continue;
            if (a.concept_name == kBaselineConcept) baseline = &a.stats;
            else bars.push_back(Bar{a.concept_name, a.stats.mean, a.stats.std, insignificant(a.concept_name, "accuracy", layer)});
        }
        if (!bars.empty()) {
            body += bar_panel(fmt::format("Validation accuracy ({})", layer), bars, baseline, y);
            y += kPanelHeight;
        }

        std::vector<std::string> classes;
        for (const auto& t : data.tcav)
            if (t.layer == layer && std::find(classes.begin(), classes.end(), t.target_class) == classes.end())
                classes.push_back(t.target_class);
        for (const auto& cls : classes) {
            std::vector<Bar> tb;
            SampleSummary base_stats;
            bool has_base = false;
            for (const auto& t : data.tcav) {
                if (t.layer != layer || t.target_class != cls) continue;
                if (t.concept_name == kBaselineConcept) {
                    base_stats = SampleSummary{t.n, t.mean, t.std};
                    has_base = true;
                } else {
                    tb.push_back(Bar{t.concept_name, t.mean, t.std, insignificant(t.concept_name, cls, layer)});
                }
            }
            body += bar_panel(fmt::format("TCAV scores for class {} ({})", cls, layer), tb, has_base ? &base_stats : nullptr, y);
            y += kPanelHeight;
        }
    }
    return fmt::format("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" font-family=\"sans-serif\">\n"
                       "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{}</svg>\n",
                       kPanelWidth, std::max(y, 1.0), body);
}

std::string render_ranking_svg(const ConceptRanking& ranking, const HeadTail& ends) {
    const double cell = 110;
    const std::size_t n = std::max(ends.top.size(), ends.bottom.size());
    const double width = 140 + cell * static_cast<double>(n);
    std::string body = fmt::format("<text x=\"10\" y=\"20\" font-size=\"14\" font-weight=\"bold\">{} ({})</text>\n",
                                   escape_xml(ranking.concept_name), escape_xml(ranking.layer));
    auto row = [&](const char* label, const std::vector<RankedSample>& items, double y) {
        body += fmt::format("<text x=\"10\" y=\"{}\" font-size=\"12\">{}</text>\n", y + 30, label);
        for (std::size_t i = 0; i < items.size(); ++i) {
            const double x = 130 + cell * static_cast<double>(i);
            body += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"50\" fill=\"#eef\" stroke=\"#336\"/>\n", x, y,
                                cell - 10);
            body += fmt::format("<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\">{}</text>\n", x + (cell - 10) / 2,
                                y + 22, escape_xml(items[i].sample_id));
            body += fmt::format("<text x=\"{}\" y=\"{}\" font-size=\"9\" text-anchor=\"middle\">{:.4f}</text>\n",
                                x + (cell - 10) / 2, y + 38, items[i].projection);
        }
    };
    row("most similar", ends.top, 35);
    row("least similar", ends.bottom, 95);
    return fmt::format("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"160\" font-family=\"sans-serif\">\n"
                       "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{}</svg>\n",
                       width, body);
}

} // namespace cavkit
