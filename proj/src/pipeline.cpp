#include "cavkit/pipeline.hpp"

#include "cavkit/cav_store.hpp"
#include "cavkit/dataset.hpp"
#include "cavkit/parallel.hpp"
#include "cavkit/rng.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

namespace cavkit {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json names_to_json(const std::vector<std::string>& names) {
    return names.empty() ? json("all") : json(names);
}

std::vector<std::string> names_from_json(const json& j, const char* key) {
    if (j.is_string()) {
        if (j.get<std::string>() == "all") return {};
        return {j.get<std::string>()};
    }
    if (!j.is_array()) throw Error(ErrorCode::InvalidArgument, fmt::format("config '{}' must be \"all\" or a list", key));
    return j.get<std::vector<std::string>>();
}

void log(const RunConfig& config, const std::string& msg) {
    if (config.verbose) fmt::print(stderr, "{}\n", msg);
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::MissingFile, "cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string ranking_stem(const std::string& concept_name, const std::string& layer, const std::string& first_layer) {
    return layer == first_layer ? fmt::format("ranking_{}", concept_name) : fmt::format("ranking_{}_{}", concept_name, layer);
}

template <typename Fn>
auto run_stage(const std::string& stage, const RunConfig& config, Fn&& fn) {
    log(config, fmt::format("[{}] ...", stage));
    try {
        return fn();
    } catch (const StageError&) {
        throw;
    } catch (const Error& e) {
        throw StageError(stage, e);
    } catch (const std::exception& e) {
        throw StageError(stage, Error(ErrorCode::Io, e.what()));
    }
}

} // namespace

StageError::StageError(std::string stage, const Error& cause)
    : Error(cause.code(), fmt::format("[{}] {}", stage, cause.what())), stage_(std::move(stage)) {}

RunConfig run_config_from_json(const std::string& json_text, RunConfig base) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::InvalidArgument, fmt::format("config is not valid JSON: {}", e.what()));
    }
    if (!j.is_object()) throw Error(ErrorCode::InvalidArgument, "config must be a JSON object");
    static const std::vector<std::string> known{"manifest_path", "layers", "concepts", "target_classes", "repetitions",
                                                "random_cavs", "random_subset_size", "val_fraction", "alpha",
                                                "master_seed", "output_dir", "jobs", "bonferroni", "class_membership",
                                                "top_n"};
    try {
        for (const auto& [key, value] : j.items()) {
            if (std::find(known.begin(), known.end(), key) == known.end())
                throw Error(ErrorCode::InvalidArgument, fmt::format("unknown config field '{}'", key));
        }
        if (j.contains("manifest_path")) base.manifest_path = j["manifest_path"].get<std::string>();
        if (j.contains("layers")) base.layers = names_from_json(j["layers"], "layers");
        if (j.contains("concepts")) base.concepts = names_from_json(j["concepts"], "concepts");
        if (j.contains("target_classes")) base.target_classes = names_from_json(j["target_classes"], "target_classes");
        if (j.contains("repetitions")) base.repetitions = j["repetitions"].get<std::size_t>();
        if (j.contains("random_cavs")) base.random_cavs = j["random_cavs"].get<std::size_t>();
        if (j.contains("random_subset_size")) base.random_subset_size = j["random_subset_size"].get<std::size_t>();
        if (j.contains("val_fraction")) base.val_fraction = j["val_fraction"].get<double>();
        if (j.contains("alpha")) base.alpha = j["alpha"].get<double>();
        if (j.contains("master_seed")) base.master_seed = j["master_seed"].get<std::uint64_t>();
        if (j.contains("output_dir")) base.output_dir = j["output_dir"].get<std::string>();
        if (j.contains("jobs")) base.jobs = j["jobs"].get<std::size_t>();
        if (j.contains("bonferroni")) base.bonferroni = j["bonferroni"].get<bool>();
        if (j.contains("top_n")) base.top_n = j["top_n"].get<std::size_t>();
        if (j.contains("class_membership")) {
            const auto m = j["class_membership"].get<std::string>();
            if (m == "ground_truth") base.membership = ClassMembership::ground_truth;
            else if (m == "predicted") base.membership = ClassMembership::predicted;
            else throw Error(ErrorCode::InvalidArgument, "class_membership must be ground_truth or predicted");
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidArgument, fmt::format("config field has the wrong type: {}", e.what()));
    }
    return base;
}

std::string run_config_to_json(const RunConfig& c) {
    json j;
    j["manifest_path"] = c.manifest_path.string();
    j["layers"] = names_to_json(c.layers);
    j["concepts"] = names_to_json(c.concepts);
    j["target_classes"] = names_to_json(c.target_classes);
    j["repetitions"] = c.repetitions;
    j["random_cavs"] = c.random_cavs;
    j["random_subset_size"] = c.random_subset_size;
    j["val_fraction"] = c.val_fraction;
    j["alpha"] = c.alpha;
    j["master_seed"] = c.master_seed;
    j["output_dir"] = c.output_dir.string();
    j["jobs"] = c.jobs;
    j["bonferroni"] = c.bonferroni;
    j["class_membership"] = c.membership == ClassMembership::predicted ? "predicted" : "ground_truth";
    j["top_n"] = c.top_n;
    return j.dump(1);
}

void apply_environment(RunConfig& config) {
    const char* seed = std::getenv("CAVKIT_SEED");
    if (!seed || !*seed) return;
    try {
        std::size_t used = 0;
        const auto value = std::stoull(seed, &used);
        if (used != std::string(seed).size()) throw std::invalid_argument(seed);
        config.master_seed = value;
    } catch (const std::exception&) {
        throw Error(ErrorCode::InvalidArgument, fmt::format("CAVKIT_SEED must be an unsigned integer, got '{}'", seed));
    }
}

std::vector<AccuracySummary> accuracy_summaries(std::span<const CavRecord> records) {
    std::vector<std::pair<std::string, std::string>> order;
    std::map<std::pair<std::string, std::string>, std::vector<double>> values;
    std::vector<std::string> layers;
    std::map<std::string, std::vector<double>> random_values;
    for (const auto& r : records) {
        if (std::find(layers.begin(), layers.end(), r.layer) == layers.end()) layers.push_back(r.layer);
        if (r.concept_name.rfind("random_", 0) == 0) {
            random_values[r.layer].push_back(r.validation_accuracy);
            continue;
        }
        auto key = std::make_pair(r.concept_name, r.layer);
        auto& v = values[key];
        if (v.empty()) order.push_back(key);
        v.push_back(r.validation_accuracy);
    }
    std::vector<AccuracySummary> out;
    for (const auto& key : order) out.push_back(AccuracySummary{key.first, key.second, summarize_sample(values[key])});
    for (const auto& layer : layers)
        if (random_values.count(layer)) out.push_back(AccuracySummary{kBaselineConcept, layer, summarize_sample(random_values[layer])});
    return out;
}

std::vector<SignificanceResult> compute_significance(std::span<const TcavScore> scores,
                                                     std::span<const TcavScore> baseline_scores,
                                                     std::span<const CavRecord> records, double alpha, bool bonferroni) {
    // baseline distributions
    std::map<std::string, std::vector<double>> random_acc;                               // layer
    std::map<std::pair<std::string, std::string>, std::vector<double>> random_score;     // (layer, class)
    for (const auto& r : records)
        if (r.concept_name.rfind("random_", 0) == 0) random_acc[r.layer].push_back(r.validation_accuracy);
    for (const auto& s : baseline_scores) random_score[{s.layer, s.target_class}].push_back(s.score());

    // concept distributions, first-seen order
    std::vector<std::pair<std::string, std::string>> groups;
    std::map<std::pair<std::string, std::string>, std::vector<double>> concept_acc;
    for (const auto& r : records) {
        if (r.concept_name.rfind("random_", 0) == 0) continue;
        auto key = std::make_pair(r.concept_name, r.layer);
        auto& v = concept_acc[key];
        if (v.empty()) groups.push_back(key);
        v.push_back(r.validation_accuracy);
    }
    std::map<std::pair<std::string, std::string>, std::vector<std::string>> classes_of;
    std::map<std::tuple<std::string, std::string, std::string>, std::vector<double>> concept_score;
    for (const auto& s : scores) {
        auto key = std::make_pair(s.concept_name, s.layer);
        if (!concept_acc.count(key)) {
            concept_acc[key];
            groups.push_back(key);
        }
        auto& cls = classes_of[key];
        if (std::find(cls.begin(), cls.end(), s.target_class) == cls.end()) cls.push_back(s.target_class);
        concept_score[{s.concept_name, s.target_class, s.layer}].push_back(s.score());
    }

    struct Test {
        std::string concept_name, target, layer;
        const std::vector<double>* values;
        const std::vector<double>* baseline;
    };
    std::vector<Test> tests;
    static const std::vector<double> empty;
    for (const auto& key : groups) {
        const auto& [concept_name, layer] = key;
        if (!concept_acc[key].empty()) {
            const auto it = random_acc.find(layer);
            tests.push_back({concept_name, "accuracy", layer, &concept_acc[key], it == random_acc.end() ? &empty : &it->second});
        }
        for (const auto& cls : classes_of[key]) {
            const auto it = random_score.find({layer, cls});
            tests.push_back({concept_name, cls, layer, &concept_score[{concept_name, cls, layer}],
                             it == random_score.end() ? &empty : &it->second});
        }
    }

    const double effective_alpha = bonferroni && !tests.empty() ? alpha / static_cast<double>(tests.size()) : alpha;
    std::vector<SignificanceResult> out;
    for (const auto& t : tests) {
        if (t.baseline->size() < 2)
            throw Error(ErrorCode::InvalidArgument, fmt::format("significance of '{}' ({}, {}) needs at least 2 random CAVs",
                                                                t.concept_name, t.target, t.layer));
        SignificanceResult r;
        try {
            r = test_concept(*t.values, *t.baseline, effective_alpha);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::DegenerateSample) throw;
            // identical constant distributions: no evidence of a difference
            r.t_statistic = 0.0;
            r.degrees_of_freedom = static_cast<double>(t.values->size() + t.baseline->size() - 2);
            r.p_value = 1.0;
            r.significant = false;
            r.alpha = effective_alpha;
        }
        r.concept_name = t.concept_name;
        r.target = t.target;
        r.layer = t.layer;
        out.push_back(std::move(r));
    }
    return out;
}

RunResult run_pipeline(const RunConfig& config) {
    std::error_code ec;
    fs::create_directories(config.output_dir, ec);
    if (ec) throw StageError("setup", Error(ErrorCode::Io, "cannot create output directory " + config.output_dir.string()));
    const auto sentinel = config.output_dir / "FAILED";
    fs::remove(sentinel, ec);

    try {
        RunResult result;
        const Bundle bundle = run_stage("load", config, [&] {
            if (config.repetitions < 2) throw Error(ErrorCode::InvalidArgument, "repetitions must be at least 2");
            if (config.random_cavs < 2) throw Error(ErrorCode::InvalidArgument, "random_cavs must be at least 2");
            if (config.top_n == 0) throw Error(ErrorCode::InvalidArgument, "top_n must be at least 1");
            if (!(config.alpha > 0.0 && config.alpha < 1.0)) throw Error(ErrorCode::InvalidArgument, "alpha must lie in (0, 1)");
            write_text_file(config.output_dir / "run_config.json", run_config_to_json(config) + "\n");
            return load_bundle(config.manifest_path);
        });

        run_stage("resolve", config, [&] {
            result.layers = config.layers.empty() ? bundle.layers : config.layers;
            for (const auto& l : result.layers) {
                bundle.activation(l);
                check_csv_name(l, "layer");
            }
            if (config.concepts.empty()) {
                for (const auto& name : bundle.dataset.concept_names()) {
                    const auto& labels = bundle.dataset.concept_labels.at(name);
                    const auto pos = std::count(labels.begin(), labels.end(), ConceptLabel::present);
                    const auto neg = std::count(labels.begin(), labels.end(), ConceptLabel::absent);
                    if (pos >= 2 && neg >= 2) result.concepts.push_back(name);
                    else log(config, fmt::format("[resolve] skipping untrainable concept '{}'", name));
                }
            } else {
                result.concepts = config.concepts;
                for (const auto& c : result.concepts)
                    if (!bundle.dataset.has_concept(c)) throw Error(ErrorCode::UnknownConcept, "unknown concept '" + c + "'");
            }
            for (const auto& c : result.concepts) {
                check_csv_name(c, "concept");
                if (c == kBaselineConcept || c.rfind("random_", 0) == 0)
                    throw Error(ErrorCode::InvalidArgument, fmt::format("concept name '{}' is reserved for random baselines", c));
            }
            if (config.target_classes.empty()) {
                for (const auto& cls : bundle.classes)
                    if (!class_rows(bundle, cls, config.membership).empty()) result.classes.push_back(cls);
            } else {
                result.classes = config.target_classes;
                for (const auto& cls : result.classes)
                    if (std::find(bundle.classes.begin(), bundle.classes.end(), cls) == bundle.classes.end())
                        throw Error(ErrorCode::UnknownClass, "unknown class '" + cls + "'");
            }
            for (const auto& cls : result.classes) check_csv_name(cls, "class");
            if (result.concepts.empty()) throw Error(ErrorCode::NotTrainable, "no trainable concepts to analyse");
            return 0;
        });

        CavTrainingConfig training;
        training.val_fraction = config.val_fraction;
        training.jobs = config.jobs;
        const auto cav_root = config.output_dir / "cavs";

        run_stage("train", config, [&] {
            for (const auto& layer : result.layers) {
                const auto& acts = bundle.activation(layer);
                for (const auto& concept_name : result.concepts) {
                    auto cavs = train_concept_cavs(acts, bundle.dataset, concept_name, config.repetitions, training, config.master_seed);
                    log(config, fmt::format("[train] {} / {}: {} CAVs", concept_name, layer, cavs.size()));
                    for (auto& c : cavs) result.concept_cavs.push_back(std::move(c));
                }
            }
            for (const auto& c : result.concept_cavs) save_cav(c, cav_root);
            return 0;
        });

        run_stage("baseline", config, [&] {
            const auto subsets = random_concept_subsets(bundle.random_pool, config.random_subset_size, config.random_cavs,
                                                        derive_seed(config.master_seed, "random_baseline"));
            CavTrainingConfig single = training;
            single.jobs = 1;
            for (const auto& layer : result.layers) {
                const auto& acts = bundle.activation(layer);
                std::vector<Cav> layer_cavs(subsets.size());
                parallel_for(subsets.size(), config.jobs, [&](std::size_t i) {
                    const auto name = random_concept_name(i);
                    auto cavs = train_concept_cavs(acts, subsets[i], name, 1, single, config.master_seed);
                    layer_cavs[i] = std::move(cavs.front());
                });
                log(config, fmt::format("[baseline] {}: {} random CAVs", layer, layer_cavs.size()));
                for (auto& c : layer_cavs) result.random_cavs.push_back(std::move(c));
            }
            for (const auto& c : result.random_cavs) save_cav(c, cav_root);
            return 0;
        });

        run_stage("score", config, [&] {
            result.scores = score_all(bundle, result.concept_cavs, result.classes, config.membership, config.jobs);
            result.baseline_scores = score_all(bundle, result.random_cavs, result.classes, config.membership, config.jobs);
            result.tcav_summary = summarize(result.scores);
            for (auto s : summarize(result.baseline_scores)) {
                if (std::none_of(result.tcav_summary.begin(), result.tcav_summary.end(), [&](const ScoreSummary& x) {
                        return x.concept_name == kBaselineConcept && x.layer == s.layer && x.target_class == s.target_class;
                    })) {
                    // collapse random_i rows into one baseline row per (class, layer)
                    std::vector<double> v;
                    for (const auto& b : result.baseline_scores)
                        if (b.layer == s.layer && b.target_class == s.target_class) v.push_back(b.score());
                    const auto st = summarize_sample(v);
                    result.tcav_summary.push_back(ScoreSummary{kBaselineConcept, s.target_class, s.layer, st.n, st.mean, st.std});
                }
            }
            return 0;
        });

        std::vector<CavRecord> records;
        for (const auto& c : result.concept_cavs) records.push_back(record_of(c));
        for (const auto& c : result.random_cavs) records.push_back(record_of(c));

        run_stage("significance", config, [&] {
            result.accuracy = accuracy_summaries(records);
            result.significance = compute_significance(result.scores, result.baseline_scores, records, config.alpha, config.bonferroni);
            return 0;
        });

        run_stage("write", config, [&] {
            write_scores_csv(config.output_dir / "scores.csv", result.scores);
            write_scores_csv(config.output_dir / "baseline_scores.csv", result.baseline_scores);
            write_validation_csv(config.output_dir / "validation.csv", records);
            write_accuracy_csv(config.output_dir / "accuracy.csv", result.accuracy);
            write_summary_csv(config.output_dir / "tcav_summary.csv", result.tcav_summary);
            write_significance_csv(config.output_dir / "significance.csv", result.significance);
            return 0;
        });

        run_stage("rank", config, [&] {
            for (const auto& layer : result.layers) {
                const auto& acts = bundle.activation(layer);
                for (const auto& concept_name : result.concepts) {
                    std::vector<Cav> cavs;
                    for (const auto& c : result.concept_cavs)
                        if (c.concept_name == concept_name && c.layer == layer) cavs.push_back(c);
                    auto ranking = rank_by_concept(acts, select_ranking_cav(cavs));
                    const auto stem = ranking_stem(concept_name, layer, result.layers.front());
                    write_ranking_csv(config.output_dir / (stem + ".csv"), ranking);
                    const std::size_t n = std::min(config.top_n, ranking.entries.size() / 2);
                    if (n > 0) write_text_file(config.output_dir / (stem + ".svg"), render_ranking_svg(ranking, head_tail(ranking, n)));
                    result.rankings.push_back(std::move(ranking));
                }
            }
            return 0;
        });

        run_stage("report", config, [&] {
            write_text_file(config.output_dir / "report.svg",
                            render_report_svg(ReportData{result.accuracy, result.tcav_summary, result.significance}));
            return 0;
        });
        return result;
    } catch (const StageError& e) {
        std::ofstream(sentinel) << e.what() << '\n';
        throw;
    }
}

std::vector<SignificanceResult> recompute_significance(const fs::path& run_dir, double alpha, bool bonferroni) {
    const auto scores = read_scores_csv(run_dir / "scores.csv");
    const auto baseline = read_scores_csv(run_dir / "baseline_scores.csv");
    const auto records = read_validation_csv(run_dir / "validation.csv");
    auto result = compute_significance(scores, baseline, records, alpha, bonferroni);
    write_significance_csv(run_dir / "significance.csv", result);
    return result;
}

void render_report(const fs::path& run_dir) {
    ReportData data{read_accuracy_csv(run_dir / "accuracy.csv"), read_summary_csv(run_dir / "tcav_summary.csv"),
                    read_significance_csv(run_dir / "significance.csv")};
    write_text_file(run_dir / "report.svg", render_report_svg(data));
}

RankOutput rank_concept(const RankRequest& request) {
    if (request.top_n == 0) throw Error(ErrorCode::InvalidArgument, "--top must be at least 1");
    const auto config_path = request.run_dir / "run_config.json";
    RunConfig run = fs::exists(config_path) ? run_config_from_json(read_text(config_path)) : RunConfig{};
    const auto manifest = request.manifest_path.value_or(run.manifest_path);
    if (manifest.empty())
        throw Error(ErrorCode::InvalidArgument, "no manifest given and the run directory has no run_config.json");
    const auto cav_root = request.run_dir / "cavs";
    if (!fs::is_directory(cav_root))
        throw Error(ErrorCode::MissingCavStore, "no CAV store at " + cav_root.string());

    const Bundle bundle = load_bundle(manifest);
    const auto& run_layers = run.layers.empty() ? bundle.layers : run.layers;
    const std::string layer = request.layer.value_or(run_layers.front());
    const auto cavs = load_cavs(cav_root, request.concept_name, layer);

    RankOutput out;
    out.ranking = rank_by_concept(bundle.activation(layer), select_ranking_cav(cavs));
    out.ends = head_tail(out.ranking, request.top_n);
    const auto stem = ranking_stem(request.concept_name, layer, run_layers.front());
    out.csv_path = request.run_dir / (stem + ".csv");
    out.svg_path = request.run_dir / (stem + ".svg");
    write_ranking_csv(out.csv_path, out.ranking);
    write_text_file(out.svg_path, render_ranking_svg(out.ranking, out.ends));
    return out;
}

} // namespace cavkit
