// Acceptance gate: one PASS/FAIL line per primary criterion, nonzero exit if any fails.
// usage: acceptance <cavkit binary> <work dir>

#include "cavkit/bundle.hpp"
#include "cavkit/dataset.hpp"
#include "cavkit/linear_cav.hpp"
#include "cavkit/pipeline.hpp"
#include "cavkit/rng.hpp"
#include "cavkit/stats.hpp"
#include "cavkit/tcav.hpp"
#include "cavkit/toynet.hpp"

#include "oracles/finite_difference.hpp"
#include "oracles/npy_reader.hpp"
#include "oracles/student_t.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace fs = std::filesystem;
using namespace cavkit;
using nlohmann::json;

namespace {

constexpr double kAlpha = 0.05;
constexpr std::size_t kRepetitions = 20;
constexpr std::size_t kRandomCavs = 50;
constexpr std::size_t kRandomSubset = 1000;
constexpr double kMaxRuntimeSeconds = 120.0;
constexpr std::size_t kScoreCases = 1000;
constexpr double kPValueTolerance = 1e-6;
constexpr std::size_t kGradientProbes = 100;
constexpr double kFdEpsilon = 1e-3;
constexpr double kFdTolerance = 1e-3;
constexpr std::size_t kSignSeeds = 20;
constexpr std::size_t kSignSeedsRequired = 18;
constexpr double kPlantedAccuracy = 0.9;
constexpr double kRandomBandHalfWidth = 0.1;
constexpr std::size_t kHeadTail = 5;
constexpr std::size_t kHeadTailRequired = 4;

int failures = 0;

void report(const char* name, bool pass, const std::string& detail) {
    fmt::print("[{}] {}: {}\n", pass ? "PASS" : "FAIL", name, detail);
    std::fflush(stdout);
    if (!pass) ++failures;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int run_cli(const std::string& cli, const std::string& args) {
    const std::string cmd = fmt::format("\"{}\" {} > /dev/null", cli, args);
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

struct Truth {
    std::vector<std::string> classes;
    std::vector<std::string> sample_ids;
    struct Concept {
        std::string name;
        std::map<std::string, int> effect;
        std::vector<int> flags;
        bool null() const {
            return std::all_of(effect.begin(), effect.end(), [](const auto& kv) { return kv.second == 0; });
        }
    };
    std::vector<Concept> concepts;
};

Truth read_truth(const fs::path& p) {
    const auto j = json::parse(slurp(p));
    Truth t;
    t.classes = j["classes"].get<std::vector<std::string>>();
    t.sample_ids = j["sample_ids"].get<std::vector<std::string>>();
    for (const auto& c : j["concepts"])
        t.concepts.push_back({c["name"], c["class_effect"].get<std::map<std::string, int>>(), c["flags"].get<std::vector<int>>()});
    return t;
}

const ScoreSummary* find_summary(const std::vector<ScoreSummary>& rows, const std::string& c, const std::string& cls) {
    for (const auto& r : rows)
        if (r.concept_name == c && r.target_class == cls) return &r;
    return nullptr;
}

const SignificanceResult* find_sig(const std::vector<SignificanceResult>& rows, const std::string& c, const std::string& target) {
    for (const auto& r : rows)
        if (r.concept_name == c && r.target == target) return &r;
    return nullptr;
}

std::vector<std::string> csv_files(const fs::path& dir) {
    std::vector<std::string> out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.path().extension() == ".csv") out.push_back(e.path().filename().string());
    std::sort(out.begin(), out.end());
    return out;
}

// ---------------------------------------------------------------------------

void protocol_fidelity(const std::string& cli, const fs::path& manifest, const fs::path& run_dir) {
    const auto t0 = std::chrono::steady_clock::now();
    const int rc = run_cli(cli, fmt::format("run --manifest \"{}\" --out \"{}\"", manifest.string(), run_dir.string()));
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (rc != 0) {
        report("protocol fidelity", false, fmt::format("default run exited with status {}", rc));
        return;
    }
    std::vector<std::string> problems;
    const auto bundle = load_bundle(manifest);
    const auto records = read_validation_csv(run_dir / "validation.csv");
    const auto layer = bundle.layers.front();

    std::size_t concepts = 0, random_dirs = 0;
    for (const auto& e : fs::directory_iterator(run_dir / "cavs")) {
        const auto name = e.path().filename().string();
        std::size_t n = 0;
        for (const auto& f : fs::directory_iterator(e.path() / layer)) n += f.path().extension() == ".json";
        if (name.rfind("random_", 0) == 0) {
            ++random_dirs;
            if (n != 1) problems.push_back(fmt::format("{} has {} CAVs", name, n));
        } else {
            ++concepts;
            if (n != kRepetitions) problems.push_back(fmt::format("concept {} has {} CAVs", name, n));
        }
    }
    if (concepts != bundle.dataset.concept_names().size()) problems.push_back(fmt::format("{} concept stores", concepts));
    if (random_dirs != kRandomCavs) problems.push_back(fmt::format("{} random CAVs", random_dirs));
    if (records.size() != concepts * kRepetitions + kRandomCavs) problems.push_back(fmt::format("{} validation rows", records.size()));

    // the random CAVs were trained on 1000-sample subsets
    const auto cfg = run_config_from_json(slurp(run_dir / "run_config.json"));
    const auto subsets = random_concept_subsets(bundle.random_pool, cfg.random_subset_size, cfg.random_cavs,
                                                derive_seed(cfg.master_seed, "random_baseline"));
    for (const auto& r : records) {
        if (r.concept_name.rfind("random_", 0) != 0) continue;
        const auto& ds = subsets.at(std::stoul(r.concept_name.substr(7)));
        const auto view = binary_view(ds, r.concept_name);
        if (ds.size() != kRandomSubset || r.n_train + r.n_val != 2 * std::min(view.positives.size(), view.negatives.size()))
            problems.push_back(r.concept_name + " not drawn from a 1000-sample subset");
    }

    // two-sided Welch p-values thresholded at alpha
    const auto sig = read_significance_csv(run_dir / "significance.csv");
    if (cfg.alpha != kAlpha) problems.push_back(fmt::format("alpha {}", cfg.alpha));
    if (sig.size() != concepts * (1 + bundle.classes.size())) problems.push_back(fmt::format("{} significance rows", sig.size()));
    for (const auto& s : sig) {
        if (s.significant != (s.p_value < kAlpha)) problems.push_back("significance flag disagrees with p < 0.05");
        if (std::isfinite(s.t_statistic) && std::abs(s.p_value - oracle::two_sided_p(s.t_statistic, s.degrees_of_freedom, 200000)) > 1e-6)
            problems.push_back(fmt::format("{}/{} p is not two-sided", s.concept_name, s.target));
    }
    if (seconds >= kMaxRuntimeSeconds) problems.push_back(fmt::format("runtime {:.1f}s", seconds));
    report("protocol fidelity", problems.empty(),
           problems.empty() ? fmt::format("{} concepts x {} CAVs, {} random CAVs on {}-sample subsets, alpha {}, "
                                          "{} significance rows, runtime {:.1f}s",
                                          concepts, kRepetitions, random_dirs, kRandomSubset, kAlpha, sig.size(), seconds)
                            : problems.front() + fmt::format(" ({} problems)", problems.size()));
}

void tcav_score_oracle() {
    // dyadic values keep every product and sum exact, so the sign of each
    // sensitivity is decided without rounding
    Rng rng(20240601);
    std::size_t mismatches = 0, zeros = 0;
    for (std::size_t c = 0; c < kScoreCases; ++c) {
        const std::size_t n = 1 + rng.below(16), d = 1 + rng.below(8);
        std::vector<long> gi(n * d), si(d), vi(d);
        std::vector<float> g(n * d), v(d);
        Cav cav;
        cav.standardizer = Standardizer::identity(d);
        for (std::size_t j = 0; j < d; ++j) {
            si[j] = 1 + static_cast<long>(rng.below(8));         // std = si / 4
            vi[j] = static_cast<long>(rng.below(33)) - 16;       // direction = vi / 16
            cav.standardizer.std[j] = static_cast<double>(si[j]) / 4.0;
            v[j] = static_cast<float>(vi[j]) / 16.0f;
        }
        for (std::size_t i = 0; i < n * d; ++i) {
            gi[i] = static_cast<long>(rng.below(17)) - 8;        // grad = gi / 8
            g[i] = static_cast<float>(gi[i]) / 8.0f;
        }
        cav.direction = v;
        GradientSet grads;
        grads.tensor = Tensor({n, d}, g);
        std::vector<std::size_t> rows(n);
        std::iota(rows.begin(), rows.end(), std::size_t{0});
        const auto s = tcav_score(grads, rows, cav);

        long count = 0;
        for (std::size_t i = 0; i < n; ++i) {
            long dot = 0;
            for (std::size_t j = 0; j < d; ++j) dot += gi[i * d + j] * si[j] * vi[j];
            count += dot > 0;
            zeros += dot == 0;
        }
        // score() == count / n as reduced rationals
        const long num = static_cast<long>(s.positive_count), den = static_cast<long>(s.n_samples);
        if (num * static_cast<long>(n) != count * den || den != static_cast<long>(n) ||
            s.score() != static_cast<double>(count) / static_cast<double>(n))
            ++mismatches;
    }
    report("TCAV score oracle", mismatches == 0,
           fmt::format("{} random cases (n <= 16, {} zero sensitivities), {} mismatches", kScoreCases, zeros, mismatches));
}

void t_test_oracle() {
    double worst = 0.0;
    std::size_t points = 0;
    for (double df : {1.0, 2.0, 5.0, 10.0, 30.0, 68.0})
        for (double t : {0.1, 0.25, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 4.0, 5.0}) {
            worst = std::max(worst, std::abs(student_t_sf(t, df) - oracle::two_sided_p(t, df)));
            ++points;
        }
    // Welch p-values on drawn samples, checked at their own (t, df)
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> a(20), b(50);
        for (auto& x : a) x = 0.5 + 0.1 * rng.normal() + 0.05 * trial / 20.0;
        for (auto& x : b) x = 0.5 + 0.15 * rng.normal();
        const auto w = welch_t_test(a, b);
        worst = std::max(worst, std::abs(w.p - oracle::two_sided_p(w.t, w.df)));
        ++points;
    }
    bool centre = true;
    for (double df : {1.0, 2.0, 5.0, 10.0, 30.0, 68.0, 1e6}) centre &= student_t_sf(0.0, df) == 1.0;
    const std::vector<double> same{0.3, 0.5, 0.9};
    centre &= welch_t_test(same, same).p == 1.0;
    report("t-test oracle", worst <= kPValueTolerance && centre,
           fmt::format("{} points, max |p - oracle| = {:.2e} (tol {:.0e}), t=0 gives p=1 exactly: {}", points, worst,
                       kPValueTolerance, centre ? "yes" : "no"));
}

void gradient_check(const fs::path& bundle_dir) {
    const auto net = toy::load_net(bundle_dir / "toynet.json");
    const auto images = read_tensor(bundle_dir / "images.npy");
    double worst = 0.0;
    std::string detail;
    for (const char* layer : {toy::kHiddenLayer, toy::kConvLayer}) {
        const auto r = oracle::check_layer_gradient(net, images, layer, kGradientProbes, kFdEpsilon, 31);
        worst = std::max(worst, r.max_rel_error);
        detail += fmt::format("{} {:.1e}, ", layer, r.max_rel_error);
    }
    // rows of the exported gradient files
    const auto bundle = load_bundle(bundle_dir / "bundle.json");
    Rng rng(77);
    double exported = 0.0;
    for (std::size_t p = 0; p < kGradientProbes; ++p) {
        const auto& g = bundle.gradients[rng.below(bundle.gradients.size())];
        const std::size_t k = static_cast<std::size_t>(
            std::find(bundle.classes.begin(), bundle.classes.end(), g.target_class) - bundle.classes.begin());
        const std::size_t i = rng.below(images.rows());
        auto act = net.layer_activation(images.row(i), g.layer_name);
        const std::size_t j = rng.below(act.size());
        const double x0 = act[j];
        act[j] = x0 + kFdEpsilon;
        const double up = net.logits_from(g.layer_name, act)[k];
        act[j] = x0 - kFdEpsilon;
        const double down = net.logits_from(g.layer_name, act)[k];
        exported = std::max(exported, oracle::relative_error((up - down) / (2 * kFdEpsilon), g.tensor.row(i)[j]));
    }
    std::vector<std::size_t> labels(images.rows());
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = i % net.n_classes();
    const auto params = oracle::check_parameter_gradient(net, images, labels, kGradientProbes, kFdEpsilon, 41);
    worst = std::max({worst, exported, params.max_rel_error});
    report("gradient check", worst < kFdTolerance,
           fmt::format("{} probes each, eps {:.0e}, max relative error: {}exported rows {:.1e}, parameters {:.1e} "
                       "({} draws straddling a ReLU kink redrawn) (tol {:.0e})",
                       kGradientProbes, kFdEpsilon, detail, exported, params.max_rel_error, params.kinks_skipped, kFdTolerance));
}

void sign_recovery(const fs::path& manifest, const Truth& truth, const fs::path& work) {
    std::size_t passing = 0;
    std::map<std::string, std::size_t> failed_conditions;
    for (std::size_t seed = 1; seed <= kSignSeeds; ++seed) {
        RunConfig cfg;
        cfg.manifest_path = manifest;
        cfg.master_seed = seed;
        cfg.output_dir = work / fmt::format("seed_{}", seed);
        const auto result = run_pipeline(cfg);
        bool ok = true;
        auto require = [&](bool cond, const std::string& what) {
            if (!cond) {
                ok = false;
                ++failed_conditions[what];
            }
        };
        for (const auto& c : truth.concepts) {
            if (c.null()) {
                for (const auto& cls : truth.classes) {
                    const auto* s = find_sig(result.significance, c.name, cls);
                    require(s && !s->significant, fmt::format("{}/{} not significant", c.name, cls));
                }
                continue;
            }
            for (const auto& [cls, effect] : c.effect) {
                if (effect == 0) continue;
                const auto* m = find_summary(result.tcav_summary, c.name, cls);
                const auto* s = find_sig(result.significance, c.name, cls);
                const bool side = m && (effect > 0 ? m->mean > 0.5 : m->mean < 0.5);
                require(side && s && s->significant, fmt::format("{}/{} {} 0.5 and significant", c.name, cls, effect > 0 ? ">" : "<"));
            }
        }
        passing += ok;
        fs::remove_all(cfg.output_dir);
    }
    std::string detail = fmt::format("{}/{} master seeds satisfy every sign condition (need {})", passing, kSignSeeds, kSignSeedsRequired);
    for (const auto& [what, n] : failed_conditions) detail += fmt::format("; '{}' failed in {}", what, n);
    report("end-to-end sign recovery", passing >= kSignSeedsRequired, detail);
}

void probe_sanity(const fs::path& manifest, const fs::path& run_dir) {
    const auto accuracy = read_accuracy_csv(run_dir / "accuracy.csv");
    bool ok = true;
    std::string detail;
    for (const auto& a : accuracy) {
        if (a.concept_name == "random") continue;
        ok &= a.stats.mean > kPlantedAccuracy;
        detail += fmt::format("{} {:.3f}, ", a.concept_name, a.stats.mean);
    }
    // the same concepts with their labels permuted
    const auto bundle = load_bundle(manifest);
    const auto& acts = bundle.activation(bundle.layers.front());
    for (const auto& name : bundle.dataset.concept_names()) {
        ConceptDataset ds = bundle.dataset;
        auto& labels = ds.concept_labels.at(name);
        Rng rng(derive_seed(99, name));
        rng.shuffle(std::span(labels));
        const auto cavs = train_concept_cavs(acts, ds, name, kRepetitions, CavTrainingConfig{}, 7);
        double mean = 0.0;
        for (const auto& c : cavs) mean += c.validation_accuracy / static_cast<double>(cavs.size());
        ok &= std::abs(mean - 0.5) <= kRandomBandHalfWidth;
        detail += fmt::format("permuted {} {:.3f}, ", name, mean);
    }
    for (const auto& a : accuracy)
        if (a.concept_name == "random") {
            ok &= std::abs(a.stats.mean - 0.5) <= kRandomBandHalfWidth;
            detail += fmt::format("random baseline {:.3f}", a.stats.mean);
        }
    report("probe sanity", ok, detail + fmt::format(" (planted > {}, permuted within 0.5 +- {})", kPlantedAccuracy, kRandomBandHalfWidth));
}

void ranking_ground_truth(const fs::path& run_dir, const Truth& truth) {
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < truth.sample_ids.size(); ++i) index[truth.sample_ids[i]] = i;
    bool ok = true;
    std::string detail;
    for (const auto& c : truth.concepts) {
        std::vector<std::string> ids;
        std::istringstream in(slurp(run_dir / fmt::format("ranking_{}.csv", c.name)));
        std::string line;
        std::getline(in, line);
        while (std::getline(in, line)) {
            const auto a = line.find(','), b = line.find(',', a + 1);
            ids.push_back(line.substr(a + 1, b - a - 1));
        }
        std::size_t top = 0, bottom = 0;
        for (std::size_t i = 0; i < kHeadTail; ++i) {
            top += c.flags[index.at(ids[i])] == 1;
            bottom += c.flags[index.at(ids[ids.size() - 1 - i])] == 0;
        }
        ok &= top >= kHeadTailRequired && bottom >= kHeadTailRequired;
        detail += fmt::format("{} top {}/5 bottom {}/5; ", c.name, top, bottom);
    }
    report("ranking ground truth", ok, detail + fmt::format("need >= {} each", kHeadTailRequired));
}

void determinism(const std::string& cli, const fs::path& manifest, const fs::path& first, const fs::path& work) {
    const auto second = work / "run_jobs4";
    const int rc = run_cli(cli, fmt::format("run --manifest \"{}\" --jobs 4 --out \"{}\"", manifest.string(), second.string()));
    const auto files = csv_files(first);
    std::vector<std::string> differing;
    if (rc != 0 || csv_files(second) != files) differing.push_back("file set");
    for (const auto& f : files)
        if (slurp(first / f) != slurp(second / f)) differing.push_back(f);
    report("determinism", differing.empty(),
           differing.empty() ? fmt::format("{} CSVs byte-identical between --jobs 1 and --jobs 4", files.size())
                             : "differs: " + differing.front());
}

void format_conformance(const fs::path& bundle_dir, const fs::path& work) {
    std::size_t round_trips = 0, bad = 0;
    Rng rng(3);
    for (int i = 0; i < 200; ++i) {
        std::vector<std::size_t> shape(1 + rng.below(4));
        for (auto& s : shape) s = 1 + rng.below(7);
        Tensor t(shape);
        for (auto& v : t.data()) {
            std::uint32_t bits = static_cast<std::uint32_t>(rng.next_u64());
            std::memcpy(&v, &bits, 4);
            if (!std::isfinite(v)) v = -0.0f;
        }
        const auto path = work / "rt.npy";
        write_tensor(t, path);
        const auto back = read_tensor(path);
        const auto ref = oracle::read_npy(path.string());
        const bool same = back.shape() == t.shape() && std::memcmp(back.data().data(), t.data().data(), t.size() * 4) == 0;
        const bool ref_ok = ref && ref->descr == "<f4" && !ref->fortran_order && ref->shape == t.shape() &&
                            ref->header_block % 64 == 0 &&
                            std::memcmp(ref->values.data(), t.data().data(), t.size() * 4) == 0;
        bad += !(same && ref_ok);
        ++round_trips;
    }
    std::size_t files = 0;
    for (const auto& e : fs::directory_iterator(bundle_dir)) {
        if (e.path().extension() != ".npy") continue;
        const auto ours = read_tensor(e.path());
        const auto ref = oracle::read_npy(e.path().string());
        const bool ok = ref && ref->descr == "<f4" && !ref->fortran_order && ref->shape == ours.shape() &&
                        ref->header_block % 64 == 0 &&
                        std::memcmp(ref->values.data(), ours.data().data(), ours.size() * 4) == 0;
        bad += !ok;
        ++files;
    }
    report("format conformance", bad == 0 && files > 0,
           fmt::format("{} random tensors round-tripped bit-exactly, {} bundle files read by the reference reader, {} failures",
                       round_trips, files, bad));
}

} // namespace

int main(int argc, char** argv) {
    if (argc != 3) {
        fmt::print(stderr, "usage: acceptance <cavkit binary> <work dir>\n");
        return 2;
    }
    const std::string cli = argv[1];
    const fs::path work = fs::absolute(argv[2]);
    fs::remove_all(work);
    fs::create_directories(work);

    const auto bundle_dir = work / "toy_bundle";
    if (run_cli(cli, fmt::format("synth --out \"{}\"", bundle_dir.string())) != 0) {
        fmt::print("[FAIL] setup: cavkit synth failed\n");
        return 1;
    }
    const auto manifest = bundle_dir / "bundle.json";
    const auto truth = read_truth(bundle_dir / "toy_truth.json");
    const auto run_dir = work / "run_default";

    try {
        protocol_fidelity(cli, manifest, run_dir);
        tcav_score_oracle();
        t_test_oracle();
        gradient_check(bundle_dir);
        sign_recovery(manifest, truth, work);
        probe_sanity(manifest, run_dir);
        ranking_ground_truth(run_dir, truth);
        determinism(cli, manifest, run_dir, work);
        format_conformance(bundle_dir, work);
    } catch (const std::exception& e) {
        fmt::print("[FAIL] acceptance aborted: {}\n", e.what());
        return 1;
    }
    fmt::print("{} of 9 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
