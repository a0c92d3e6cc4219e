#include "cavkit/pipeline.hpp"
#include "cavkit/tensor.hpp"
#include "cavkit/toynet.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;
using namespace cavkit;

namespace {

struct SynthArgs {
    fs::path out = "toy_bundle";
    std::uint64_t seed = 7;
    std::size_t samples = 1200;
    std::size_t side = 16;
    double noise = 0.1;
    double jitter = 0.25;
    std::size_t classes = 3;
    std::vector<std::string> layers{toy::kHiddenLayer};
    std::size_t epochs = 30;
    double lr = 0.05;
};

int cmd_synth(const SynthArgs& a) {
    if (a.classes < 2) throw Error(ErrorCode::InvalidArgument, fmt::format("--classes must be at least 2, got {}", a.classes));
    auto spec = toy::SyntheticSpec::defaults(a.classes);
    spec.n_samples = a.samples;
    spec.image_side = a.side;
    spec.noise_std = a.noise;
    spec.label_jitter = a.jitter;
    spec.seed = a.seed;
    for (const auto& layer : a.layers)
        if (layer != toy::kHiddenLayer && layer != toy::kConvLayer)
            throw Error(ErrorCode::UnknownLayer, fmt::format("unknown toy layer '{}'", layer));

    const auto data = toy::generate(spec);
    toy::TrainOptions opts;
    opts.epochs = a.epochs;
    opts.learning_rate = a.lr;
    opts.seed = a.seed;
    const auto trained = toy::train_toy(data.images, data.labels, spec.class_names.size(), opts);
    fmt::print(stderr, "toynet: loss {:.4f} -> {:.4f}, train accuracy {:.3f}\n", trained.initial_loss,
               trained.epoch_loss.empty() ? trained.initial_loss : trained.epoch_loss.back(), trained.train_accuracy);

    const auto manifest = toy::export_bundle(trained.net, data, a.layers, a.out);
    write_tensor(data.images, a.out / "images.npy");
    toy::write_truth(spec, data, a.out / "toy_truth.json");
    toy::save_net(trained.net, a.out / "toynet.json");
    fmt::print("{}\n", manifest.string());
    return 0;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::InvalidArgument, "cannot read config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void print_significance(const std::vector<SignificanceResult>& rows) {
    for (const auto& r : rows)
        fmt::print("{:<12} {:<10} {:<12} t={:>9.4f} df={:>7.2f} p={:.4g}{}\n", r.concept_name, r.target, r.layer, r.t_statistic,
                   r.degrees_of_freedom, r.p_value, r.significant ? "" : "  *");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Concept activation vectors and TCAV scores for neural network layers"};
    app.require_subcommand(1);

    SynthArgs synth;
    auto* synth_cmd = app.add_subcommand("synth", "Generate the toy data set, train the toy network and export a bundle");
    synth_cmd->add_option("--out", synth.out, "Output directory")->capture_default_str();
    synth_cmd->add_option("--seed", synth.seed, "Generator and training seed")->capture_default_str();
    synth_cmd->add_option("--samples", synth.samples, "Number of images")->capture_default_str();
    synth_cmd->add_option("--side", synth.side, "Image side length")->capture_default_str();
    synth_cmd->add_option("--noise", synth.noise, "Gaussian pixel noise std")->capture_default_str();
    synth_cmd->add_option("--jitter", synth.jitter, "Half-width of the per-class label jitter")->capture_default_str();
    synth_cmd->add_option("--classes", synth.classes, "Number of classes")->capture_default_str();
    synth_cmd->add_option("--layer", synth.layers, "Layers to export (conv_post, hidden_post)")->capture_default_str();
    synth_cmd->add_option("--epochs", synth.epochs, "Training epochs")->capture_default_str();
    synth_cmd->add_option("--lr", synth.lr, "Learning rate")->capture_default_str();

    RunConfig run;
    fs::path config_file;
    std::string membership = "ground_truth";
    auto* run_cmd = app.add_subcommand("run", "Train CAVs, score, test significance, rank and report");
    run_cmd->add_option("--config", config_file, "JSON file with RunConfig fields; flags override it");
    auto* manifest_opt = run_cmd->add_option("--manifest", run.manifest_path, "bundle.json");
    run_cmd->add_option("--layers", run.layers, "Layers to analyse (default: all)");
    run_cmd->add_option("--concepts", run.concepts, "Concepts to analyse (default: all)");
    run_cmd->add_option("--classes", run.target_classes, "Target classes (default: all)");
    run_cmd->add_option("--repetitions", run.repetitions)->capture_default_str();
    run_cmd->add_option("--random-cavs", run.random_cavs)->capture_default_str();
    run_cmd->add_option("--random-subset-size", run.random_subset_size)->capture_default_str();
    run_cmd->add_option("--val-fraction", run.val_fraction)->capture_default_str();
    run_cmd->add_option("--alpha", run.alpha)->capture_default_str();
    run_cmd->add_option("--seed", run.master_seed, "Master seed (CAVKIT_SEED overrides the config file)")->capture_default_str();
    run_cmd->add_option("--out", run.output_dir)->capture_default_str();
    run_cmd->add_option("--jobs", run.jobs)->check(CLI::PositiveNumber)->capture_default_str();
    run_cmd->add_flag("--bonferroni", run.bonferroni, "Divide alpha by the number of tests");
    run_cmd->add_option("--membership", membership, "Class membership for scoring")
        ->check(CLI::IsMember({"ground_truth", "predicted"}))
        ->capture_default_str();
    run_cmd->add_option("--top", run.top_n, "Head/tail size of rankings")->capture_default_str();
    run_cmd->add_flag("-v,--verbose", run.verbose);

    RankRequest rank;
    std::string rank_layer;
    fs::path rank_manifest;
    auto* rank_cmd = app.add_subcommand("rank", "Rank samples along a trained concept direction");
    rank_cmd->add_option("--run", rank.run_dir, "Run directory")->required();
    rank_cmd->add_option("--concept", rank.concept_name)->required();
    rank_cmd->add_option("--layer", rank_layer, "Defaults to the run's first layer");
    rank_cmd->add_option("--manifest", rank_manifest, "Defaults to the run's manifest");
    rank_cmd->add_option("--top", rank.top_n)->capture_default_str();

    fs::path sig_dir;
    double sig_alpha = kDefaultAlpha;
    bool sig_bonferroni = false;
    auto* sig_cmd = app.add_subcommand("significance", "Recompute significance.csv of a run");
    sig_cmd->add_option("--run", sig_dir)->required();
    sig_cmd->add_option("--alpha", sig_alpha)->capture_default_str();
    sig_cmd->add_flag("--bonferroni", sig_bonferroni);

    fs::path report_dir;
    auto* report_cmd = app.add_subcommand("report", "Re-render report.svg of a run");
    report_cmd->add_option("--run", report_dir)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (synth_cmd->parsed()) return cmd_synth(synth);

        if (run_cmd->parsed()) {
            if (!config_file.empty()) {
                // file first, then environment, then explicit flags
                RunConfig merged = run_config_from_json(read_file(config_file));
                apply_environment(merged);
                for (const auto* opt : run_cmd->get_options()) {
                    if (opt->count() == 0) continue;
                    const auto& name = opt->get_single_name();
                    if (name == "manifest") merged.manifest_path = run.manifest_path;
                    else if (name == "layers") merged.layers = run.layers;
                    else if (name == "concepts") merged.concepts = run.concepts;
                    else if (name == "classes") merged.target_classes = run.target_classes;
                    else if (name == "repetitions") merged.repetitions = run.repetitions;
                    else if (name == "random-cavs") merged.random_cavs = run.random_cavs;
                    else if (name == "random-subset-size") merged.random_subset_size = run.random_subset_size;
                    else if (name == "val-fraction") merged.val_fraction = run.val_fraction;
                    else if (name == "alpha") merged.alpha = run.alpha;
                    else if (name == "seed") merged.master_seed = run.master_seed;
                    else if (name == "out") merged.output_dir = run.output_dir;
                    else if (name == "jobs") merged.jobs = run.jobs;
                    else if (name == "bonferroni") merged.bonferroni = run.bonferroni;
                    else if (name == "membership") merged.membership = membership == "predicted" ? ClassMembership::predicted : ClassMembership::ground_truth;
                    else if (name == "top") merged.top_n = run.top_n;
                    else if (name == "verbose") merged.verbose = run.verbose;
                }
                run = merged;
            } else {
                if (run_cmd->get_option("--seed")->count() == 0) apply_environment(run);
                run.membership = membership == "predicted" ? ClassMembership::predicted : ClassMembership::ground_truth;
            }
            if (run.manifest_path.empty() && manifest_opt->count() == 0)
                throw Error(ErrorCode::InvalidArgument, "run needs --manifest or a config with manifest_path");
            run.manifest_path = fs::absolute(run.manifest_path);
            const auto result = run_pipeline(run);
            print_significance(result.significance);
            fmt::print("wrote {}\n", run.output_dir.string());
            return 0;
        }

        if (rank_cmd->parsed()) {
            if (!rank_layer.empty()) rank.layer = rank_layer;
            if (!rank_manifest.empty()) rank.manifest_path = rank_manifest;
            const auto out = rank_concept(rank);
            fmt::print("top:\n");
            for (const auto& e : out.ends.top) fmt::print("  {} {:.6f}\n", e.sample_id, e.projection);
            fmt::print("bottom:\n");
            for (const auto& e : out.ends.bottom) fmt::print("  {} {:.6f}\n", e.sample_id, e.projection);
            fmt::print("wrote {}\n", out.csv_path.string());
            return 0;
        }

        if (sig_cmd->parsed()) {
            if (!(sig_alpha > 0.0 && sig_alpha < 1.0)) throw Error(ErrorCode::InvalidArgument, "--alpha must lie in (0, 1)");
            print_significance(recompute_significance(sig_dir, sig_alpha, sig_bonferroni));
            return 0;
        }

        if (report_cmd->parsed()) {
            render_report(report_dir);
            fmt::print("wrote {}\n", (report_dir / "report.svg").string());
            return 0;
        }
    } catch (const Error& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return 3;
    }
    return 0;
}
