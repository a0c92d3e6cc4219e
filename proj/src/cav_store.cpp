#include "cavkit/cav_store.hpp"

#include "cavkit/error.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <sstream>

namespace cavkit {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void check_path_component(const std::string& name, const char* what) {
    if (name.empty() || name == "." || name == ".." || name.find_first_of("/\\") != std::string::npos)
        throw Error(ErrorCode::InvalidArgument, fmt::format("{} name '{}' cannot be used as a path component", what, name));
}

} // namespace

fs::path cav_json_path(const fs::path& root, const Cav& cav) {
    check_path_component(cav.concept_name, "concept");
    check_path_component(cav.layer, "layer");
    return root / cav.concept_name / cav.layer / fmt::format("{}.json", cav.repetition);
}

void save_cav(const Cav& cav, const fs::path& root) {
    const auto json_path = cav_json_path(root, cav);
    fs::create_directories(json_path.parent_path());
    auto npy_path = json_path;
    npy_path.replace_extension(".npy");
    write_tensor(Tensor({cav.direction.size()}, cav.direction), npy_path);

    json j;
    j["concept"] = cav.concept_name;
    j["layer"] = cav.layer;
    j["repetition"] = cav.repetition;
    j["direction_file"] = npy_path.filename().string();
    j["validation_accuracy"] = cav.validation_accuracy;
    j["seed"] = cav.seed;
    j["standardizer"] = {{"mean", cav.standardizer.mean}, {"std", cav.standardizer.std}};
    j["n_train"] = cav.n_train;
    j["n_val"] = cav.n_val;
    j["epochs_run"] = cav.epochs_run;
    j["final_loss"] = cav.final_loss;

    std::ofstream out(json_path, std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot open for writing: " + json_path.string());
    out << j.dump(1) << '\n';
}

Cav load_cav(const fs::path& json_path) {
    std::ifstream in(json_path);
    if (!in) throw Error(ErrorCode::MissingCavStore, "cannot open CAV file: " + json_path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    Cav cav;
    try {
        const auto j = json::parse(buffer.str());
        cav.concept_name = j.at("concept").get<std::string>();
        cav.layer = j.at("layer").get<std::string>();
        cav.repetition = j.at("repetition").get<std::size_t>();
        cav.validation_accuracy = j.at("validation_accuracy").get<double>();
        cav.seed = j.at("seed").get<std::uint64_t>();
        cav.standardizer.mean = j.at("standardizer").at("mean").get<std::vector<double>>();
        cav.standardizer.std = j.at("standardizer").at("std").get<std::vector<double>>();
        cav.n_train = j.value("n_train", std::size_t{0});
        cav.n_val = j.value("n_val", std::size_t{0});
        cav.epochs_run = j.value("epochs_run", std::size_t{0});
        cav.final_loss = j.value("final_loss", 0.0);
        const auto t = read_tensor(json_path.parent_path() / j.at("direction_file").get<std::string>());
        cav.direction.assign(t.data().begin(), t.data().end());
    } catch (const json::exception& e) {
        throw Error(ErrorCode::Manifest, fmt::format("{}: malformed CAV file: {}", json_path.string(), e.what()));
    }
    if (cav.direction.size() != cav.standardizer.dim() || cav.standardizer.std.size() != cav.standardizer.dim())
        throw Error(ErrorCode::DimensionMismatch,
                    fmt::format("{}: direction has {} entries, standardizer {}", json_path.string(), cav.direction.size(),
                                cav.standardizer.dim()));
    return cav;
}

std::vector<Cav> load_cavs(const fs::path& root, const std::string& concept_name, const std::string& layer) {
    check_path_component(concept_name, "concept");
    check_path_component(layer, "layer");
    const auto dir = root / concept_name / layer;
    if (!fs::is_directory(dir))
        throw Error(ErrorCode::MissingCavStore, fmt::format("no CAVs for concept '{}', layer '{}' under {}", concept_name, layer,
                                                            root.string()));
    std::vector<Cav> cavs;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.path().extension() == ".json") cavs.push_back(load_cav(entry.path()));
    if (cavs.empty())
        throw Error(ErrorCode::MissingCavStore, fmt::format("CAV directory {} is empty", dir.string()));
    std::sort(cavs.begin(), cavs.end(), [](const Cav& a, const Cav& b) { return a.repetition < b.repetition; });
    return cavs;
}

} // namespace cavkit
