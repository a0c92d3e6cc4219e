#include "cavkit/bundle.hpp"

#include "cavkit/error.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

namespace cavkit {

using nlohmann::json;

std::vector<std::string> ConceptDataset::concept_names() const {
    std::vector<std::string> names;
    names.reserve(concept_labels.size());
    for (const auto& [name, labels] : concept_labels) names.push_back(name);
    return names;
}

namespace {

struct Violations {
    std::vector<std::string> messages;
    std::optional<ErrorCode> first;

    void add(ErrorCode code, std::string msg) {
        if (!first) first = code;
        messages.push_back(std::move(msg));
    }
    void raise_if_any() const {
        if (first) throw BundleError(*first, messages);
    }
};

std::optional<std::string> duplicate_of(const std::vector<std::string>& ids) {
    std::unordered_set<std::string> seen;
    for (const auto& id : ids)
        if (!seen.insert(id).second) return id;
    return std::nullopt;
}

std::vector<std::string> string_list(const json& j, const char* key, Violations& v, bool required = true) {
    if (!j.contains(key)) {
        if (required) v.add(ErrorCode::Manifest, fmt::format("missing key '{}'", key));
        return {};
    }
    const auto& node = j.at(key);
    if (!node.is_array()) {
        v.add(ErrorCode::Manifest, fmt::format("'{}' must be an array of strings", key));
        return {};
    }
    std::vector<std::string> out;
    for (const auto& e : node) {
        if (!e.is_string()) {
            v.add(ErrorCode::Manifest, fmt::format("'{}' must contain only strings", key));
            return {};
        }
        out.push_back(e.get<std::string>());
    }
    return out;
}

} // namespace

BundleManifest parse_manifest(const std::string& json_text, const std::string& origin) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::Manifest, fmt::format("{}: invalid JSON: {}", origin, e.what()));
    }
    if (!j.is_object()) throw Error(ErrorCode::Manifest, origin + ": manifest must be a JSON object");

    Violations v;
    BundleManifest m;
    if (!j.contains("version") || !j["version"].is_number_integer()) {
        v.add(ErrorCode::Manifest, "missing integer 'version'");
    } else {
        m.version = j["version"].get<int>();
        if (m.version != 1) v.add(ErrorCode::Manifest, fmt::format("unsupported manifest version {}", m.version));
    }
    m.layers = string_list(j, "layers", v);
    m.classes = string_list(j, "classes", v);
    m.sample_ids = string_list(j, "sample_ids", v);
    m.class_labels = string_list(j, "class_labels", v);
    if (j.contains("predicted_labels")) m.predicted_labels = string_list(j, "predicted_labels", v);
    if (j.contains("random_pool")) m.random_pool = string_list(j, "random_pool", v);

    if (const auto it = j.find("activation_files"); it == j.end() || !it->is_object()) {
        v.add(ErrorCode::Manifest, "'activation_files' must be an object layer -> path");
    } else {
        for (const auto& [layer, path] : it->items()) {
            if (!path.is_string()) v.add(ErrorCode::Manifest, fmt::format("activation_files['{}'] must be a path", layer));
            else m.activation_files[layer] = path.get<std::string>();
        }
    }
    if (const auto it = j.find("gradient_files"); it == j.end() || !it->is_object()) {
        v.add(ErrorCode::Manifest, "'gradient_files' must be an object layer -> {class -> path}");
    } else {
        for (const auto& [layer, per_class] : it->items()) {
            if (!per_class.is_object()) {
                v.add(ErrorCode::Manifest, fmt::format("gradient_files['{}'] must be an object", layer));
                continue;
            }
            for (const auto& [cls, path] : per_class.items()) {
                if (!path.is_string()) v.add(ErrorCode::Manifest, fmt::format("gradient_files['{}']['{}'] must be a path", layer, cls));
                else m.gradient_files[layer][cls] = path.get<std::string>();
            }
        }
    }
    if (const auto it = j.find("concept_labels"); it == j.end() || !it->is_object()) {
        v.add(ErrorCode::Manifest, "'concept_labels' must be an object concept -> [0|1|null]");
    } else {
        for (const auto& [concept_name, labels] : it->items()) {
            if (!labels.is_array()) {
                v.add(ErrorCode::Manifest, fmt::format("concept_labels['{}'] must be an array", concept_name));
                continue;
            }
            std::vector<ConceptLabel> out;
            out.reserve(labels.size());
            bool ok = true;
            for (const auto& e : labels) {
                if (e.is_null()) out.push_back(ConceptLabel::unknown);
                else if (e.is_number_integer() && e.get<int>() == 0) out.push_back(ConceptLabel::absent);
                else if (e.is_number_integer() && e.get<int>() == 1) out.push_back(ConceptLabel::present);
                else ok = false;
            }
            if (!ok) v.add(ErrorCode::Manifest, fmt::format("concept_labels['{}'] may only hold 0, 1 or null", concept_name));
            m.concept_labels[concept_name] = std::move(out);
        }
    }
    if (v.first) {
        for (auto& msg : v.messages) msg = origin + ": " + msg;
        v.raise_if_any();
    }
    return m;
}

std::string manifest_to_json(const BundleManifest& m) {
    json j;
    j["version"] = m.version;
    j["layers"] = m.layers;
    j["classes"] = m.classes;
    j["sample_ids"] = m.sample_ids;
    j["activation_files"] = m.activation_files;
    j["gradient_files"] = m.gradient_files;
    json concepts = json::object();
    for (const auto& [name, labels] : m.concept_labels) {
        json arr = json::array();
        for (auto l : labels) {
            if (l == ConceptLabel::unknown) arr.push_back(nullptr);
            else arr.push_back(static_cast<int>(l));
        }
        concepts[name] = std::move(arr);
    }
    j["concept_labels"] = std::move(concepts);
    j["class_labels"] = m.class_labels;
    if (m.predicted_labels) j["predicted_labels"] = *m.predicted_labels;
    if (m.random_pool) j["random_pool"] = *m.random_pool;
    return j.dump(1);
}

void write_manifest(const BundleManifest& manifest, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot open for writing: " + path.string());
    out << manifest_to_json(manifest) << '\n';
    if (!out) throw Error(ErrorCode::Io, "write failed: " + path.string());
}

void validate(const ActivationSet& acts) {
    if (acts.tensor.rows() != acts.sample_ids.size())
        throw Error(ErrorCode::Alignment,
                    fmt::format("layer '{}': {} activation rows for {} sample ids", acts.layer_name,
                                acts.tensor.rows(), acts.sample_ids.size()));
    if (auto dup = duplicate_of(acts.sample_ids))
        throw Error(ErrorCode::DuplicateSampleId, fmt::format("layer '{}': duplicate sample id '{}'", acts.layer_name, *dup));
}

void validate(const GradientSet& grads, const ActivationSet& companion) {
    if (grads.sample_ids != companion.sample_ids)
        throw Error(ErrorCode::Alignment, fmt::format("gradients for layer '{}', class '{}': sample ids differ from activations",
                                                      grads.layer_name, grads.target_class));
    const auto& gs = grads.tensor.shape();
    const auto& as = companion.tensor.shape();
    if (gs.size() != as.size() || !std::equal(gs.begin() + 1, gs.end(), as.begin() + 1) || gs[0] != as[0])
        throw Error(ErrorCode::Alignment,
                    fmt::format("gradients for layer '{}', class '{}': shape {} does not match activations {}",
                                grads.layer_name, grads.target_class, shape_to_string(gs), shape_to_string(as)));
}

const ActivationSet& Bundle::activation(const std::string& layer) const {
    for (const auto& a : activations)
        if (a.layer_name == layer) return a;
    throw Error(ErrorCode::UnknownLayer, "bundle has no activations for layer '" + layer + "'");
}

const GradientSet* Bundle::find_gradient(const std::string& layer, const std::string& cls) const {
    for (const auto& g : gradients)
        if (g.layer_name == layer && g.target_class == cls) return &g;
    return nullptr;
}

const GradientSet& Bundle::gradient(const std::string& layer, const std::string& cls) const {
    if (const auto* g = find_gradient(layer, cls)) return *g;
    throw Error(ErrorCode::MissingFile, fmt::format("bundle has no gradient file for layer '{}', class '{}'", layer, cls));
}

Bundle load_bundle(const std::filesystem::path& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) throw Error(ErrorCode::MissingFile, "cannot open manifest: " + manifest_path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    const BundleManifest m = parse_manifest(buffer.str(), manifest_path.string());
    const auto base = manifest_path.parent_path();
    const std::size_t n = m.sample_ids.size();

    Violations v;
    if (m.layers.empty()) v.add(ErrorCode::Manifest, "'layers' is empty");
    if (m.classes.empty()) v.add(ErrorCode::Manifest, "'classes' is empty");
    if (auto dup = duplicate_of(m.classes)) v.add(ErrorCode::Manifest, fmt::format("duplicate class '{}'", *dup));
    if (auto dup = duplicate_of(m.layers)) v.add(ErrorCode::Manifest, fmt::format("duplicate layer '{}'", *dup));
    if (auto dup = duplicate_of(m.sample_ids)) v.add(ErrorCode::DuplicateSampleId, fmt::format("duplicate sample id '{}'", *dup));

    const std::set<std::string> class_set(m.classes.begin(), m.classes.end());
    auto check_labels = [&](const std::vector<std::string>& labels, const char* key) {
        if (labels.size() != n)
            v.add(ErrorCode::Alignment, fmt::format("'{}' has {} entries for {} samples", key, labels.size(), n));
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (!class_set.count(labels[i]))
                v.add(ErrorCode::UnknownClass, fmt::format("'{}'[{}] = '{}' is not a declared class", key, i, labels[i]));
    };
    check_labels(m.class_labels, "class_labels");
    if (m.predicted_labels) check_labels(*m.predicted_labels, "predicted_labels");

    for (const auto& [concept_name, labels] : m.concept_labels)
        if (labels.size() != n)
            v.add(ErrorCode::Alignment, fmt::format("concept '{}' has {} labels for {} samples", concept_name, labels.size(), n));

    if (m.random_pool) {
        const std::set<std::string> ids(m.sample_ids.begin(), m.sample_ids.end());
        for (const auto& id : *m.random_pool)
            if (!ids.count(id)) v.add(ErrorCode::Manifest, fmt::format("random_pool id '{}' is not a sample id", id));
    }

    auto load = [&](const std::string& rel, const std::string& what) -> std::optional<Tensor> {
        const auto path = base / rel;
        if (!std::filesystem::exists(path)) {
            v.add(ErrorCode::MissingFile, fmt::format("{}: file '{}' does not exist", what, path.string()));
            return std::nullopt;
        }
        try {
            return read_tensor(path);
        } catch (const Error& e) {
            v.add(e.code(), fmt::format("{}: {}", what, e.what()));
            return std::nullopt;
        }
    };

    Bundle b;
    b.manifest_path = manifest_path;
    b.layers = m.layers;
    b.classes = m.classes;
    for (const auto& [layer, rel] : m.activation_files)
        if (std::find(m.layers.begin(), m.layers.end(), layer) == m.layers.end())
            v.add(ErrorCode::Manifest, fmt::format("activation_files names undeclared layer '{}'", layer));
    for (const auto& [layer, per_class] : m.gradient_files) {
        if (std::find(m.layers.begin(), m.layers.end(), layer) == m.layers.end())
            v.add(ErrorCode::Manifest, fmt::format("gradient_files names undeclared layer '{}'", layer));
        for (const auto& [cls, rel] : per_class)
            if (!class_set.count(cls))
                v.add(ErrorCode::UnknownClass, fmt::format("gradient_files['{}'] names undeclared class '{}'", layer, cls));
    }

    for (const auto& layer : m.layers) {
        const auto it = m.activation_files.find(layer);
        if (it == m.activation_files.end()) {
            v.add(ErrorCode::MissingFile, fmt::format("layer '{}' has no activation file", layer));
            continue;
        }
        auto acts = load(it->second, fmt::format("activations for layer '{}'", layer));
        if (!acts) continue;
        if (acts->rows() != n) {
            v.add(ErrorCode::Alignment, fmt::format("activations for layer '{}' have {} rows, expected {} samples", layer,
                                                    acts->rows(), n));
            continue;
        }
        ActivationSet set{layer, m.sample_ids, std::move(*acts)};

        if (const auto git = m.gradient_files.find(layer); git != m.gradient_files.end()) {
            for (const auto& cls : m.classes) {
                const auto cit = git->second.find(cls);
                if (cit == git->second.end()) continue;
                auto grads = load(cit->second, fmt::format("gradients for layer '{}', class '{}'", layer, cls));
                if (!grads) continue;
                GradientSet gset{layer, cls, m.sample_ids, std::move(*grads)};
                try {
                    validate(gset, set);
                    b.gradients.push_back(std::move(gset));
                } catch (const Error& e) {
                    v.add(ErrorCode::Alignment, e.what());
                }
            }
        }
        b.activations.push_back(std::move(set));
    }

    v.raise_if_any();

    b.dataset.sample_ids = m.sample_ids;
    b.dataset.concept_labels = m.concept_labels;
    b.dataset.class_labels = m.class_labels;
    b.predicted_labels = m.predicted_labels;
    b.random_pool = m.random_pool.value_or(m.sample_ids);
    return b;
}

} // namespace cavkit
