#pragma once

#include "cavkit/concept_dataset.hpp"
#include "cavkit/tensor.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace cavkit {

/// Activations of one layer, one leading-axis row per sample.
struct ActivationSet {
    std::string layer_name;
    std::vector<std::string> sample_ids;
    Tensor tensor;

    std::size_t dim() const noexcept { return tensor.row_size(); }
};

/// d logit[target_class] / d activation, aligned with the layer's ActivationSet.
struct GradientSet {
    std::string layer_name;
    std::string target_class;
    std::vector<std::string> sample_ids;
    Tensor tensor;

    std::size_t dim() const noexcept { return tensor.row_size(); }
};

/// Throws Alignment / DuplicateSampleId when the set's invariants fail.
void validate(const ActivationSet& acts);
void validate(const GradientSet& grads, const ActivationSet& companion);

/// On-disk description of a bundle; paths are relative to the manifest directory.
struct BundleManifest {
    int version = 1;
    std::vector<std::string> layers;
    std::vector<std::string> classes;
    std::vector<std::string> sample_ids;
    std::map<std::string, std::string> activation_files;
    std::map<std::string, std::map<std::string, std::string>> gradient_files;
    std::map<std::string, std::vector<ConceptLabel>> concept_labels;
    std::vector<std::string> class_labels;
    // Optional extensions.
    std::optional<std::vector<std::string>> predicted_labels;
    std::optional<std::vector<std::string>> random_pool;
};

BundleManifest parse_manifest(const std::string& json_text, const std::string& origin = "<manifest>");
std::string manifest_to_json(const BundleManifest& manifest);
void write_manifest(const BundleManifest& manifest, const std::filesystem::path& path);

struct Bundle {
    std::filesystem::path manifest_path;
    std::vector<std::string> layers;
    std::vector<std::string> classes;
    std::vector<ActivationSet> activations;
    std::vector<GradientSet> gradients;
    ConceptDataset dataset;
    std::optional<std::vector<std::string>> predicted_labels;
    std::vector<std::string> random_pool; // sample ids eligible for random-label subsets

    const ActivationSet& activation(const std::string& layer) const;
    const GradientSet* find_gradient(const std::string& layer, const std::string& cls) const;
    const GradientSet& gradient(const std::string& layer, const std::string& cls) const;
};

/// Loads and cross-checks a bundle. Throws BundleError listing every violation.
Bundle load_bundle(const std::filesystem::path& manifest_path);

} // namespace cavkit
