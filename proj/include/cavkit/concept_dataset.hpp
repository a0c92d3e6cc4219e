#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace cavkit {

enum class ConceptLabel : std::int8_t { unknown = -1, absent = 0, present = 1 };

/// Sample ids with per-concept ternary labels and a class label per sample.
/// Randomly-labelled subsets carry no class labels (class_labels is empty).
struct ConceptDataset {
    std::vector<std::string> sample_ids;
    std::map<std::string, std::vector<ConceptLabel>> concept_labels;
    std::vector<std::string> class_labels;

    std::size_t size() const noexcept { return sample_ids.size(); }
    bool has_concept(const std::string& concept_name) const { return concept_labels.count(concept_name) != 0; }
    std::vector<std::string> concept_names() const;
};

} // namespace cavkit
