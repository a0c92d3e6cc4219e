#pragma once

#include "cavkit/linear_cav.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace cavkit {

// Layout: <root>/<concept>/<layer>/<rep>.json with a <rep>.npy direction sidecar.

std::filesystem::path cav_json_path(const std::filesystem::path& root, const Cav& cav);
void save_cav(const Cav& cav, const std::filesystem::path& root);
Cav load_cav(const std::filesystem::path& json_path);

/// All CAVs for (concept, layer) under root, ordered by repetition.
/// Throws MissingCavStore when none exist.
std::vector<Cav> load_cavs(const std::filesystem::path& root, const std::string& concept_name, const std::string& layer);

} // namespace cavkit
