#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "fwe/harness.hpp"

namespace fwe::cli {

/// Malformed or inconsistent configuration; maps to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Parses a campaign document. Unknown keys anywhere are rejected. Relative
/// paths are resolved against base_dir.
[[nodiscard]] CampaignSpec campaign_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
[[nodiscard]] nlohmann::json campaign_to_json(const CampaignSpec& spec);
[[nodiscard]] CampaignSpec load_campaign_config(const std::filesystem::path& path);

[[nodiscard]] nlohmann::json read_json_file(const std::filesystem::path& path);

}  // namespace fwe::cli
