#pragma once

#include "forestllm/forest.hpp"

#include <filesystem>
#include <string>
#include <string_view>

#include <json.hpp>

namespace forestllm {

inline constexpr int kModelFormatVersion = 1;

nlohmann::json schema_to_json(const Schema& schema);
Schema schema_from_json(const nlohmann::json& j);

nlohmann::json config_to_json(const ForestConfig& cfg);
/// Keys absent from `j` keep the values already in `base`.
ForestConfig config_from_json(const nlohmann::json& j, ForestConfig base = {});

/// Canonical text: sorted keys, shortest round-trip floats, two-space indent,
/// trailing newline.
std::string serialize_model(const ForestModel& model);

/// Validates every model invariant; throws UnsupportedVersion or
/// InvariantViolation.
ForestModel deserialize_model(std::string_view text);

void save_model(const ForestModel& model, const std::filesystem::path& path);
ForestModel load_model(const std::filesystem::path& path);

}  // namespace forestllm
