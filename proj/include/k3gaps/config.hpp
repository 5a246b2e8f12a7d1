#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace k3gaps::config {

// A TOML subset: [tables] and [dotted.tables], key = value with strings,
// integers, floats, booleans and flat arrays, '#' comments. Parsed into a
// JSON object tree. Throws ConfigError with a line number on anything else.
nlohmann::json parse_toml(std::string_view text, const std::string& origin = "<string>");
nlohmann::json load_toml(const std::filesystem::path& path);

// Parses the right-hand side of an override: TOML value syntax, falling back
// to a bare string.
nlohmann::json parse_value(std::string_view text);

// Applies "dotted.key=value". Throws ConfigError if the key is not present in
// `target` (unknown keys are rejected rather than silently added).
void apply_override(nlohmann::json& target, const std::string& assignment);

// Recursively overlays `layer` on `base`; every key of `layer` must exist in
// `base` with a compatible type. `origin` names the layer in error messages.
void merge(nlohmann::json& base, const nlohmann::json& layer, const std::string& origin);

// Emits a JSON object tree as TOML (scalars first, then sub-tables), with
// keys in sorted order so the output is deterministic.
std::string to_toml(const nlohmann::json& tree);

}  // namespace k3gaps::config
