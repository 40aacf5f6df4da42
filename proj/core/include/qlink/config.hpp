#pragma once

// Sectioned key = value config files.
//
//   # comment
//   seed = 7
//   [fiber]
//   length_km = 20
//
// Sections mirror the module parameter records; unknown sections or keys are parse
// errors. Values left out keep their defaults.

#include <string>
#include <string_view>
#include <vector>

#include "qlink/link_config.hpp"

namespace qlink {

/// Throws ParseError (line/column) on syntax, unknown or duplicate keys and files with
/// no settings; ValidationError naming the field when values break an invariant.
LinkConfig parse_config(std::string_view text, const std::string& source = "<config>");
LinkConfig load_config(const std::string& path);

/// Every key with its resolved value, in a form parse_config reads back exactly.
std::string render_config(const LinkConfig& cfg);

/// Sets one value by dotted key (e.g. "fiber.length_km"); throws ValidationError for an
/// unknown key or unparsable value. Does not re-validate the whole config.
void set_config_value(LinkConfig& cfg, const std::string& key, const std::string& value);

/// All dotted keys, in render order.
std::vector<std::string> config_keys();

}  // namespace qlink
