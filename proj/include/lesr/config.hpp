#pragma once

#include <string>

#include "lesr/orchestrator.hpp"

// Flat key = value run-configuration files.  Every key is optional and
// defaults to the engine defaults; unknown keys are rejected so typos cannot
// silently fall back to defaults.  `#` starts a comment, blank lines are
// ignored.
namespace lesr::config {

// Parses configuration text.  Throws std::invalid_argument as
// "config line N: ..." on malformed lines, unknown keys, or bad values; the
// result is validated before it is returned.
orch::LesrConfig parse_config_text(const std::string& text);

// Reads and parses a configuration file; errors carry the path.
orch::LesrConfig load_config_file(const std::string& path);

// Rebuilds a run configuration from the `config` object embedded in a run
// manifest and re-validates it (the manifest snapshot stays loadable).
orch::LesrConfig from_manifest_json(const std::string& manifest_text);

// A fully commented template listing every recognized key with its default.
std::string default_config_text();

}  // namespace lesr::config
