#pragma once

#include <iosfwd>
#include <string>

#include "nsda/harness.hpp"
#include "nsda/io.hpp"

namespace nsda::io {

/// Parses an experiment config. Unknown keys and type mismatches raise
/// harness::ConfigError with a dotted field path; the result is validated.
harness::ExperimentConfig experiment_config_from_json(const Json& j);
harness::ExperimentConfig read_experiment_config(const std::string& path);

/// Canonical form with every default filled in; hashed into the manifest.
Json to_json(const harness::ExperimentConfig& cfg);

/// method,T,k,error,stderr,runs; k = "avg" for the averaged row.
void write_error_table_csv(std::ostream& os, const harness::ErrorTable& table);

Json manifest(const harness::ExperimentConfig& cfg, const harness::ErrorTable& table, const std::string& command);

std::string version_string();

}  // namespace nsda::io
