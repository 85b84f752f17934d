#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "mgkd/data.hpp"
#include "mgkd/pipeline.hpp"

namespace mgkd::cli {

enum class SweepParam { kAlpha, kBeta, kLambda, kTau };

SweepParam parse_sweep_param(std::string_view s);
std::string_view to_string(SweepParam p);

/// Everything a command needs besides its flags. Sections of the config file
/// map one-to-one onto the members: [dataset], [teacher], [student], [sweep].
struct RunConfig {
  data::SyntheticConfig dataset;
  // When set, rows come from this delimited file instead of the generator.
  std::optional<std::filesystem::path> dataset_path;
  double frac_valid = 0.1;
  double frac_test = 0.1;

  pipeline::DistillConfig teacher;
  pipeline::DistillConfig student;

  SweepParam sweep_param = SweepParam::kAlpha;
  std::vector<double> sweep_grid{0.0, 0.1, 0.2, 0.3, 0.4};

  /// Throws ConfigError naming the first offending field.
  void validate() const;
};

/// Parses flat `key = value` text grouped under the four sections. Unknown
/// sections or keys, duplicate keys and malformed values raise ConfigError
/// with the section and key in the message. Omitted keys keep their defaults.
RunConfig parse_config(std::istream& in, const std::string& origin = "<config>");
RunConfig load_config(const std::filesystem::path& path);

/// Applies one `section.key=value` override on top of an existing config.
void apply_override(RunConfig& cfg, std::string_view assignment);

/// Canonical text form listing every key. parse_config(to_config_text(c))
/// reproduces c exactly; real numbers are written in shortest round-trip form.
std::string to_config_text(const RunConfig& cfg);

nlohmann::ordered_json to_json(const RunConfig& cfg);

/// Value must be legal for the swept parameter (alpha in [0,1], beta and
/// lambda >= 0, tau >= 1); throws ConfigError otherwise.
void validate_sweep_value(SweepParam p, double value);

/// Copy of `base` with the swept parameter set to `value`.
pipeline::DistillConfig with_sweep_value(const pipeline::DistillConfig& base, SweepParam p, double value);

std::string format_real(double v);

}  // namespace mgkd::cli
