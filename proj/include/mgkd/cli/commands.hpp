#pragma once

#include <cstddef>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mgkd/cli/config.hpp"
#include "mgkd/data.hpp"

namespace mgkd::cli {

/// Process exit codes.
enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitConfig = 2,
  kExitMissingArtifact = 3,
  kExitData = 4,
  kExitDivergence = 5,
};

int exit_code_for(const std::exception& e);

/// Parsed command line. Fields a command does not use are ignored.
struct Invocation {
  std::string command;  // generate | train | eval | ablate | sweep | replay
  std::optional<std::filesystem::path> config;
  std::vector<std::string> overrides;  // section.key=value
  std::optional<std::uint64_t> seed;
  std::optional<std::vector<std::uint64_t>> seeds;
  std::string mode = "full";  // train: teacher or a student mode
  std::size_t jobs = 1;
  std::optional<std::filesystem::path> out;
  std::optional<std::filesystem::path> teacher;  // train: teacher weights
  std::optional<std::filesystem::path> model;    // eval
  std::optional<std::filesystem::path> dataset;  // overrides [dataset] path
  std::string split = "test";                    // eval
  std::optional<std::string> param;              // sweep
  std::optional<std::vector<double>> grid;       // sweep
  std::optional<std::filesystem::path> manifest;  // replay
};

/// --out, then $MGKD_OUT_DIR, then ./mgkd_out.
std::filesystem::path resolve_out_dir(const std::optional<std::filesystem::path>& flag);

/// Runs one command, printing tables to `out` and diagnostics to `err`.
/// Never throws; failures become the matching exit code.
int run(const Invocation& inv, std::ostream& out, std::ostream& err);

/// Hex SHA-256 of the dataset in canonical delimited form.
std::string dataset_fingerprint(const data::TwoPhaseDataset& ds);

/// Path of the manifest a command writes into `out_dir`.
std::filesystem::path manifest_path(const Invocation& inv, const std::filesystem::path& out_dir);

}  // namespace mgkd::cli
