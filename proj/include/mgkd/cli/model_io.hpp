#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string_view>

#include "mgkd/data.hpp"
#include "mgkd/numcore/mlp.hpp"

namespace mgkd::cli {

/// Which feature block(s) a stored model reads.
enum class InputKind : std::uint32_t { kPre = 0, kIn = 1, kPreIn = 2 };

std::string_view to_string(InputKind k);

/// A trained network together with the standardization it was trained under.
struct ModelFile {
  numcore::MlpModel model;
  InputKind input = InputKind::kPre;
  numcore::RowVectorXd mean;
  numcore::RowVectorXd std;

  bool operator==(const ModelFile& other) const;
};

inline constexpr std::uint32_t kModelFormatVersion = 1;

/// Layout, all integers u32 and all reals f64, little-endian:
///   "MGKD" | version | input kind | hidden layer count | dropout (f64) |
///   tensor count | (rows, cols) per tensor | tensor data, row-major.
/// Tensors in order: scaler mean, scaler std, then weights and bias of every
/// hidden layer, then classifier weights and bias.
void write_model(const ModelFile& file, std::ostream& out);
void save_model(const ModelFile& file, const std::filesystem::path& path);

/// Throws ParseError on a bad magic, version or shape table, and
/// MissingArtifactError when the file does not exist.
ModelFile read_model(std::istream& in);
ModelFile load_model(const std::filesystem::path& path);

/// The standardized feature block the model consumes, taken from a raw
/// (unstandardized) dataset. Throws DimensionError on a width mismatch.
numcore::MatrixXd model_input(const ModelFile& file, const data::TwoPhaseDataset& raw);

}  // namespace mgkd::cli
