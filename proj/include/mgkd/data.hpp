#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "mgkd/numcore/matrix.hpp"

namespace mgkd::data {

using numcore::MatrixXd;
using numcore::RowVectorXd;
using numcore::VectorXd;

enum class Split : std::uint8_t { kTrain, kValid, kTest };

std::string_view to_string(Split s);
Split parse_split(std::string_view s);

/// Row-aligned per-user records: row i of every field describes the same user.
/// A dataset without an in-service block has x_in with zero columns.
struct TwoPhaseDataset {
  MatrixXd x_pre;
  MatrixXd x_in;
  VectorXd y;
  std::vector<std::int64_t> user_id;
  std::vector<std::int64_t> timestamp;
  std::vector<Split> split;

  std::size_t size() const { return static_cast<std::size_t>(y.size()); }
  std::size_t d_pre() const { return static_cast<std::size_t>(x_pre.cols()); }
  std::size_t d_in() const { return static_cast<std::size_t>(x_in.cols()); }
  bool has_in_service() const { return x_in.cols() > 0; }

  std::vector<std::size_t> rows(Split s) const;
  TwoPhaseDataset select(std::span<const std::size_t> rows) const;
  TwoPhaseDataset subset(Split s) const;

  /// x_pre and x_in side by side (the oracle's input).
  MatrixXd concatenated() const;

  /// Throws DataError when fields are misaligned or a label is not 0/1.
  void validate() const;

  bool operator==(const TwoPhaseDataset& other) const;
};

struct SyntheticConfig {
  std::size_t n = 50'000;
  std::size_t d_pre = 20;
  std::size_t d_in = 20;
  double positive_rate = 0.10;
  double snr_pre = 0.05;
  double snr_in_base = 0.10;
  int window_days = 30;
  double window_gain = 0.5;
  double label_noise = 0.0;
  // Slope a of the default logit a*z + b on the latent risk z.
  double latent_scale = 2.0;
  std::uint64_t seed = 0;

  /// snr_in_base * (1 + window_gain * window_days / 30).
  double snr_in() const;

  /// Throws ConfigError; also rejects configs where snr_in() <= snr_pre.
  void validate() const;
};

/// Latent-risk generator. Per user z ~ N(0,1), y ~ Bernoulli(sigmoid(a z + b))
/// with b calibrated by bisection to the target positive rate, and both feature
/// blocks are unit loading vectors times z plus Gaussian noise at the
/// configured per-column signal-to-noise ratio. The noise draws for x_in do
/// not depend on the window, so datasets for different windows are paired.
TwoPhaseDataset generate_synthetic(const SyntheticConfig& cfg);

/// Optional expectations on the feature block widths of a delimited file.
struct DelimitedSchema {
  std::optional<std::size_t> d_pre;
  std::optional<std::size_t> d_in;
};

/// Comma-separated with header `user_id,ts,y,pre_0..pre_{k-1},in_0..in_{m-1}`.
/// Values are written in shortest round-trip form. Split tags are not stored;
/// loaded rows are tagged train.
void write_delimited(const TwoPhaseDataset& ds, std::ostream& out);
void save_delimited(const TwoPhaseDataset& ds, const std::filesystem::path& path);
TwoPhaseDataset read_delimited(std::istream& in, const DelimitedSchema& schema = {});
TwoPhaseDataset load_delimited(const std::filesystem::path& path, const DelimitedSchema& schema = {});

/// Sorts rows by timestamp (stable) and tags the last frac_test as test and the
/// preceding frac_valid as valid. Rows sharing a timestamp stay in one split,
/// the earlier one. Throws SplitError when a split would be empty.
TwoPhaseDataset temporal_split(const TwoPhaseDataset& ds, double frac_valid, double frac_test);

/// Per-column mean and population standard deviation of the training rows.
struct Scaler {
  RowVectorXd pre_mean;
  RowVectorXd pre_std;
  RowVectorXd in_mean;
  RowVectorXd in_std;

  static constexpr double kMinStd = 1e-12;
};

Scaler fit_standardize(const TwoPhaseDataset& ds);
TwoPhaseDataset apply_standardize(const TwoPhaseDataset& ds, const Scaler& scaler);

/// Standardizes one feature block with the given statistics.
MatrixXd standardize_block(const MatrixXd& x, const RowVectorXd& mean, const RowVectorXd& std);

}  // namespace mgkd::data
