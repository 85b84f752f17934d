#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mgkd/data.hpp"
#include "mgkd/losses.hpp"
#include "mgkd/metrics.hpp"
#include "mgkd/numcore/mlp.hpp"

namespace mgkd::pipeline {

using numcore::MlpModel;

enum class TrainMode { kFull, kNoCoarse, kNoFine, kNoSelf, kPretrainOnly, kBaselinePre, kOracle };

TrainMode parse_mode(std::string_view s);
std::string_view to_string(TrainMode m);

/// The six modes of the ablation table, in report order.
const std::vector<TrainMode>& ablation_modes();

/// Training and distillation hyperparameters. Defaults are the tuned values
/// for the 256x2 network; lambda has no tuned value and defaults to 0.1.
struct DistillConfig {
  double alpha = 0.2;
  double beta = 0.25;
  double lambda = 0.1;
  double tau = 2.5;
  losses::FeatMetric feat_metric = losses::FeatMetric::kMse;
  losses::HardTerm hard_term = losses::HardTerm::kCe;
  double gamma = 2.0;
  double lr = 0.005;
  double weight_decay = 1e-7;
  double dropout = 0.4;
  std::vector<std::size_t> hidden_dims{256, 256};
  std::size_t batch_size = 100'000;
  std::size_t max_epochs = 100;
  std::size_t patience = 50;
  std::uint64_t seed = 0;
  TrainMode mode = TrainMode::kFull;
  double k_percent = 10.0;

  /// Throws ConfigError for out-of-domain values.
  void validate() const;

  /// Copy with the weights the mode switches off forced to zero.
  DistillConfig effective() const;

  bool distills() const;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double hard = 0.0;
  double soft = 0.0;
  double feat = 0.0;
  double self = 0.0;
  double total = 0.0;
  double valid_loss = 0.0;
  std::optional<double> valid_auc;
  std::optional<double> valid_ks;
  std::optional<double> valid_recall;
};

struct TrainTrace {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;  // 0 when no epoch ran
  std::string stop_reason;     // "max_epochs" or "patience"
};

struct TrainResult {
  MlpModel model;
  TrainTrace trace;
};

/// Fits the in-service model on x_in with the configured hard term and early
/// stopping on validation loss. Returns the best-epoch weights.
TrainResult train_teacher(const data::TwoPhaseDataset& ds, const DistillConfig& cfg);

/// Trains the pre-service model under cfg.mode. Distillation modes take soft
/// targets and representations from the frozen teacher; baseline_pre and
/// oracle ignore it and may pass nullptr.
TrainResult train_student(const data::TwoPhaseDataset& ds, const MlpModel* teacher, const DistillConfig& cfg);

/// Probabilities in evaluation mode.
numcore::VectorXd predict(const MlpModel& model, const numcore::MatrixXd& x);

/// The feature block a model trained in `mode` consumes.
numcore::MatrixXd student_input(const data::TwoPhaseDataset& ds, TrainMode mode);

metrics::EvalReport evaluate_split(const MlpModel& model, const data::TwoPhaseDataset& ds, data::Split split,
                                   TrainMode mode, double k_percent, std::uint64_t seed);

struct AblationRow {
  TrainMode mode;
  std::vector<metrics::EvalReport> per_seed;
  double mean_auc = 0.0, std_auc = 0.0;
  double mean_ks = 0.0, std_ks = 0.0;
  double mean_recall = 0.0, std_recall = 0.0;
};

struct AblationTable {
  std::vector<AblationRow> rows;
  const AblationRow& row(TrainMode mode) const;
};

/// Trains the teacher once per seed and every requested mode against it,
/// reporting test-split metrics. Seeds run on up to `jobs` threads.
AblationTable run_ablation(const data::TwoPhaseDataset& ds, const DistillConfig& teacher_cfg,
                           const DistillConfig& student_cfg, const std::vector<std::uint64_t>& seeds,
                           std::size_t jobs = 1, const std::vector<TrainMode>& modes = ablation_modes());

/// Runs fn(0..count-1) on up to `jobs` threads; rethrows the first exception.
void parallel_for(std::size_t count, std::size_t jobs, const std::function<void(std::size_t)>& fn);

/// Mean and population standard deviation of reports, filled into a row.
AblationRow summarize(TrainMode mode, std::vector<metrics::EvalReport> reports);

}  // namespace mgkd::pipeline
