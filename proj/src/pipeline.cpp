#include "mgkd/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <numeric>
#include <random>
#include <thread>
#include <utility>

#include "mgkd/errors.hpp"
#include "mgkd/numcore/adam.hpp"

namespace mgkd::pipeline {
namespace {

using data::Split;
using data::TwoPhaseDataset;
using losses::LossValue;
using numcore::MatrixXd;
using numcore::VectorXd;

// Engines are derived from (seed, role, purpose) so teacher and student runs
// with the same seed never share a stream.
enum class Role : std::uint32_t { kTeacher = 1, kStudent = 2 };
enum class Purpose : std::uint32_t { kInit = 1, kShuffle = 2, kDropout = 3 };

std::mt19937_64 engine(std::uint64_t seed, Role role, Purpose purpose) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(role), static_cast<std::uint32_t>(purpose)};
  return std::mt19937_64(seq);
}

/// Frozen-teacher outputs on the training rows, computed once in eval mode.
struct TeacherTargets {
  VectorXd logits;
  MatrixXd repr;
};

struct FitInputs {
  MatrixXd x_train;
  VectorXd y_train;
  MatrixXd x_valid;
  VectorXd y_valid;
};

bool has_both_classes(const VectorXd& y) {
  const double pos = y.sum();
  return pos > 0.0 && pos < static_cast<double>(y.size());
}

std::optional<losses::ClassPriors> priors_for(const DistillConfig& cfg, const VectorXd& y_train) {
  if (cfg.hard_term == losses::HardTerm::kReweighted || cfg.hard_term == losses::HardTerm::kReweightedFocal) {
    return losses::ClassPriors::from_labels(y_train);
  }
  return std::nullopt;
}

TrainResult fit(MlpModel model, const FitInputs& in, const DistillConfig& cfg, Role role,
                const TeacherTargets* targets) {
  const auto n = static_cast<std::size_t>(in.y_train.size());
  if (n == 0) throw DataError("training split is empty");
  if (in.y_valid.size() == 0) throw DataError("validation split is empty");

  const auto priors = priors_for(cfg, in.y_train);
  auto shuffle_rng = engine(cfg.seed, role, Purpose::kShuffle);
  auto dropout_rng = engine(cfg.seed, role, Purpose::kDropout);
  numcore::AdamState<double> adam(model);
  const std::size_t batch = std::max<std::size_t>(1, std::min(cfg.batch_size, n));
  const bool use_self = targets != nullptr && cfg.lambda > 0.0;
  const bool use_feat = targets != nullptr && cfg.beta > 0.0;

  TrainResult result{model, {}};
  result.trace.stop_reason = "max_epochs";
  double best_loss = std::numeric_limits<double>::infinity();
  std::optional<VectorXd> snapshot;
  VectorXd next_snapshot = VectorXd::Zero(static_cast<Eigen::Index>(n));
  std::vector<std::size_t> perm(n);

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), shuffle_rng);

    EpochRecord rec;
    rec.epoch = epoch;
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t end = std::min(n, start + batch);
      const std::span<const std::size_t> idx(perm.data() + start, end - start);
      const MatrixXd xb = numcore::gather_rows(in.x_train, idx);
      const VectorXd yb = numcore::gather(in.y_train, idx);
      const auto cache = model.forward(xb, numcore::Mode::kTrain, dropout_rng);

      const LossValue hard = losses::hard_loss(cfg.hard_term, yb, cache.probs, cfg.gamma, priors);
      LossValue total;
      double soft_value = 0.0, feat_value = 0.0, self_value = 0.0;
      if (targets != nullptr) {
        const LossValue soft = losses::kl_soft(numcore::gather(targets->logits, idx), cache.logits, cfg.tau);
        soft_value = soft.value;
        std::optional<LossValue> feat;
        if (use_feat) {
          feat = losses::feat_loss(numcore::gather_rows(targets->repr, idx), cache.representation(),
                                   cfg.feat_metric);
          feat_value = feat->value;
        }
        std::optional<LossValue> self;
        if (use_self && snapshot) {
          self = losses::self_loss(cache.logits, numcore::gather(*snapshot, idx), cfg.tau);
          self_value = self->value;
        }
        total = losses::distill_total(losses::label_loss(hard, soft, cfg.alpha), feat, self, cfg.beta, cfg.lambda);
      } else {
        total = hard;
      }
      if (!std::isfinite(total.value)) {
        throw TrainingError("training diverged: non-finite loss in epoch " + std::to_string(epoch),
                            static_cast<int>(epoch));
      }

      const auto grads = model.backward(cache, total.grad_logit, total.grad_repr);
      try {
        numcore::adam_step(model, grads, adam, cfg.lr, cfg.weight_decay);
      } catch (const NumericError& e) {
        throw TrainingError(std::string(e.what()) + " in epoch " + std::to_string(epoch), static_cast<int>(epoch));
      }

      const double share = static_cast<double>(end - start) / static_cast<double>(n);
      rec.hard += share * hard.value;
      rec.soft += share * soft_value;
      rec.feat += share * feat_value;
      rec.self += share * self_value;
      rec.total += share * total.value;
      if (use_self) {
        for (std::size_t k = 0; k < idx.size(); ++k) {
          next_snapshot[static_cast<Eigen::Index>(idx[k])] = cache.logits[static_cast<Eigen::Index>(k)];
        }
      }
    }
    if (use_self) snapshot = next_snapshot;

    const VectorXd p_valid = model.predict(in.x_valid);
    rec.valid_loss = losses::hard_loss(cfg.hard_term, in.y_valid, p_valid, cfg.gamma, priors).value;
    if (!std::isfinite(rec.valid_loss)) {
      throw TrainingError("training diverged: non-finite validation loss in epoch " + std::to_string(epoch),
                          static_cast<int>(epoch));
    }
    if (has_both_classes(in.y_valid)) {
      const metrics::ScoredSet scored{p_valid, in.y_valid};
      rec.valid_auc = metrics::auc(scored);
      rec.valid_ks = metrics::ks(scored);
      rec.valid_recall = metrics::recall_at_k(scored, cfg.k_percent);
    }
    result.trace.epochs.push_back(rec);

    if (rec.valid_loss < best_loss) {
      best_loss = rec.valid_loss;
      result.trace.best_epoch = epoch;
      result.model = model;
    }
    if (epoch - result.trace.best_epoch > cfg.patience) {
      result.trace.stop_reason = "patience";
      break;
    }
  }
  return result;
}

FitInputs split_inputs(const TwoPhaseDataset& ds, const MatrixXd& x) {
  const auto train = ds.rows(Split::kTrain);
  const auto valid = ds.rows(Split::kValid);
  if (train.empty() || valid.empty()) throw DataError("dataset needs nonempty train and valid splits");
  return {numcore::gather_rows(x, train), numcore::gather(ds.y, train), numcore::gather_rows(x, valid),
          numcore::gather(ds.y, valid)};
}

numcore::MlpShape shape_for(std::size_t input_dim, const DistillConfig& cfg) {
  return {input_dim, cfg.hidden_dims, cfg.dropout};
}

void require_in_service(const TwoPhaseDataset& ds, const char* who) {
  if (!ds.has_in_service()) throw DataError(std::string(who) + ": dataset has no in-service block");
}

MlpModel init_from_teacher(const MlpModel& teacher, const DistillConfig& cfg, std::size_t d_pre) {
  if (teacher.shape().hidden_dims != cfg.hidden_dims) {
    throw ConfigError("pretrain_only: teacher and student hidden layers differ");
  }
  auto init_rng = engine(cfg.seed, Role::kStudent, Purpose::kInit);
  MlpModel student = MlpModel::he_uniform(shape_for(d_pre, cfg), init_rng);
  auto& dst = student.parameters();
  const auto& src = teacher.parameters();
  for (std::size_t l = 0; l < dst.encoder.size(); ++l) {
    // The first layer only transfers when both feature blocks have the same width.
    if (l == 0 && d_pre != teacher.input_dim()) continue;
    dst.encoder[l] = src.encoder[l];
  }
  dst.classifier = src.classifier;
  return student;
}

}  // namespace

TrainMode parse_mode(std::string_view s) {
  if (s == "full") return TrainMode::kFull;
  if (s == "no_coarse") return TrainMode::kNoCoarse;
  if (s == "no_fine") return TrainMode::kNoFine;
  if (s == "no_self") return TrainMode::kNoSelf;
  if (s == "pretrain_only") return TrainMode::kPretrainOnly;
  if (s == "baseline_pre") return TrainMode::kBaselinePre;
  if (s == "oracle") return TrainMode::kOracle;
  throw ConfigError("unknown mode '" + std::string(s) +
                    "' (expected full|no_coarse|no_fine|no_self|pretrain_only|baseline_pre|oracle)");
}

std::string_view to_string(TrainMode m) {
  switch (m) {
    case TrainMode::kFull: return "full";
    case TrainMode::kNoCoarse: return "no_coarse";
    case TrainMode::kNoFine: return "no_fine";
    case TrainMode::kNoSelf: return "no_self";
    case TrainMode::kPretrainOnly: return "pretrain_only";
    case TrainMode::kBaselinePre: return "baseline_pre";
    case TrainMode::kOracle: return "oracle";
  }
  return "full";
}

const std::vector<TrainMode>& ablation_modes() {
  static const std::vector<TrainMode> modes{TrainMode::kBaselinePre, TrainMode::kPretrainOnly, TrainMode::kNoFine,
                                            TrainMode::kNoCoarse,    TrainMode::kFull,         TrainMode::kOracle};
  return modes;
}

void DistillConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
  if (!(beta >= 0.0)) throw ConfigError("beta must be >= 0");
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
  if (!(tau >= 1.0)) throw ConfigError("tau must be >= 1");
  if (!(gamma >= 0.0)) throw ConfigError("gamma must be >= 0");
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(k_percent > 0.0 && k_percent <= 100.0)) throw ConfigError("k_percent must lie in (0, 100]");
  for (std::size_t h : hidden_dims) {
    if (h == 0) throw ConfigError("hidden_dims entries must be positive");
  }
}

DistillConfig DistillConfig::effective() const {
  DistillConfig c = *this;
  switch (mode) {
    case TrainMode::kNoCoarse: c.beta = 0.0; break;
    case TrainMode::kNoFine: c.alpha = 0.0; break;
    case TrainMode::kNoSelf: c.lambda = 0.0; break;
    case TrainMode::kPretrainOnly:
    case TrainMode::kBaselinePre:
    case TrainMode::kOracle:
      c.alpha = c.beta = c.lambda = 0.0;
      break;
    case TrainMode::kFull: break;
  }
  return c;
}

bool DistillConfig::distills() const {
  return mode == TrainMode::kFull || mode == TrainMode::kNoCoarse || mode == TrainMode::kNoFine ||
         mode == TrainMode::kNoSelf;
}

TrainResult train_teacher(const TwoPhaseDataset& ds, const DistillConfig& cfg) {
  cfg.validate();
  require_in_service(ds, "train_teacher");
  auto init_rng = engine(cfg.seed, Role::kTeacher, Purpose::kInit);
  MlpModel model = MlpModel::he_uniform(shape_for(ds.d_in(), cfg), init_rng);
  return fit(std::move(model), split_inputs(ds, ds.x_in), cfg, Role::kTeacher, nullptr);
}

TrainResult train_student(const TwoPhaseDataset& ds, const MlpModel* teacher, const DistillConfig& cfg) {
  const DistillConfig eff = cfg.effective();
  eff.validate();

  if (eff.mode == TrainMode::kOracle) {
    require_in_service(ds, "oracle");
    auto init_rng = engine(eff.seed, Role::kStudent, Purpose::kInit);
    MlpModel model = MlpModel::he_uniform(shape_for(ds.d_pre() + ds.d_in(), eff), init_rng);
    return fit(std::move(model), split_inputs(ds, ds.concatenated()), eff, Role::kStudent, nullptr);
  }

  if (eff.mode == TrainMode::kBaselinePre) {
    auto init_rng = engine(eff.seed, Role::kStudent, Purpose::kInit);
    MlpModel model = MlpModel::he_uniform(shape_for(ds.d_pre(), eff), init_rng);
    return fit(std::move(model), split_inputs(ds, ds.x_pre), eff, Role::kStudent, nullptr);
  }

  if (teacher == nullptr) {
    throw StateError(std::string("mode ") + std::string(to_string(eff.mode)) + " needs a trained teacher");
  }

  if (eff.mode == TrainMode::kPretrainOnly) {
    MlpModel model = init_from_teacher(*teacher, eff, ds.d_pre());
    return fit(std::move(model), split_inputs(ds, ds.x_pre), eff, Role::kStudent, nullptr);
  }

  require_in_service(ds, "train_student");
  if (teacher->input_dim() != ds.d_in()) {
    throw DimensionError("teacher expects " + std::to_string(teacher->input_dim()) + " in-service columns, dataset has " +
                         std::to_string(ds.d_in()));
  }
  auto init_rng = engine(eff.seed, Role::kStudent, Purpose::kInit);
  MlpModel model = MlpModel::he_uniform(shape_for(ds.d_pre(), eff), init_rng);
  if (eff.beta > 0.0 && teacher->repr_dim() != model.repr_dim()) {
    throw ConfigError("beta > 0 needs equal representation widths (teacher " + std::to_string(teacher->repr_dim()) +
                      ", student " + std::to_string(model.repr_dim()) + ")");
  }

  const auto train_rows = ds.rows(Split::kTrain);
  const auto teacher_out = teacher->forward_eval(numcore::gather_rows(ds.x_in, train_rows));
  TeacherTargets targets{teacher_out.logits, teacher_out.representation()};
  return fit(std::move(model), split_inputs(ds, ds.x_pre), eff, Role::kStudent, &targets);
}

VectorXd predict(const MlpModel& model, const MatrixXd& x) { return model.predict(x); }

MatrixXd student_input(const TwoPhaseDataset& ds, TrainMode mode) {
  if (mode == TrainMode::kOracle) {
    require_in_service(ds, "oracle");
    return ds.concatenated();
  }
  return ds.x_pre;
}

metrics::EvalReport evaluate_split(const MlpModel& model, const TwoPhaseDataset& ds, Split split, TrainMode mode,
                                   double k_percent, std::uint64_t seed) {
  const TwoPhaseDataset part = ds.subset(split);
  const VectorXd p = predict(model, student_input(part, mode));
  return metrics::evaluate({p, part.y}, k_percent, std::string(data::to_string(split)), seed,
                           std::string(to_string(mode)));
}

const AblationRow& AblationTable::row(TrainMode mode) const {
  for (const auto& r : rows) {
    if (r.mode == mode) return r;
  }
  throw StateError("ablation table has no row for mode " + std::string(to_string(mode)));
}

AblationRow summarize(TrainMode mode, std::vector<metrics::EvalReport> reports) {
  AblationRow row;
  row.mode = mode;
  row.per_seed = std::move(reports);
  const double count = static_cast<double>(row.per_seed.size());
  if (row.per_seed.empty()) return row;
  auto stats = [&](auto field, double& mean, double& sd) {
    double sum = 0.0;
    for (const auto& r : row.per_seed) sum += field(r);
    mean = sum / count;
    double var = 0.0;
    for (const auto& r : row.per_seed) var += (field(r) - mean) * (field(r) - mean);
    sd = std::sqrt(var / count);
  };
  stats([](const metrics::EvalReport& r) { return r.auc; }, row.mean_auc, row.std_auc);
  stats([](const metrics::EvalReport& r) { return r.ks; }, row.mean_ks, row.std_ks);
  stats([](const metrics::EvalReport& r) { return r.recall_at_k; }, row.mean_recall, row.std_recall);
  return row;
}

void parallel_for(std::size_t count, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
  jobs = std::max<std::size_t>(1, std::min(jobs, count));
  if (jobs == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> workers;
  workers.reserve(jobs);
  for (std::size_t w = 0; w < jobs; ++w) {
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : workers) t.join();
  if (failure) std::rethrow_exception(failure);
}

AblationTable run_ablation(const TwoPhaseDataset& ds, const DistillConfig& teacher_cfg,
                           const DistillConfig& student_cfg, const std::vector<std::uint64_t>& seeds,
                           std::size_t jobs, const std::vector<TrainMode>& modes) {
  // reports[mode][seed]
  std::vector<std::vector<metrics::EvalReport>> reports(modes.size(),
                                                        std::vector<metrics::EvalReport>(seeds.size()));
  const bool needs_teacher = std::any_of(modes.begin(), modes.end(), [](TrainMode m) {
    return m != TrainMode::kBaselinePre && m != TrainMode::kOracle;
  });

  parallel_for(seeds.size(), jobs, [&](std::size_t s) {
    DistillConfig tcfg = teacher_cfg;
    tcfg.seed = seeds[s];
    std::optional<MlpModel> teacher;
    if (needs_teacher) teacher = train_teacher(ds, tcfg).model;
    for (std::size_t m = 0; m < modes.size(); ++m) {
      DistillConfig cfg = student_cfg;
      cfg.seed = seeds[s];
      cfg.mode = modes[m];
      const TrainResult res = train_student(ds, teacher ? &*teacher : nullptr, cfg);
      reports[m][s] = evaluate_split(res.model, ds, Split::kTest, modes[m], cfg.k_percent, seeds[s]);
    }
  });

  AblationTable table;
  for (std::size_t m = 0; m < modes.size(); ++m) table.rows.push_back(summarize(modes[m], std::move(reports[m])));
  return table;
}

}  // namespace mgkd::pipeline
