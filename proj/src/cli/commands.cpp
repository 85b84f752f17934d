#include "mgkd/cli/commands.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <ostream>
#include <sstream>

#include "mgkd/cli/model_io.hpp"
#include "mgkd/cli/report.hpp"
#include "mgkd/errors.hpp"
#include "mgkd/pipeline.hpp"

namespace mgkd::cli {
namespace {

namespace fs = std::filesystem;
using data::Split;
using data::TwoPhaseDataset;
using pipeline::DistillConfig;
using pipeline::TrainMode;

constexpr const char* kManifestFormat = "mgkd-manifest/1";

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Prepared {
  TwoPhaseDataset raw;           // split-tagged, unstandardized
  TwoPhaseDataset standardized;  // scaler fit on the train rows
  data::Scaler scaler;
  std::string fingerprint;
  std::string source;
};

Prepared prepare(const RunConfig& cfg) {
  Prepared p;
  TwoPhaseDataset rows;
  if (cfg.dataset_path) {
    rows = data::load_delimited(*cfg.dataset_path);
    p.source = cfg.dataset_path->string();
  } else {
    rows = data::generate_synthetic(cfg.dataset);
    p.source = "generated";
  }
  p.fingerprint = dataset_fingerprint(rows);
  p.raw = data::temporal_split(rows, cfg.frac_valid, cfg.frac_test);
  p.scaler = data::fit_standardize(p.raw);
  p.standardized = data::apply_standardize(p.raw, p.scaler);
  return p;
}

std::vector<std::uint64_t> seed_list(const Invocation& inv) {
  if (inv.seeds) {
    if (inv.seeds->empty()) throw ConfigError("--seeds is empty");
    return *inv.seeds;
  }
  if (inv.seed) return {*inv.seed};
  return {0, 1, 2, 3, 4};
}

std::uint64_t single_seed(const Invocation& inv) {
  if (inv.seed) return *inv.seed;
  if (inv.seeds && !inv.seeds->empty()) return inv.seeds->front();
  return 0;
}

std::string role_name(const Invocation& inv) { return inv.mode + "_seed" + std::to_string(single_seed(inv)); }

fs::path absolute_path(const fs::path& p) { return fs::absolute(p).lexically_normal(); }

numcore::RowVectorXd concat(const numcore::RowVectorXd& a, const numcore::RowVectorXd& b) {
  numcore::RowVectorXd out(a.size() + b.size());
  out << a, b;
  return out;
}

Record config_record(const std::string& command, const RunConfig& cfg) {
  Record r;
  r["type"] = "config";
  r["command"] = command;
  r["config"] = to_json(cfg);
  return r;
}

/// Collects the records of one command: all of them go to the JSONL report,
/// all but the config echo count as reported metrics.
class Reporter {
 public:
  explicit Reporter(const fs::path& path) : writer_(path), path_(path) {}

  void config(const std::string& command, const RunConfig& cfg) { writer_.write(config_record(command, cfg)); }

  void metric(const Record& r) {
    std::lock_guard lock(mutex_);
    writer_.write(r);
    metrics_.push_back(r);
  }

  const Record& metrics() const { return metrics_; }
  const fs::path& path() const { return path_; }

 private:
  ReportWriter writer_;
  fs::path path_;
  Record metrics_ = Record::array();
  std::mutex mutex_;
};

struct Outcome {
  Record manifest;
  fs::path manifest_file;
};

Record invocation_json(const Invocation& inv, const std::vector<std::uint64_t>& seeds) {
  Record j;
  j["command"] = inv.command;
  j["mode"] = inv.mode;
  j["seeds"] = seeds;
  j["jobs"] = inv.jobs;
  j["split"] = inv.split;
  j["teacher"] = inv.teacher ? Record(inv.teacher->string()) : Record(nullptr);
  j["model"] = inv.model ? Record(inv.model->string()) : Record(nullptr);
  j["param"] = inv.param ? Record(*inv.param) : Record(nullptr);
  j["grid"] = inv.grid ? Record(*inv.grid) : Record(nullptr);
  return j;
}

Invocation invocation_from_json(const nlohmann::json& j) {
  Invocation inv;
  try {
    inv.command = j.at("command").get<std::string>();
    inv.mode = j.at("mode").get<std::string>();
    inv.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    inv.jobs = j.at("jobs").get<std::size_t>();
    inv.split = j.at("split").get<std::string>();
    if (!j.at("teacher").is_null()) inv.teacher = j.at("teacher").get<std::string>();
    if (!j.at("model").is_null()) inv.model = j.at("model").get<std::string>();
    if (!j.at("param").is_null()) inv.param = j.at("param").get<std::string>();
    if (!j.at("grid").is_null()) inv.grid = j.at("grid").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("manifest invocation is malformed: ") + e.what());
  }
  return inv;
}

class ManifestBuilder {
 public:
  ManifestBuilder(const Invocation& inv, const RunConfig& cfg, const std::vector<std::uint64_t>& seeds)
      : start_(Clock::now()) {
    manifest_["format"] = kManifestFormat;
    manifest_["command"] = inv.command;
    manifest_["invocation"] = invocation_json(inv, seeds);
    manifest_["config"] = to_config_text(cfg);
    manifest_["seeds"] = seeds;
    manifest_["artifacts"] = Record::object();
    manifest_["timings"] = Record::object();
  }

  void dataset(const std::string& source, const std::string& fingerprint, std::size_t rows) {
    manifest_["dataset"] = {{"source", source}, {"fingerprint", fingerprint}, {"rows", rows}};
  }
  void artifact(const std::string& name, const fs::path& p) { manifest_["artifacts"][name] = p.string(); }
  void timing(const std::string& name, double seconds) { manifest_["timings"][name] = seconds; }

  Outcome finish(const Record& metrics, const fs::path& file) {
    timing("total_seconds", seconds_since(start_));
    manifest_["metrics"] = metrics;
    std::ofstream out(file, std::ios::trunc);
    if (!out) throw Error("cannot write manifest '" + file.string() + "'");
    out << manifest_.dump(2) << '\n';
    if (!out) throw Error("failed writing manifest '" + file.string() + "'");
    return {manifest_, file};
  }

 private:
  Record manifest_;
  Clock::time_point start_;
};

metrics::EvalReport evaluate_scores(const numcore::MlpModel& model, const numcore::MatrixXd& x,
                                    const numcore::VectorXd& y, double k, Split split, std::uint64_t seed,
                                    const std::string& label) {
  return metrics::evaluate({model.predict(x), y}, k, std::string(data::to_string(split)), seed, label);
}

Outcome cmd_generate(const Invocation& inv, const RunConfig& cfg, const fs::path& out_dir, std::ostream& out) {
  ManifestBuilder manifest(inv, cfg, {cfg.dataset.seed});
  const TwoPhaseDataset ds = data::generate_synthetic(cfg.dataset);
  const fs::path file = out_dir / "dataset.csv";
  data::save_delimited(ds, file);
  const std::string fingerprint = dataset_fingerprint(ds);
  const double positives = ds.y.sum();
  const double rate = positives / static_cast<double>(ds.size());

  Reporter report(out_dir / "generate.jsonl");
  report.config("generate", cfg);
  Record r;
  r["type"] = "dataset";
  r["rows"] = ds.size();
  r["positives"] = static_cast<std::size_t>(positives);
  r["positive_rate"] = rate;
  r["fingerprint"] = fingerprint;
  report.metric(r);

  out << "wrote " << ds.size() << " rows (positive rate " << format_real(rate) << ") to " << file.string() << "\n";
  manifest.dataset("generated", fingerprint, ds.size());
  manifest.artifact("dataset", file);
  manifest.artifact("report", report.path());
  return manifest.finish(report.metrics(), manifest_path(inv, out_dir));
}

Outcome cmd_train(const Invocation& inv, const RunConfig& cfg, const fs::path& out_dir, std::ostream& out) {
  const bool is_teacher = inv.mode == "teacher";
  const TrainMode mode = is_teacher ? TrainMode::kFull : pipeline::parse_mode(inv.mode);
  const std::uint64_t seed = single_seed(inv);
  Invocation recorded = inv;

  DistillConfig dcfg = is_teacher ? cfg.teacher : cfg.student;
  dcfg.seed = seed;
  dcfg.mode = mode;

  // Dependencies are checked before any data is touched.
  std::optional<ModelFile> teacher;
  const bool needs_teacher = !is_teacher && (dcfg.distills() || mode == TrainMode::kPretrainOnly);
  if (needs_teacher) {
    const fs::path tpath =
        absolute_path(inv.teacher ? *inv.teacher : out_dir / ("teacher_seed" + std::to_string(seed) + ".mgkd"));
    if (!fs::exists(tpath)) {
      throw MissingArtifactError("mode " + inv.mode + " needs teacher weights at '" + tpath.string() +
                                 "' (run `mgkd train --mode teacher` first)");
    }
    teacher = load_model(tpath);
    if (teacher->input != InputKind::kIn) throw DataError("'" + tpath.string() + "' is not an in-service model");
    recorded.teacher = tpath;
  }

  ManifestBuilder manifest(recorded, cfg, {seed});
  Prepared data = prepare(cfg);
  manifest.dataset(data.source, data.fingerprint, data.raw.size());
  if (teacher) data.standardized.x_in = model_input(*teacher, data.raw);

  const std::string role = role_name(inv);
  Reporter report(out_dir / (role + ".jsonl"));
  report.config("train", cfg);

  const auto t0 = Clock::now();
  pipeline::TrainResult result = is_teacher ? pipeline::train_teacher(data.standardized, dcfg)
                                            : pipeline::train_student(data.standardized, teacher ? &teacher->model : nullptr, dcfg);
  manifest.timing("train_seconds", seconds_since(t0));

  for (const auto& e : result.trace.epochs) report.metric(epoch_record(role, seed, e));
  report.metric(summary_record(role, seed, result.trace));

  ModelFile file{result.model, InputKind::kPre, data.scaler.pre_mean, data.scaler.pre_std};
  if (is_teacher) {
    file.input = InputKind::kIn;
    file.mean = data.scaler.in_mean;
    file.std = data.scaler.in_std;
  } else if (mode == TrainMode::kOracle) {
    file.input = InputKind::kPreIn;
    file.mean = concat(data.scaler.pre_mean, data.scaler.in_mean);
    file.std = concat(data.scaler.pre_std, data.scaler.in_std);
  }

  std::vector<metrics::EvalReport> evals;
  for (Split split : {Split::kValid, Split::kTest}) {
    const TwoPhaseDataset part = data.raw.subset(split);
    evals.push_back(evaluate_scores(file.model, model_input(file, part), part.y, dcfg.k_percent, split, seed, role));
    report.metric(eval_record(evals.back()));
  }

  const fs::path model_file = out_dir / (role + ".mgkd");
  save_model(file, model_file);
  out << "trained " << role << ": best epoch " << result.trace.best_epoch << " of " << result.trace.epochs.size()
      << " (" << result.trace.stop_reason << ")\n"
      << eval_table(evals);
  manifest.artifact("model", model_file);
  manifest.artifact("report", report.path());
  return manifest.finish(report.metrics(), manifest_path(inv, out_dir));
}

Outcome cmd_eval(const Invocation& inv, const RunConfig& cfg, const fs::path& out_dir, std::ostream& out) {
  if (!inv.model) throw ConfigError("eval needs --model");
  const Split split = data::parse_split(inv.split);
  const std::uint64_t seed = single_seed(inv);
  Invocation recorded = inv;
  recorded.model = absolute_path(*inv.model);
  const ModelFile file = load_model(*recorded.model);

  ManifestBuilder manifest(recorded, cfg, {seed});
  const Prepared data = prepare(cfg);
  manifest.dataset(data.source, data.fingerprint, data.raw.size());

  const TwoPhaseDataset part = data.raw.subset(split);
  const std::string label = inv.model->stem().string();
  const auto report_row = evaluate_scores(file.model, model_input(file, part), part.y, cfg.student.k_percent, split, seed, label);

  Reporter report(out_dir / ("eval_" + label + "_" + inv.split + ".jsonl"));
  report.config("eval", cfg);
  report.metric(eval_record(report_row));
  out << eval_table({report_row});
  manifest.artifact("report", report.path());
  return manifest.finish(report.metrics(), manifest_path(inv, out_dir));
}

Outcome cmd_ablate(const Invocation& inv, const RunConfig& cfg, const fs::path& out_dir, std::ostream& out) {
  const auto seeds = seed_list(inv);
  ManifestBuilder manifest(inv, cfg, seeds);
  const Prepared data = prepare(cfg);
  manifest.dataset(data.source, data.fingerprint, data.raw.size());

  const auto t0 = Clock::now();
  const auto table = pipeline::run_ablation(data.standardized, cfg.teacher, cfg.student, seeds, inv.jobs);
  manifest.timing("train_seconds", seconds_since(t0));

  Reporter report(out_dir / "ablate.jsonl");
  report.config("ablate", cfg);
  for (const auto& row : table.rows) {
    DistillConfig eff = cfg.student;
    eff.mode = row.mode;
    report.metric(ablation_record(row, eff.effective()));
  }
  const OrderingCheck check = check_ordering(table);
  report.metric(ordering_record(check));
  out << ablation_table(table, check);
  manifest.artifact("report", report.path());
  return manifest.finish(report.metrics(), manifest_path(inv, out_dir));
}

Outcome cmd_sweep(const Invocation& inv, const RunConfig& cfg, const fs::path& out_dir, std::ostream& out) {
  const SweepParam param = inv.param ? parse_sweep_param(*inv.param) : cfg.sweep_param;
  const std::vector<double> grid = inv.grid ? *inv.grid : cfg.sweep_grid;
  if (grid.empty()) throw ConfigError("sweep: grid is empty");
  for (double v : grid) validate_sweep_value(param, v);
  const auto seeds = seed_list(inv);

  ManifestBuilder manifest(inv, cfg, seeds);
  const Prepared data = prepare(cfg);
  manifest.dataset(data.source, data.fingerprint, data.raw.size());

  // points[seed][grid index]
  std::vector<std::vector<metrics::EvalReport>> points(seeds.size(), std::vector<metrics::EvalReport>(grid.size()));
  const auto t0 = Clock::now();
  pipeline::parallel_for(seeds.size(), inv.jobs, [&](std::size_t s) {
    DistillConfig tcfg = cfg.teacher;
    tcfg.seed = seeds[s];
    const auto teacher = pipeline::train_teacher(data.standardized, tcfg).model;
    for (std::size_t g = 0; g < grid.size(); ++g) {
      DistillConfig scfg = with_sweep_value(cfg.student, param, grid[g]);
      scfg.seed = seeds[s];
      scfg.mode = TrainMode::kFull;
      const auto res = pipeline::train_student(data.standardized, &teacher, scfg);
      points[s][g] = pipeline::evaluate_split(res.model, data.standardized, Split::kTest, TrainMode::kFull,
                                              scfg.k_percent, seeds[s]);
    }
  });
  manifest.timing("train_seconds", seconds_since(t0));

  Reporter report(out_dir / ("sweep_" + std::string(to_string(param)) + ".jsonl"));
  report.config("sweep", cfg);
  std::vector<SweepPoint> flat;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    for (std::size_t s = 0; s < seeds.size(); ++s) {
      report.metric(sweep_record(to_string(param), grid[g], points[s][g]));
      flat.push_back({grid[g], points[s][g]});
    }
  }
  out << sweep_table(to_string(param), flat);
  manifest.artifact("report", report.path());
  return manifest.finish(report.metrics(), manifest_path(inv, out_dir));
}

RunConfig resolve_config(const Invocation& inv) {
  RunConfig cfg = inv.config ? load_config(*inv.config) : RunConfig{};
  for (const auto& o : inv.overrides) apply_override(cfg, o);
  if (inv.dataset) cfg.dataset_path = *inv.dataset;
  if (cfg.dataset_path) cfg.dataset_path = absolute_path(*cfg.dataset_path);
  cfg.validate();
  return cfg;
}

Outcome execute(const Invocation& inv, const RunConfig& cfg, const fs::path& out_dir, std::ostream& out) {
  fs::create_directories(out_dir);
  if (inv.command == "generate") return cmd_generate(inv, cfg, out_dir, out);
  if (inv.command == "train") return cmd_train(inv, cfg, out_dir, out);
  if (inv.command == "eval") return cmd_eval(inv, cfg, out_dir, out);
  if (inv.command == "ablate") return cmd_ablate(inv, cfg, out_dir, out);
  if (inv.command == "sweep") return cmd_sweep(inv, cfg, out_dir, out);
  throw ConfigError("unknown command '" + inv.command + "'");
}

int cmd_replay(const Invocation& inv, std::ostream& out, std::ostream& err) {
  if (!inv.manifest) throw ConfigError("replay needs --manifest");
  if (!fs::exists(*inv.manifest)) throw MissingArtifactError("manifest '" + inv.manifest->string() + "' does not exist");
  nlohmann::json stored;
  {
    std::ifstream in(*inv.manifest);
    try {
      stored = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("manifest '" + inv.manifest->string() + "': " + e.what());
    }
  }
  if (!stored.is_object() || stored.value("format", "") != kManifestFormat) {
    throw ParseError("'" + inv.manifest->string() + "' is not a run manifest");
  }
  const Invocation original = invocation_from_json(stored.at("invocation"));
  std::istringstream text(stored.at("config").get<std::string>());
  const RunConfig cfg = parse_config(text, "manifest");
  cfg.validate();

  const fs::path out_dir = inv.out ? *inv.out : inv.manifest->parent_path() / "replay";
  const Outcome fresh = execute(original, cfg, out_dir, out);

  if (stored.contains("dataset") && fresh.manifest.contains("dataset") &&
      stored["dataset"]["fingerprint"].get<std::string>() !=
          fresh.manifest["dataset"]["fingerprint"].get<std::string>()) {
    err << "replay: dataset fingerprint differs\n";
    return kExitFailure;
  }
  const nlohmann::json want = stored.at("metrics");
  const nlohmann::json got = nlohmann::json::parse(fresh.manifest["metrics"].dump());
  if (want.size() != got.size()) {
    err << "replay: " << got.size() << " metric records, manifest has " << want.size() << "\n";
    return kExitFailure;
  }
  for (std::size_t i = 0; i < want.size(); ++i) {
    if (want[i] != got[i]) {
      err << "replay: metric record " << i << " differs\n  manifest: " << want[i].dump() << "\n  replay:   " << got[i].dump()
          << "\n";
      return kExitFailure;
    }
  }
  out << "replay: " << want.size() << " metric records reproduced exactly\n";
  return kExitOk;
}

}  // namespace

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return kExitConfig;
  if (dynamic_cast<const MissingArtifactError*>(&e)) return kExitMissingArtifact;
  if (dynamic_cast<const StateError*>(&e)) return kExitMissingArtifact;
  if (dynamic_cast<const DimensionError*>(&e) || dynamic_cast<const DataError*>(&e) ||
      dynamic_cast<const ParseError*>(&e) || dynamic_cast<const GenerationError*>(&e)) {
    return kExitData;
  }
  if (dynamic_cast<const TrainingError*>(&e) || dynamic_cast<const NumericError*>(&e)) return kExitDivergence;
  return kExitFailure;
}

fs::path resolve_out_dir(const std::optional<fs::path>& flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("MGKD_OUT_DIR"); env != nullptr && *env != '\0') return env;
  return "mgkd_out";
}

std::string dataset_fingerprint(const TwoPhaseDataset& ds) {
  std::ostringstream text;
  data::write_delimited(ds, text);
  const std::string bytes = text.str();
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &length, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 computation failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  for (unsigned int i = 0; i < length; ++i) {
    hex += kHex[digest[i] >> 4];
    hex += kHex[digest[i] & 0xF];
  }
  return "sha256:" + hex;
}

fs::path manifest_path(const Invocation& inv, const fs::path& out_dir) {
  if (inv.command == "train") return out_dir / ("train_" + role_name(inv) + ".manifest.json");
  if (inv.command == "eval") {
    const std::string stem = inv.model ? inv.model->stem().string() : "model";
    return out_dir / ("eval_" + stem + "_" + inv.split + ".manifest.json");
  }
  return out_dir / (inv.command + ".manifest.json");
}

int run(const Invocation& inv, std::ostream& out, std::ostream& err) {
  try {
    if (inv.command == "replay") return cmd_replay(inv, out, err);
    const RunConfig cfg = resolve_config(inv);
    const Outcome outcome = execute(inv, cfg, resolve_out_dir(inv.out), out);
    out << "manifest: " << outcome.manifest_file.string() << "\n";
    return kExitOk;
  } catch (const std::exception& e) {
    err << "mgkd " << inv.command << ": error: " << e.what() << "\n";
    return exit_code_for(e);
  }
}

}  // namespace mgkd::cli
