#include "mgkd/cli/report.hpp"

#include <algorithm>
#include <cstdio>
#include <istream>
#include <map>
#include <sstream>

#include "mgkd/errors.hpp"

namespace mgkd::cli {
namespace {

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

template <typename T>
T field(const nlohmann::json& j, const char* key) {
  if (!j.contains(key)) throw ParseError(std::string("report record lacks '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ParseError(std::string("report field '") + key + "' has the wrong type");
  }
}

}  // namespace

Record epoch_record(std::string_view role, std::uint64_t seed, const pipeline::EpochRecord& e) {
  Record r;
  r["type"] = "epoch";
  r["role"] = role;
  r["seed"] = seed;
  r["epoch"] = e.epoch;
  r["hard"] = e.hard;
  r["soft"] = e.soft;
  r["feat"] = e.feat;
  r["self"] = e.self;
  r["total"] = e.total;
  r["valid_loss"] = e.valid_loss;
  r["valid_auc"] = e.valid_auc ? Record(*e.valid_auc) : Record(nullptr);
  r["valid_ks"] = e.valid_ks ? Record(*e.valid_ks) : Record(nullptr);
  r["valid_recall"] = e.valid_recall ? Record(*e.valid_recall) : Record(nullptr);
  return r;
}

Record summary_record(std::string_view role, std::uint64_t seed, const pipeline::TrainTrace& trace) {
  Record r;
  r["type"] = "summary";
  r["role"] = role;
  r["seed"] = seed;
  r["epochs_run"] = trace.epochs.size();
  r["best_epoch"] = trace.best_epoch;
  r["stop_reason"] = trace.stop_reason;
  if (trace.best_epoch > 0) r["best_valid_loss"] = trace.epochs[trace.best_epoch - 1].valid_loss;
  return r;
}

Record eval_record(const metrics::EvalReport& e) {
  Record r;
  r["type"] = "eval";
  r["mode"] = e.mode;
  r["split"] = e.split;
  r["seed"] = e.seed;
  r["auc"] = e.auc;
  r["ks"] = e.ks;
  r["recall_at_k"] = e.recall_at_k;
  r["k_percent"] = e.k_percent;
  r["n_pos"] = e.n_pos;
  r["n_neg"] = e.n_neg;
  return r;
}

Record ablation_record(const pipeline::AblationRow& row, const pipeline::DistillConfig& effective) {
  Record r;
  r["type"] = "ablation";
  r["mode"] = pipeline::to_string(row.mode);
  r["alpha"] = effective.alpha;
  r["beta"] = effective.beta;
  r["lambda"] = effective.lambda;
  r["mean_auc"] = row.mean_auc;
  r["std_auc"] = row.std_auc;
  r["mean_ks"] = row.mean_ks;
  r["std_ks"] = row.std_ks;
  r["mean_recall"] = row.mean_recall;
  r["std_recall"] = row.std_recall;
  Record per_seed = Record::array();
  for (const auto& e : row.per_seed) per_seed.push_back(eval_record(e));
  r["per_seed"] = per_seed;
  return r;
}

Record sweep_record(std::string_view param, double value, const metrics::EvalReport& e) {
  Record r;
  r["type"] = "sweep";
  r["param"] = param;
  r["value"] = value;
  r["seed"] = e.seed;
  r["auc"] = e.auc;
  r["ks"] = e.ks;
  r["recall_at_k"] = e.recall_at_k;
  r["split"] = e.split;
  return r;
}

metrics::EvalReport eval_from_record(const nlohmann::json& j) {
  if (!j.is_object() || field<std::string>(j, "type") != "eval") throw ParseError("record is not an eval record");
  metrics::EvalReport e;
  e.mode = field<std::string>(j, "mode");
  e.split = field<std::string>(j, "split");
  e.seed = field<std::uint64_t>(j, "seed");
  e.auc = field<double>(j, "auc");
  e.ks = field<double>(j, "ks");
  e.recall_at_k = field<double>(j, "recall_at_k");
  e.k_percent = field<double>(j, "k_percent");
  e.n_pos = field<std::size_t>(j, "n_pos");
  e.n_neg = field<std::size_t>(j, "n_neg");
  return e;
}

std::vector<nlohmann::json> parse_report(std::istream& in) {
  std::vector<nlohmann::json> out;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto j = nlohmann::json::parse(line);
      if (!j.is_object() || !j.contains("type")) throw ParseError("record has no type");
      out.push_back(std::move(j));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("report line " + std::to_string(number) + ": " + e.what());
    } catch (const ParseError& e) {
      throw ParseError("report line " + std::to_string(number) + ": " + e.what());
    }
  }
  return out;
}

std::vector<nlohmann::json> load_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError("report '" + path.string() + "' does not exist");
  return parse_report(in);
}

ReportWriter::ReportWriter(const std::filesystem::path& path) : out_(path, std::ios::trunc), path_(path) {
  if (!out_) throw Error("cannot write report '" + path.string() + "'");
}

void ReportWriter::write(const Record& r) {
  out_ << r.dump() << '\n';
  out_.flush();
  if (!out_) throw Error("failed writing report '" + path_.string() + "'");
}

OrderingCheck check_ordering(const pipeline::AblationTable& table) {
  using pipeline::TrainMode;
  OrderingCheck check;
  for (const auto& row : table.rows) check.sorted.push_back(row.mode);
  std::stable_sort(check.sorted.begin(), check.sorted.end(),
                   [&](TrainMode a, TrainMode b) { return table.row(a).mean_auc > table.row(b).mean_auc; });
  const std::vector<TrainMode> chain{TrainMode::kOracle, TrainMode::kFull, TrainMode::kPretrainOnly,
                                     TrainMode::kBaselinePre};
  check.pass = true;
  for (std::size_t i = 0; i + 1 < chain.size(); ++i) {
    if (table.row(chain[i]).mean_auc < table.row(chain[i + 1]).mean_auc) check.pass = false;
  }
  return check;
}

Record ordering_record(const OrderingCheck& check) {
  Record r;
  r["type"] = "ordering";
  r["expected"] = "oracle >= full >= pretrain_only >= baseline_pre";
  r["pass"] = check.pass;
  Record sorted = Record::array();
  for (auto m : check.sorted) sorted.push_back(pipeline::to_string(m));
  r["sorted_by_auc"] = sorted;
  return r;
}

std::string eval_table(const std::vector<metrics::EvalReport>& rows) {
  std::ostringstream out;
  out << pad("model", 24) << pad("split", 7) << pad("AUC", 9) << pad("KS", 9) << "Recall@k\n";
  for (const auto& r : rows) {
    out << pad(r.mode, 24) << pad(r.split, 7) << pad(fixed(r.auc), 9) << pad(fixed(r.ks), 9) << fixed(r.recall_at_k)
        << "\n";
  }
  return out.str();
}

std::string ablation_table(const pipeline::AblationTable& table, const OrderingCheck& check) {
  std::ostringstream out;
  out << pad("Method", 16) << pad("AUC", 18) << pad("KS", 18) << "Recall@10\n";
  auto cell = [](double mean, double sd) { return fixed(mean) + " +/- " + fixed(sd); };
  for (auto mode : check.sorted) {
    const auto& row = table.row(mode);
    out << pad(std::string(pipeline::to_string(mode)), 16) << pad(cell(row.mean_auc, row.std_auc), 18)
        << pad(cell(row.mean_ks, row.std_ks), 18) << cell(row.mean_recall, row.std_recall) << "\n";
  }
  out << "ordering oracle >= full >= pretrain_only >= baseline_pre: " << (check.pass ? "PASS" : "FAIL") << "\n";
  return out.str();
}

std::string sweep_table(std::string_view param, const std::vector<SweepPoint>& points) {
  std::map<double, std::vector<const metrics::EvalReport*>> by_value;
  for (const auto& p : points) by_value[p.value].push_back(&p.report);
  std::ostringstream out;
  out << pad(std::string(param), 10) << pad("seeds", 7) << pad("AUC", 9) << pad("KS", 9) << "Recall@k\n";
  for (const auto& [value, reports] : by_value) {
    double auc = 0.0, ks = 0.0, rec = 0.0;
    for (const auto* r : reports) {
      auc += r->auc;
      ks += r->ks;
      rec += r->recall_at_k;
    }
    const double n = static_cast<double>(reports.size());
    out << pad(fixed(value, 3), 10) << pad(std::to_string(reports.size()), 7) << pad(fixed(auc / n), 9)
        << pad(fixed(ks / n), 9) << fixed(rec / n) << "\n";
  }
  return out.str();
}

}  // namespace mgkd::cli
