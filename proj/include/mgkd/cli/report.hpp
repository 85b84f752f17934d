#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "mgkd/metrics.hpp"
#include "mgkd/pipeline.hpp"

namespace mgkd::cli {

using Record = nlohmann::ordered_json;

/// Machine-readable records, one JSON object per line. Every record carries a
/// "type": config, epoch, summary, eval, ablation, ordering or sweep.
Record epoch_record(std::string_view role, std::uint64_t seed, const pipeline::EpochRecord& e);
Record summary_record(std::string_view role, std::uint64_t seed, const pipeline::TrainTrace& trace);
Record eval_record(const metrics::EvalReport& r);
Record ablation_record(const pipeline::AblationRow& row, const pipeline::DistillConfig& effective);
Record sweep_record(std::string_view param, double value, const metrics::EvalReport& r);

/// Throws ParseError when a field is missing or has the wrong type.
metrics::EvalReport eval_from_record(const nlohmann::json& j);

/// Reads a JSONL report; blank lines are skipped. Throws ParseError naming the line.
std::vector<nlohmann::json> parse_report(std::istream& in);
std::vector<nlohmann::json> load_report(const std::filesystem::path& path);

/// Appends records to a JSONL file as they are produced.
class ReportWriter {
 public:
  explicit ReportWriter(const std::filesystem::path& path);
  void write(const Record& r);

 private:
  std::ofstream out_;
  std::filesystem::path path_;
};

/// Mean-order check over an ablation table: oracle >= full >= pretrain_only >= baseline_pre.
struct OrderingCheck {
  bool pass = false;
  std::vector<pipeline::TrainMode> sorted;  // by mean AUC, best first
};

OrderingCheck check_ordering(const pipeline::AblationTable& table);
Record ordering_record(const OrderingCheck& check);

std::string eval_table(const std::vector<metrics::EvalReport>& rows);
std::string ablation_table(const pipeline::AblationTable& table, const OrderingCheck& check);

struct SweepPoint {
  double value = 0.0;
  metrics::EvalReport report;
};

/// Per-value means over seeds.
std::string sweep_table(std::string_view param, const std::vector<SweepPoint>& points);

}  // namespace mgkd::cli
