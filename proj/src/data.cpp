#include "mgkd/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <string>

#include "mgkd/errors.hpp"

namespace mgkd::data {
namespace {

// Independent engine per purpose, so one block's draws never shift another's.
enum class Stream : std::uint64_t { kLoadings = 1, kLatent, kLabels, kPreNoise, kInNoise, kTimestamps, kLabelNoise };

std::mt19937_64 stream_engine(std::uint64_t seed, Stream s) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(s)};
  return std::mt19937_64(seq);
}

VectorXd unit_loadings(std::size_t d, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  VectorXd v(static_cast<Eigen::Index>(d));
  for (Eigen::Index j = 0; j < v.size(); ++j) v[j] = normal(rng);
  const double norm = v.norm();
  if (norm > 0.0) v /= norm;
  return v;
}

MatrixXd noisy_block(const VectorXd& z, const VectorXd& loadings, double snr, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  MatrixXd x(z.size(), loadings.size());
  const double noise_scale = 1.0 / std::sqrt(snr);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      // Column j: signal variance loadings[j]^2, noise variance loadings[j]^2 / snr.
      x(i, j) = loadings[j] * (z[i] + noise_scale * normal(rng));
    }
  }
  return x;
}

double mean_probability(const VectorXd& z, double a, double b) {
  double sum = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) sum += numcore::sigmoid(a * z[i] + b);
  return sum / static_cast<double>(z.size());
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_cells(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    cells.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

[[noreturn]] void parse_fail(std::size_t line, const std::string& msg) {
  throw ParseError("line " + std::to_string(line) + ": " + msg);
}

template <typename T>
T parse_number(std::string_view cell, std::size_t line, std::string_view column) {
  T value{};
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (ec != std::errc() || ptr != cell.data() + cell.size() || cell.empty()) {
    parse_fail(line, "non-numeric value '" + std::string(cell) + "' in column " + std::string(column));
  }
  return value;
}

void append_double(std::string& out, double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, res.ptr);
}

}  // namespace

std::string_view to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kValid: return "valid";
    case Split::kTest: return "test";
  }
  return "train";
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::kTrain;
  if (s == "valid") return Split::kValid;
  if (s == "test") return Split::kTest;
  throw ConfigError("unknown split '" + std::string(s) + "' (expected train|valid|test)");
}

std::vector<std::size_t> TwoPhaseDataset::rows(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < split.size(); ++i) {
    if (split[i] == s) out.push_back(i);
  }
  return out;
}

TwoPhaseDataset TwoPhaseDataset::select(std::span<const std::size_t> idx) const {
  TwoPhaseDataset out;
  out.x_pre = numcore::gather_rows(x_pre, idx);
  out.x_in = numcore::gather_rows(x_in, idx);
  out.y = numcore::gather(y, idx);
  out.user_id.reserve(idx.size());
  out.timestamp.reserve(idx.size());
  out.split.reserve(idx.size());
  for (std::size_t i : idx) {
    out.user_id.push_back(user_id[i]);
    out.timestamp.push_back(timestamp[i]);
    out.split.push_back(split[i]);
  }
  return out;
}

TwoPhaseDataset TwoPhaseDataset::subset(Split s) const {
  const std::vector<std::size_t> idx = rows(s);
  return select(idx);
}

MatrixXd TwoPhaseDataset::concatenated() const {
  MatrixXd out(x_pre.rows(), x_pre.cols() + x_in.cols());
  out << x_pre, x_in;
  return out;
}

void TwoPhaseDataset::validate() const {
  const auto n = static_cast<Eigen::Index>(size());
  if (x_pre.rows() != n || (x_in.cols() > 0 && x_in.rows() != n) ||
      user_id.size() != size() || timestamp.size() != size() || split.size() != size()) {
    throw DataError("dataset fields are not row-aligned");
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (y[i] != 0.0 && y[i] != 1.0) throw DataError("label outside {0,1} at row " + std::to_string(i));
  }
  if (!x_pre.allFinite() || !x_in.allFinite()) throw DataError("non-finite feature value");
}

bool TwoPhaseDataset::operator==(const TwoPhaseDataset& o) const {
  return x_pre.rows() == o.x_pre.rows() && x_pre.cols() == o.x_pre.cols() && x_in.rows() == o.x_in.rows() &&
         x_in.cols() == o.x_in.cols() && x_pre == o.x_pre && x_in == o.x_in && y == o.y &&
         user_id == o.user_id && timestamp == o.timestamp && split == o.split;
}

double SyntheticConfig::snr_in() const {
  return snr_in_base * (1.0 + window_gain * static_cast<double>(window_days) / 30.0);
}

void SyntheticConfig::validate() const {
  if (n < 2) throw ConfigError("synthetic: n must be at least 2");
  if (d_pre == 0) throw ConfigError("synthetic: d_pre must be positive");
  if (!(positive_rate > 0.0 && positive_rate < 1.0)) throw ConfigError("synthetic: positive_rate must lie in (0, 1)");
  if (!(snr_pre > 0.0)) throw ConfigError("synthetic: snr_pre must be positive");
  if (!(snr_in_base > 0.0)) throw ConfigError("synthetic: snr_in_base must be positive");
  if (window_days != 30 && window_days != 60 && window_days != 90) {
    throw ConfigError("synthetic: window_days must be one of 30, 60, 90");
  }
  if (!(window_gain >= 0.0)) throw ConfigError("synthetic: window_gain must be >= 0");
  if (!(label_noise >= 0.0 && label_noise < 0.5)) throw ConfigError("synthetic: label_noise must lie in [0, 0.5)");
  if (!(latent_scale > 0.0)) throw ConfigError("synthetic: latent_scale must be positive");
  if (d_in > 0 && !(snr_in() > snr_pre)) {
    throw ConfigError("synthetic: in-service snr must exceed snr_pre");
  }
}

TwoPhaseDataset generate_synthetic(const SyntheticConfig& cfg) {
  cfg.validate();
  const auto n = static_cast<Eigen::Index>(cfg.n);

  auto loadings_rng = stream_engine(cfg.seed, Stream::kLoadings);
  const VectorXd p_load = unit_loadings(cfg.d_pre, loadings_rng);
  const VectorXd q_load = unit_loadings(cfg.d_in, loadings_rng);

  auto latent_rng = stream_engine(cfg.seed, Stream::kLatent);
  std::normal_distribution<double> normal;
  VectorXd z(n);
  for (Eigen::Index i = 0; i < n; ++i) z[i] = normal(latent_rng);

  // Mean default probability is increasing in the intercept b.
  const double a = cfg.latent_scale;
  double lo = -60.0;
  double hi = 60.0;
  for (int step = 0; step < 100; ++step) {
    const double mid = 0.5 * (lo + hi);
    if (mean_probability(z, a, mid) < cfg.positive_rate) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  const double b = 0.5 * (lo + hi);
  if (std::abs(mean_probability(z, a, b) - cfg.positive_rate) > 1e-6) {
    throw GenerationError("synthetic: could not calibrate the positive rate within 100 bisection steps");
  }

  TwoPhaseDataset ds;
  ds.y.resize(n);
  auto label_rng = stream_engine(cfg.seed, Stream::kLabels);
  auto flip_rng = stream_engine(cfg.seed, Stream::kLabelNoise);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (Eigen::Index i = 0; i < n; ++i) {
    double label = unif(label_rng) < numcore::sigmoid(a * z[i] + b) ? 1.0 : 0.0;
    if (unif(flip_rng) < cfg.label_noise) label = 1.0 - label;
    ds.y[i] = label;
  }

  auto pre_rng = stream_engine(cfg.seed, Stream::kPreNoise);
  ds.x_pre = noisy_block(z, p_load, cfg.snr_pre, pre_rng);
  if (cfg.d_in > 0) {
    auto in_rng = stream_engine(cfg.seed, Stream::kInNoise);
    ds.x_in = noisy_block(z, q_load, cfg.snr_in(), in_rng);
  } else {
    ds.x_in.resize(n, 0);
  }

  auto ts_rng = stream_engine(cfg.seed, Stream::kTimestamps);
  std::uniform_int_distribution<std::int64_t> day_second(0, 365LL * 86'400 - 1);
  ds.user_id.resize(cfg.n);
  ds.timestamp.resize(cfg.n);
  for (std::size_t i = 0; i < cfg.n; ++i) {
    ds.user_id[i] = static_cast<std::int64_t>(i);
    ds.timestamp[i] = day_second(ts_rng);
  }
  ds.split.assign(cfg.n, Split::kTrain);
  return ds;
}

void write_delimited(const TwoPhaseDataset& ds, std::ostream& out) {
  std::string line = "user_id,ts,y";
  for (std::size_t j = 0; j < ds.d_pre(); ++j) line += ",pre_" + std::to_string(j);
  for (std::size_t j = 0; j < ds.d_in(); ++j) line += ",in_" + std::to_string(j);
  line += '\n';
  out << line;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    line.clear();
    line += std::to_string(ds.user_id[i]);
    line += ',';
    line += std::to_string(ds.timestamp[i]);
    line += ds.y[r] == 1.0 ? ",1" : ",0";
    for (Eigen::Index j = 0; j < ds.x_pre.cols(); ++j) {
      line += ',';
      append_double(line, ds.x_pre(r, j));
    }
    for (Eigen::Index j = 0; j < ds.x_in.cols(); ++j) {
      line += ',';
      append_double(line, ds.x_in(r, j));
    }
    line += '\n';
    out << line;
  }
}

void save_delimited(const TwoPhaseDataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  write_delimited(ds, out);
  if (!out) throw DataError("failed writing " + path.string());
}

TwoPhaseDataset read_delimited(std::istream& in, const DelimitedSchema& schema) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("line 1: missing header");
  const std::vector<std::string_view> header = split_cells(line);
  const char* required[] = {"user_id", "ts", "y"};
  for (std::size_t c = 0; c < 3; ++c) {
    if (header.size() <= c || header[c] != required[c]) {
      throw ParseError("line 1: missing column '" + std::string(required[c]) + "' at position " + std::to_string(c));
    }
  }
  std::size_t d_pre = 0;
  std::size_t d_in = 0;
  for (std::size_t c = 3; c < header.size(); ++c) {
    const std::string pre = "pre_" + std::to_string(d_pre);
    const std::string inn = "in_" + std::to_string(d_in);
    if (d_in == 0 && header[c] == pre) {
      ++d_pre;
    } else if (header[c] == inn) {
      ++d_in;
    } else {
      throw ParseError("line 1: unexpected column '" + std::string(header[c]) + "' (expected " +
                       (d_in == 0 ? pre + " or " : std::string()) + inn + ")");
    }
  }
  if (schema.d_pre && *schema.d_pre != d_pre) {
    throw ParseError("line 1: expected " + std::to_string(*schema.d_pre) + " pre_* columns, found " +
                     std::to_string(d_pre));
  }
  if (schema.d_in && *schema.d_in != d_in) {
    throw ParseError("line 1: expected " + std::to_string(*schema.d_in) + " in_* columns, found " +
                     std::to_string(d_in));
  }

  std::vector<std::int64_t> ids;
  std::vector<std::int64_t> ts;
  std::vector<double> labels;
  std::vector<double> pre_values;
  std::vector<double> in_values;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const std::vector<std::string_view> cells = split_cells(line);
    if (cells.size() != header.size()) {
      parse_fail(line_no, "expected " + std::to_string(header.size()) + " cells, found " + std::to_string(cells.size()));
    }
    ids.push_back(parse_number<std::int64_t>(cells[0], line_no, "user_id"));
    ts.push_back(parse_number<std::int64_t>(cells[1], line_no, "ts"));
    const auto label = parse_number<std::int64_t>(cells[2], line_no, "y");
    if (label != 0 && label != 1) parse_fail(line_no, "label y=" + std::string(cells[2]) + " outside {0,1}");
    labels.push_back(static_cast<double>(label));
    for (std::size_t c = 3; c < cells.size(); ++c) {
      const double v = parse_number<double>(cells[c], line_no, header[c]);
      if (!std::isfinite(v)) parse_fail(line_no, "non-finite value in column " + std::string(header[c]));
      (c < 3 + d_pre ? pre_values : in_values).push_back(v);
    }
  }

  const auto n = static_cast<Eigen::Index>(labels.size());
  TwoPhaseDataset ds;
  ds.x_pre = Eigen::Map<const MatrixXd>(pre_values.data(), n, static_cast<Eigen::Index>(d_pre));
  ds.x_in = Eigen::Map<const MatrixXd>(in_values.data(), n, static_cast<Eigen::Index>(d_in));
  ds.y = Eigen::Map<const VectorXd>(labels.data(), n);
  ds.user_id = std::move(ids);
  ds.timestamp = std::move(ts);
  ds.split.assign(labels.size(), Split::kTrain);
  return ds;
}

TwoPhaseDataset load_delimited(const std::filesystem::path& path, const DelimitedSchema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifactError("dataset file not found: " + path.string());
  return read_delimited(in, schema);
}

TwoPhaseDataset temporal_split(const TwoPhaseDataset& ds, double frac_valid, double frac_test) {
  if (!(frac_valid > 0.0 && frac_test > 0.0 && frac_valid + frac_test < 1.0)) {
    throw ConfigError("temporal_split: fractions must be positive and sum to less than 1");
  }
  const std::size_t n = ds.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return ds.timestamp[a] < ds.timestamp[b]; });
  TwoPhaseDataset out = ds.select(order);

  const auto n_test = static_cast<std::size_t>(std::llround(frac_test * static_cast<double>(n)));
  const auto n_valid = static_cast<std::size_t>(std::llround(frac_valid * static_cast<double>(n)));
  if (n_test + n_valid >= n) throw SplitError("temporal_split: no rows left for training");
  std::size_t valid_start = n - n_test - n_valid;
  std::size_t test_start = n - n_test;
  // A timestamp group straddling a boundary goes entirely to the earlier split.
  auto advance = [&](std::size_t pos) {
    while (pos > 0 && pos < n && out.timestamp[pos] == out.timestamp[pos - 1]) ++pos;
    return pos;
  };
  valid_start = advance(valid_start);
  test_start = advance(std::max(test_start, valid_start));
  if (valid_start == 0 || valid_start >= test_start || test_start >= n) {
    throw SplitError("temporal_split: timestamps cannot be separated into nonempty train/valid/test splits");
  }
  for (std::size_t i = 0; i < n; ++i) {
    out.split[i] = i < valid_start ? Split::kTrain : (i < test_start ? Split::kValid : Split::kTest);
  }
  return out;
}

namespace {

void fit_block(const MatrixXd& x, const std::vector<std::size_t>& rows, RowVectorXd& mean, RowVectorXd& std) {
  mean = RowVectorXd::Zero(x.cols());
  std = RowVectorXd::Ones(x.cols());
  if (x.cols() == 0) return;
  const double count = static_cast<double>(rows.size());
  for (std::size_t r : rows) mean += x.row(static_cast<Eigen::Index>(r));
  mean /= count;
  RowVectorXd var = RowVectorXd::Zero(x.cols());
  for (std::size_t r : rows) var += (x.row(static_cast<Eigen::Index>(r)) - mean).array().square().matrix();
  var /= count;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double s = std::sqrt(var[j]);
    std[j] = s < Scaler::kMinStd ? 1.0 : s;
  }
}

}  // namespace

Scaler fit_standardize(const TwoPhaseDataset& ds) {
  const std::vector<std::size_t> train = ds.rows(Split::kTrain);
  if (train.empty()) throw DataError("fit_standardize: no training rows");
  Scaler s;
  fit_block(ds.x_pre, train, s.pre_mean, s.pre_std);
  fit_block(ds.x_in, train, s.in_mean, s.in_std);
  return s;
}

MatrixXd standardize_block(const MatrixXd& x, const RowVectorXd& mean, const RowVectorXd& std) {
  if (x.cols() != mean.size() || x.cols() != std.size()) {
    throw DimensionError("standardize: block has " + std::to_string(x.cols()) + " columns, scaler has " +
                         std::to_string(mean.size()));
  }
  MatrixXd out = x;
  out.rowwise() -= mean;
  out.array().rowwise() /= std.array();
  return out;
}

TwoPhaseDataset apply_standardize(const TwoPhaseDataset& ds, const Scaler& scaler) {
  TwoPhaseDataset out = ds;
  out.x_pre = standardize_block(ds.x_pre, scaler.pre_mean, scaler.pre_std);
  if (ds.has_in_service()) out.x_in = standardize_block(ds.x_in, scaler.in_mean, scaler.in_std);
  return out;
}

}  // namespace mgkd::data
