#include "mgkd/cli/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include "mgkd/errors.hpp"

namespace mgkd::cli {
namespace {

namespace pt = boost::property_tree;

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

[[noreturn]] void bad_value(const std::string& where, const std::string& expected, const std::string& text) {
  throw ConfigError("config: " + where + ": expected " + expected + ", got '" + text + "'");
}

double parse_real(const std::string& where, const std::string& text) {
  double v = 0.0;
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (text.empty() || ec != std::errc() || ptr != end || !std::isfinite(v)) bad_value(where, "a real number", text);
  return v;
}

template <typename Int>
Int parse_integer(const std::string& where, const std::string& text) {
  Int v{};
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (text.empty() || ec != std::errc() || ptr != end) bad_value(where, "an integer", text);
  return v;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> items;
  if (trim(text).empty()) return items;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) items.push_back(trim(item));
  return items;
}

template <typename T, typename Fmt>
std::string join(const std::vector<T>& items, Fmt fmt) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i > 0) out += ",";
    out += fmt(items[i]);
  }
  return out;
}

struct Field {
  std::string key;
  std::function<void(RunConfig&, const std::string& where, const std::string& text)> set;
  std::function<std::string(const RunConfig&)> get;
};

using Member = pipeline::DistillConfig RunConfig::*;

std::vector<Field> model_fields(Member m, bool distill) {
  std::vector<Field> f;
  auto real = [&](std::string key, double pipeline::DistillConfig::*field) {
    f.push_back({key, [m, field](RunConfig& c, const std::string& w, const std::string& t) { (c.*m).*field = parse_real(w, t); },
                 [m, field](const RunConfig& c) { return format_real((c.*m).*field); }});
  };
  auto size = [&](std::string key, std::size_t pipeline::DistillConfig::*field) {
    f.push_back({key,
                 [m, field](RunConfig& c, const std::string& w, const std::string& t) {
                   (c.*m).*field = parse_integer<std::size_t>(w, t);
                 },
                 [m, field](const RunConfig& c) { return std::to_string((c.*m).*field); }});
  };
  if (distill) {
    real("alpha", &pipeline::DistillConfig::alpha);
    real("beta", &pipeline::DistillConfig::beta);
    real("lambda", &pipeline::DistillConfig::lambda);
    real("tau", &pipeline::DistillConfig::tau);
    f.push_back({"feat_metric",
                 [m](RunConfig& c, const std::string& w, const std::string& t) {
                   try {
                     (c.*m).feat_metric = losses::parse_feat_metric(t);
                   } catch (const ConfigError&) {
                     bad_value(w, "mse or cosine", t);
                   }
                 },
                 [m](const RunConfig& c) { return std::string(losses::to_string((c.*m).feat_metric)); }});
  }
  f.push_back({"hard_term",
               [m](RunConfig& c, const std::string& w, const std::string& t) {
                 try {
                   (c.*m).hard_term = losses::parse_hard_term(t);
                 } catch (const ConfigError&) {
                   bad_value(w, "ce, reweighted, focal or reweighted_focal", t);
                 }
               },
               [m](const RunConfig& c) { return std::string(losses::to_string((c.*m).hard_term)); }});
  real("gamma", &pipeline::DistillConfig::gamma);
  real("lr", &pipeline::DistillConfig::lr);
  real("weight_decay", &pipeline::DistillConfig::weight_decay);
  real("dropout", &pipeline::DistillConfig::dropout);
  f.push_back({"hidden",
               [m](RunConfig& c, const std::string& w, const std::string& t) {
                 std::vector<std::size_t> dims;
                 for (const auto& item : split_list(t)) dims.push_back(parse_integer<std::size_t>(w, item));
                 (c.*m).hidden_dims = std::move(dims);
               },
               [m](const RunConfig& c) {
                 return join((c.*m).hidden_dims, [](std::size_t v) { return std::to_string(v); });
               }});
  size("batch_size", &pipeline::DistillConfig::batch_size);
  size("max_epochs", &pipeline::DistillConfig::max_epochs);
  size("patience", &pipeline::DistillConfig::patience);
  real("k_percent", &pipeline::DistillConfig::k_percent);
  return f;
}

std::vector<Field> dataset_fields() {
  std::vector<Field> f;
  auto real = [&](std::string key, double data::SyntheticConfig::*field) {
    f.push_back({key, [field](RunConfig& c, const std::string& w, const std::string& t) { c.dataset.*field = parse_real(w, t); },
                 [field](const RunConfig& c) { return format_real(c.dataset.*field); }});
  };
  auto size = [&](std::string key, std::size_t data::SyntheticConfig::*field) {
    f.push_back({key,
                 [field](RunConfig& c, const std::string& w, const std::string& t) {
                   c.dataset.*field = parse_integer<std::size_t>(w, t);
                 },
                 [field](const RunConfig& c) { return std::to_string(c.dataset.*field); }});
  };
  f.push_back({"path",
               [](RunConfig& c, const std::string&, const std::string& t) {
                 if (t.empty()) {
                   c.dataset_path.reset();
                 } else {
                   c.dataset_path = t;
                 }
               },
               [](const RunConfig& c) { return c.dataset_path ? c.dataset_path->string() : std::string(); }});
  size("n", &data::SyntheticConfig::n);
  size("d_pre", &data::SyntheticConfig::d_pre);
  size("d_in", &data::SyntheticConfig::d_in);
  real("positive_rate", &data::SyntheticConfig::positive_rate);
  real("snr_pre", &data::SyntheticConfig::snr_pre);
  real("snr_in_base", &data::SyntheticConfig::snr_in_base);
  f.push_back({"window_days",
               [](RunConfig& c, const std::string& w, const std::string& t) { c.dataset.window_days = parse_integer<int>(w, t); },
               [](const RunConfig& c) { return std::to_string(c.dataset.window_days); }});
  real("window_gain", &data::SyntheticConfig::window_gain);
  real("label_noise", &data::SyntheticConfig::label_noise);
  real("latent_scale", &data::SyntheticConfig::latent_scale);
  f.push_back({"seed",
               [](RunConfig& c, const std::string& w, const std::string& t) {
                 c.dataset.seed = parse_integer<std::uint64_t>(w, t);
               },
               [](const RunConfig& c) { return std::to_string(c.dataset.seed); }});
  f.push_back({"frac_valid",
               [](RunConfig& c, const std::string& w, const std::string& t) { c.frac_valid = parse_real(w, t); },
               [](const RunConfig& c) { return format_real(c.frac_valid); }});
  f.push_back({"frac_test",
               [](RunConfig& c, const std::string& w, const std::string& t) { c.frac_test = parse_real(w, t); },
               [](const RunConfig& c) { return format_real(c.frac_test); }});
  return f;
}

std::vector<Field> sweep_fields() {
  std::vector<Field> f;
  f.push_back({"param",
               [](RunConfig& c, const std::string& w, const std::string& t) {
                 try {
                   c.sweep_param = parse_sweep_param(t);
                 } catch (const ConfigError&) {
                   bad_value(w, "alpha, beta, lambda or tau", t);
                 }
               },
               [](const RunConfig& c) { return std::string(to_string(c.sweep_param)); }});
  f.push_back({"grid",
               [](RunConfig& c, const std::string& w, const std::string& t) {
                 std::vector<double> grid;
                 for (const auto& item : split_list(t)) grid.push_back(parse_real(w, item));
                 c.sweep_grid = std::move(grid);
               },
               [](const RunConfig& c) { return join(c.sweep_grid, format_real); }});
  return f;
}

struct Section {
  std::string name;
  std::vector<Field> fields;
};

const std::vector<Section>& sections() {
  static const std::vector<Section> all{
      {"dataset", dataset_fields()},
      {"teacher", model_fields(&RunConfig::teacher, false)},
      {"student", model_fields(&RunConfig::student, true)},
      {"sweep", sweep_fields()},
  };
  return all;
}

const Field& find_field(const std::string& section, const std::string& key) {
  for (const auto& s : sections()) {
    if (s.name != section) continue;
    for (const auto& f : s.fields) {
      if (f.key == key) return f;
    }
    throw ConfigError("config: [" + section + "] unknown key '" + key + "'");
  }
  throw ConfigError("config: unknown section [" + section + "]");
}

void assign(RunConfig& cfg, const std::string& section, const std::string& key, const std::string& value) {
  find_field(section, key).set(cfg, "[" + section + "] " + key, trim(value));
}

}  // namespace

SweepParam parse_sweep_param(std::string_view s) {
  if (s == "alpha") return SweepParam::kAlpha;
  if (s == "beta") return SweepParam::kBeta;
  if (s == "lambda") return SweepParam::kLambda;
  if (s == "tau") return SweepParam::kTau;
  throw ConfigError("unknown sweep parameter '" + std::string(s) + "' (expected alpha|beta|lambda|tau)");
}

std::string_view to_string(SweepParam p) {
  switch (p) {
    case SweepParam::kAlpha: return "alpha";
    case SweepParam::kBeta: return "beta";
    case SweepParam::kLambda: return "lambda";
    case SweepParam::kTau: return "tau";
  }
  return "alpha";
}

std::string format_real(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

void RunConfig::validate() const {
  dataset.validate();
  if (!(frac_valid > 0.0 && frac_test > 0.0 && frac_valid + frac_test < 1.0)) {
    throw ConfigError("config: [dataset] frac_valid and frac_test must be positive and sum below 1");
  }
  try {
    teacher.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("config: [teacher] ") + e.what());
  }
  try {
    student.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("config: [student] ") + e.what());
  }
  if (sweep_grid.empty()) throw ConfigError("config: [sweep] grid is empty");
  for (double v : sweep_grid) validate_sweep_value(sweep_param, v);
}

RunConfig parse_config(std::istream& in, const std::string& origin) {
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("config: " + origin + ": " + e.message() + " (line " + std::to_string(e.line()) + ")");
  }
  RunConfig cfg;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      throw ConfigError("config: key '" + section + "' is outside any section");
    }
    if (std::none_of(sections().begin(), sections().end(), [&](const Section& s) { return s.name == section; })) {
      throw ConfigError("config: unknown section [" + section + "]");
    }
    for (const auto& [key, value] : body) assign(cfg, section, key, value.data());
  }
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path.string() + "'");
  return parse_config(in, path.string());
}

void apply_override(RunConfig& cfg, std::string_view assignment) {
  const auto eq = assignment.find('=');
  const auto dot = assignment.find('.');
  if (eq == std::string_view::npos || dot == std::string_view::npos || dot > eq) {
    throw ConfigError("config: override '" + std::string(assignment) + "' is not section.key=value");
  }
  assign(cfg, trim(assignment.substr(0, dot)), trim(assignment.substr(dot + 1, eq - dot - 1)),
         std::string(assignment.substr(eq + 1)));
}

std::string to_config_text(const RunConfig& cfg) {
  std::string out;
  for (const auto& s : sections()) {
    if (!out.empty()) out += "\n";
    out += "[" + s.name + "]\n";
    for (const auto& f : s.fields) out += f.key + " = " + f.get(cfg) + "\n";
  }
  return out;
}

nlohmann::ordered_json to_json(const RunConfig& cfg) {
  auto model = [](const pipeline::DistillConfig& c, bool distill) {
    nlohmann::ordered_json j;
    if (distill) {
      j["alpha"] = c.alpha;
      j["beta"] = c.beta;
      j["lambda"] = c.lambda;
      j["tau"] = c.tau;
      j["feat_metric"] = losses::to_string(c.feat_metric);
    }
    j["hard_term"] = losses::to_string(c.hard_term);
    j["gamma"] = c.gamma;
    j["lr"] = c.lr;
    j["weight_decay"] = c.weight_decay;
    j["dropout"] = c.dropout;
    j["hidden"] = c.hidden_dims;
    j["batch_size"] = c.batch_size;
    j["max_epochs"] = c.max_epochs;
    j["patience"] = c.patience;
    j["k_percent"] = c.k_percent;
    return j;
  };
  nlohmann::ordered_json ds;
  ds["path"] = cfg.dataset_path ? cfg.dataset_path->string() : std::string();
  ds["n"] = cfg.dataset.n;
  ds["d_pre"] = cfg.dataset.d_pre;
  ds["d_in"] = cfg.dataset.d_in;
  ds["positive_rate"] = cfg.dataset.positive_rate;
  ds["snr_pre"] = cfg.dataset.snr_pre;
  ds["snr_in_base"] = cfg.dataset.snr_in_base;
  ds["window_days"] = cfg.dataset.window_days;
  ds["window_gain"] = cfg.dataset.window_gain;
  ds["label_noise"] = cfg.dataset.label_noise;
  ds["latent_scale"] = cfg.dataset.latent_scale;
  ds["seed"] = cfg.dataset.seed;
  ds["frac_valid"] = cfg.frac_valid;
  ds["frac_test"] = cfg.frac_test;

  nlohmann::ordered_json j;
  j["dataset"] = ds;
  j["teacher"] = model(cfg.teacher, false);
  j["student"] = model(cfg.student, true);
  j["sweep"] = {{"param", to_string(cfg.sweep_param)}, {"grid", cfg.sweep_grid}};
  return j;
}

void validate_sweep_value(SweepParam p, double value) {
  const std::string name(to_string(p));
  if (!std::isfinite(value)) throw ConfigError("sweep: " + name + " value is not finite");
  switch (p) {
    case SweepParam::kAlpha:
      if (value < 0.0 || value > 1.0) throw ConfigError("sweep: alpha value " + format_real(value) + " outside [0, 1]");
      break;
    case SweepParam::kBeta:
    case SweepParam::kLambda:
      if (value < 0.0) throw ConfigError("sweep: " + name + " value " + format_real(value) + " is negative");
      break;
    case SweepParam::kTau:
      if (value < 1.0) throw ConfigError("sweep: tau value " + format_real(value) + " is below 1");
      break;
  }
}

pipeline::DistillConfig with_sweep_value(const pipeline::DistillConfig& base, SweepParam p, double value) {
  validate_sweep_value(p, value);
  pipeline::DistillConfig c = base;
  switch (p) {
    case SweepParam::kAlpha: c.alpha = value; break;
    case SweepParam::kBeta: c.beta = value; break;
    case SweepParam::kLambda: c.lambda = value; break;
    case SweepParam::kTau: c.tau = value; break;
  }
  return c;
}

}  // namespace mgkd::cli
