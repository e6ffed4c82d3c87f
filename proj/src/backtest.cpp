#include "fq/backtest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <deque>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <utility>

#include "fq/benchmarks.hpp"
#include "fq/dates.hpp"
#include "fq/latentfq.hpp"
#include "fq/parallel.hpp"
#include "fq/qreg.hpp"
#include "fq/stats.hpp"

namespace fq::bt {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// --- Synthetic panels.

void validate_synthetic(const SyntheticSpec& spec) {
  if (spec.n_assets < 1) throw ConfigError("synthetic: need at least one asset");
  if (spec.t_obs < 2) throw ConfigError("synthetic: need at least two rows");
  if (!std::isfinite(spec.loading)) throw ConfigError("synthetic: loading must be finite");
  if (!(spec.idio_scale > 0.0) || !std::isfinite(spec.idio_scale))
    throw ConfigError("synthetic: idiosyncratic scale must be positive");
  if (spec.kind != SyntheticKind::egarch_panel &&
      (spec.n_factors < 1 || spec.n_factors > spec.n_assets))
    throw ConfigError("synthetic: factor count must lie in [1, assets]");
}

std::vector<std::string> asset_names(Eigen::Index n) {
  std::size_t width = std::max<std::size_t>(2, std::to_string(n).size());
  std::vector<std::string> names;
  names.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index i = 1; i <= n; ++i) {
    std::string digits = std::to_string(i);
    names.push_back("a" + std::string(width - std::min(width, digits.size()), '0') + digits);
  }
  return names;
}

std::vector<std::string> panel_dates(Eigen::Index t_obs) {
  const std::int64_t start = dates::serial_from_civil(2010, 1, 4);
  std::vector<std::string> out;
  out.reserve(static_cast<std::size_t>(t_obs));
  for (Eigen::Index t = 0; t < t_obs; ++t) out.push_back(dates::to_iso(start + t));
  return out;
}

Matrix factor_loadings(Eigen::Index n, Eigen::Index m, double loading) {
  Matrix l(n, m);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < m; ++j)
      l(i, j) = j == 0 ? loading
                       : loading * std::sqrt(2.0) *
                             std::cos(M_PI * static_cast<double>(j) *
                                      (static_cast<double>(i) + 0.5) / static_cast<double>(n));
  return l;
}

// --- Rolling-forecast drivers.

qreg::QuantilePartition make_partition(const std::vector<double>& taus) {
  return taus.empty() ? qreg::QuantilePartition::tail_weighted_9() : qreg::QuantilePartition(taus);
}

class FqAbDriver final : public ModelDriver {
 public:
  FqAbDriver(const ModelConfig& config, qreg::QuantilePartition taus)
      : m_(static_cast<std::size_t>(config.n_factors)), taus_(std::move(taus)) {
    bag_.bags = static_cast<std::size_t>(config.bag_size);
    bag_.samples_per_bag = static_cast<std::size_t>(config.bag_samples);
    bag_.omega_scale = config.omega_scale;
    bag_.jobs = 1;  // day-level parallelism already saturates the pool
  }

  cop::JointForecast forecast(const Matrix& window, std::size_t n_samples, const Rng& rng) override {
    auto marginals = lfq::fq_ab_marginals(window, m_, taus_, bag_, rng.split("fit"));
    cop::CopulaSpec spec = cop::fit_gaussian_copula(window);
    Rng sampler = rng.split("sample");
    return cop::compose(std::move(marginals), spec, n_samples, sampler);
  }

 private:
  std::size_t m_;
  qreg::QuantilePartition taus_;
  lfq::BaggingConfig bag_;
};

class FqAlDriver final : public ModelDriver {
 public:
  FqAlDriver(const ModelConfig& config, qreg::QuantilePartition taus)
      : m_(static_cast<std::size_t>(config.n_factors)), taus_(std::move(taus)) {}

  cop::JointForecast forecast(const Matrix& window, std::size_t n_samples, const Rng& rng) override {
    auto marginals = lfq::fq_al_marginals(window, m_, taus_);
    cop::CopulaSpec spec = cop::fit_gaussian_copula(window);
    Rng sampler = rng.split("sample");
    return cop::compose(std::move(marginals), spec, n_samples, sampler);
  }

 private:
  std::size_t m_;
  qreg::QuantilePartition taus_;
};

class EdfDriver final : public ModelDriver {
 public:
  cop::JointForecast forecast(const Matrix& window, std::size_t n_samples, const Rng& rng) override {
    return bench::edf_copula_forecast(window, n_samples, rng);
  }
};

double median_of(const std::deque<double>& values) {
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 == 1 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

class GarchDriver final : public ModelDriver {
 public:
  GarchDriver(bench::CorrKind kind, GuardPolicy policy, std::size_t jobs)
      : kind_(kind), policy_(policy), jobs_(jobs) {}

  bool stateful() const override { return true; }

  cop::JointForecast forecast(const Matrix& window, std::size_t n_samples, const Rng& rng) override {
    const auto n = static_cast<std::size_t>(window.cols());
    std::vector<bench::EgarchFit> chosen(n);

    if (previous_.empty()) {
      // First day: nothing to fall back on, so fit failures propagate.
      parallel_for(n, jobs_, [&](std::size_t k) {
        chosen[k] = bench::egarch_fit(window.col(static_cast<Eigen::Index>(k)));
      });
      previous_ = chosen;
      history_.assign(n, {});
    } else {
      if (previous_.size() != n) throw DataError("volatility driver: asset count changed mid-run");
      std::vector<std::optional<bench::EgarchFit>> candidate(n);
      parallel_for(n, jobs_, [&](std::size_t k) {
        try {
          candidate[k] = bench::egarch_fit(window.col(static_cast<Eigen::Index>(k)));
        } catch (const Error&) {
          candidate[k] = std::nullopt;  // handled below under the refit guard
        }
      });
      for (std::size_t k = 0; k < n; ++k) {
        if (!candidate[k]) {
          chosen[k] = previous_[k];
          events_.push_back({std::to_string(k), 0.0, 0.0, "fit_failure"});
          continue;
        }
        const double distance = bench::param_distance(previous_[k].params, candidate[k]->params);
        if (history_[k].size() >= policy_.warmup) {
          const double threshold = policy_.multiple * std::max(median_of(history_[k]), policy_.floor);
          if (distance > threshold) {
            chosen[k] = previous_[k];
            events_.push_back({std::to_string(k), distance, threshold, "jump"});
            continue;
          }
        }
        history_[k].push_back(distance);
        if (history_[k].size() > policy_.window) history_[k].pop_front();
        previous_[k] = *candidate[k];
        chosen[k] = *candidate[k];
      }
    }

    bench::GarchPanelFit fit = bench::assemble_garch_panel(window, std::move(chosen), kind_);
    return bench::garch_forecast(fit, n_samples, rng);
  }

  std::vector<DriverEvent> drain_events() override { return std::exchange(events_, {}); }

 private:
  bench::CorrKind kind_;
  GuardPolicy policy_;
  std::size_t jobs_;
  std::vector<bench::EgarchFit> previous_;
  std::vector<std::deque<double>> history_;
  std::vector<DriverEvent> events_;
};

// --- Config parsing.

[[noreturn]] void bad_config(const std::string& path, const std::string& what) {
  throw ConfigError("config" + path + ": " + what);
}

void check_keys(const json& j, const std::string& path, std::initializer_list<const char*> allowed) {
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* k : allowed)
      if (item.key() == k) {
        known = true;
        break;
      }
    if (!known) bad_config(path + "." + item.key(), "unknown key");
  }
}

const json* find_key(const json& j, const char* key) {
  auto it = j.find(key);
  return it == j.end() ? nullptr : &*it;
}

void require_object(const json& j, const std::string& path) {
  if (!j.is_object()) bad_config(path, "must be an object");
}

double get_number(const json& j, const std::string& path, const char* key, double fallback) {
  const json* v = find_key(j, key);
  if (!v) return fallback;
  if (!v->is_number()) bad_config(path + "." + key, "must be a number");
  return v->get<double>();
}

std::size_t get_count(const json& j, const std::string& path, const char* key, std::size_t fallback) {
  const json* v = find_key(j, key);
  if (!v) return fallback;
  if (!v->is_number_integer() || v->get<double>() < 0) bad_config(path + "." + key, "must be a non-negative integer");
  return v->get<std::size_t>();
}

std::string get_string(const json& j, const std::string& path, const char* key, const std::string& fallback) {
  const json* v = find_key(j, key);
  if (!v) return fallback;
  if (!v->is_string()) bad_config(path + "." + key, "must be a string");
  return v->get<std::string>();
}

std::vector<std::string> get_string_list(const json& j, const std::string& path, const char* key) {
  const json* v = find_key(j, key);
  std::vector<std::string> out;
  if (!v) return out;
  if (!v->is_array()) bad_config(path + "." + key, "must be an array of strings");
  for (const auto& e : *v) {
    if (!e.is_string()) bad_config(path + "." + key, "must be an array of strings");
    out.push_back(e.get<std::string>());
  }
  return out;
}

std::vector<double> get_number_list(const json& j, const std::string& path, const char* key) {
  const json* v = find_key(j, key);
  std::vector<double> out;
  if (!v) return out;
  if (!v->is_array()) bad_config(path + "." + key, "must be an array of numbers");
  for (const auto& e : *v) {
    if (!e.is_number()) bad_config(path + "." + key, "must be an array of numbers");
    out.push_back(e.get<double>());
  }
  return out;
}

SyntheticSpec synthetic_from_json(const json& j, const std::string& path) {
  require_object(j, path);
  check_keys(j, path, {"kind", "assets", "length", "factors", "loading", "idio", "seed"});
  SyntheticSpec spec;
  std::string kind = get_string(j, path, "kind", "factor_gaussian");
  try {
    spec.kind = synthetic_kind_from_string(kind);
  } catch (const Error& e) {
    bad_config(path + ".kind", e.what());
  }
  spec.n_assets = static_cast<Eigen::Index>(get_count(j, path, "assets", 8));
  spec.t_obs = static_cast<Eigen::Index>(get_count(j, path, "length", 600));
  spec.n_factors = static_cast<Eigen::Index>(get_count(j, path, "factors", 1));
  spec.loading = get_number(j, path, "loading", 1.0);
  spec.idio_scale = get_number(j, path, "idio", 0.3);
  spec.seed = get_count(j, path, "seed", 0);
  return spec;
}

ModelConfig model_from_json(const json& j, const std::string& path) {
  require_object(j, path);
  check_keys(j, path, {"id", "family", "calibration", "factors", "bag", "bag_samples", "omega_scale"});
  ModelConfig m;
  m.id = get_string(j, path, "id", "");
  m.family = get_string(j, path, "family", "");
  m.calibration = static_cast<Eigen::Index>(get_count(j, path, "calibration", 250));
  m.n_factors = static_cast<Eigen::Index>(get_count(j, path, "factors", 1));
  m.bag_size = static_cast<Eigen::Index>(get_count(j, path, "bag", 50));
  m.bag_samples = static_cast<Eigen::Index>(get_count(j, path, "bag_samples", 2000));
  m.omega_scale = get_number(j, path, "omega_scale", 1.0);
  return m;
}

bool valid_identifier(const std::string& id) {
  if (id.empty()) return false;
  for (char c : id)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.')) return false;
  return true;
}

bool is_univariate(const score::ScoringRule& rule) { return rule.kind == score::ScoringRule::Kind::wcrps; }

// --- Checkpoint files: one CSV per model holding finished day rows.

std::string join_columns(const std::vector<std::string>& columns) {
  std::string header = "date";
  for (const auto& c : columns) header += "," + c;
  return header;
}

struct Checkpoint {
  std::vector<std::string> dates;
  Matrix rows;
};

// Existing rows are reusable only when the header matches the current loss
// columns and the dates form a prefix of the evaluation dates; anything
// else (stale config, torn write) discards the file.
std::optional<Checkpoint> read_checkpoint(const fs::path& path, const std::vector<std::string>& columns,
                                          const std::vector<std::string>& eval_dates) {
  std::ifstream in(path);
  if (!in) return Checkpoint{};
  std::string line;
  if (!std::getline(in, line) || line != join_columns(columns)) return std::nullopt;

  std::vector<std::string> done;
  std::vector<Vector> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::size_t pos = 0;
    while (true) {
      std::size_t comma = line.find(',', pos);
      cells.push_back(line.substr(pos, comma == std::string::npos ? comma : comma - pos));
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    if (cells.size() != columns.size() + 1) return std::nullopt;
    if (done.size() >= eval_dates.size() || cells[0] != eval_dates[done.size()]) return std::nullopt;
    Vector row(static_cast<Eigen::Index>(columns.size()));
    for (std::size_t c = 1; c < cells.size(); ++c) {
      char* end = nullptr;
      double v = std::strtod(cells[c].c_str(), &end);
      if (end == cells[c].c_str() || *end != '\0' || !std::isfinite(v)) return std::nullopt;
      row(static_cast<Eigen::Index>(c - 1)) = v;
    }
    done.push_back(cells[0]);
    rows.push_back(std::move(row));
  }
  Checkpoint ck;
  ck.dates = std::move(done);
  ck.rows.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(columns.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) ck.rows.row(static_cast<Eigen::Index>(r)) = rows[r].transpose();
  return ck;
}

void append_checkpoint_rows(const fs::path& path, const std::vector<std::string>& columns,
                            const std::vector<std::string>& dates, const Matrix& rows, std::size_t from,
                            std::size_t count, bool fresh_file) {
  std::ofstream out(path, fresh_file ? std::ios::trunc : std::ios::app);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  if (fresh_file) out << join_columns(columns) << '\n';
  char buf[32];
  for (std::size_t i = from; i < from + count; ++i) {
    out << dates[i];
    for (Eigen::Index c = 0; c < rows.cols(); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", rows(static_cast<Eigen::Index>(i), c));
      out << ',' << buf;
    }
    out << '\n';
  }
  if (!out) throw Error("failed while writing '" + path.string() + "'");
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string format_short(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

}  // namespace

// --- Synthetic panels.

SyntheticKind synthetic_kind_from_string(const std::string& name) {
  if (name == "factor_gaussian") return SyntheticKind::factor_gaussian;
  if (name == "factor_t") return SyntheticKind::factor_t;
  if (name == "egarch_panel") return SyntheticKind::egarch_panel;
  if (name == "regime_switch") return SyntheticKind::regime_switch;
  throw ConfigError("unknown synthetic kind '" + name + "'");
}

std::string to_string(SyntheticKind kind) {
  switch (kind) {
    case SyntheticKind::factor_gaussian: return "factor_gaussian";
    case SyntheticKind::factor_t: return "factor_t";
    case SyntheticKind::egarch_panel: return "egarch_panel";
    case SyntheticKind::regime_switch: return "regime_switch";
  }
  throw ConfigError("unknown synthetic kind");
}

ts::Panel generate_synthetic(const SyntheticSpec& spec) {
  validate_synthetic(spec);
  ts::Panel panel;
  panel.names = asset_names(spec.n_assets);
  panel.dates = panel_dates(spec.t_obs);
  panel.values.resize(spec.t_obs, spec.n_assets);

  Rng rng = Rng(spec.seed).split("synthetic");
  if (spec.kind == SyntheticKind::egarch_panel) {
    const double nu = 7.0;
    const double gamma = 0.95;
    const double alpha = 0.10;
    const double xi = -0.08;
    const double mean_log_var = 2.0 * std::log(spec.idio_scale);
    const double kappa = (1.0 - gamma) * mean_log_var;
    const double mean_abs = stats::std_t_mean_abs(nu);
    const Eigen::Index burn = 250;
    for (Eigen::Index j = 0; j < spec.n_assets; ++j) {
      Rng col = rng.split("asset").split(static_cast<std::uint64_t>(j));
      double log_var = mean_log_var;
      for (Eigen::Index t = -burn; t < spec.t_obs; ++t) {
        const double z = col.student_t_standardized(nu);
        if (t >= 0) panel.values(t, j) = std::exp(0.5 * log_var) * z;
        log_var = kappa + gamma * log_var + alpha * (std::fabs(z) - mean_abs) + xi * z;
      }
    }
    return panel;
  }

  const Matrix loadings = factor_loadings(spec.n_assets, spec.n_factors, spec.loading);
  Matrix flipped = loadings;
  for (Eigen::Index i = 1; i < spec.n_assets; i += 2) flipped.row(i) = -loadings.row(i);

  Vector f(spec.n_factors);
  Vector eps(spec.n_assets);
  for (Eigen::Index t = 0; t < spec.t_obs; ++t) {
    for (Eigen::Index k = 0; k < spec.n_factors; ++k)
      f(k) = spec.kind == SyntheticKind::factor_t ? rng.student_t_standardized(5.0) : rng.normal();
    for (Eigen::Index i = 0; i < spec.n_assets; ++i) eps(i) = rng.normal();
    const bool second_regime = spec.kind == SyntheticKind::regime_switch && t >= spec.t_obs / 2;
    panel.values.row(t) = ((second_regime ? flipped : loadings) * f + spec.idio_scale * eps).transpose();
  }
  return panel;
}

// --- Models.

std::unique_ptr<ModelDriver> make_model(const ModelConfig& config, const std::vector<double>& taus,
                                        const GuardPolicy& guard, std::size_t jobs) {
  if (config.family == "fq_ab") return std::make_unique<FqAbDriver>(config, make_partition(taus));
  if (config.family == "fq_al") return std::make_unique<FqAlDriver>(config, make_partition(taus));
  if (config.family == "edf") return std::make_unique<EdfDriver>();
  if (config.family == "ccc_garch") return std::make_unique<GarchDriver>(bench::CorrKind::ccc, guard, jobs);
  if (config.family == "dcc_garch") return std::make_unique<GarchDriver>(bench::CorrKind::dcc, guard, jobs);
  throw ConfigError("model '" + config.id + "': unknown family '" + config.family + "'");
}

// --- Config.

void ExperimentConfig::validate() const {
  if (data.kind != "synthetic" && data.kind != "csv") bad_config(".data.kind", "must be 'synthetic' or 'csv'");
  if (data.kind == "csv" && data.csv_path.empty()) bad_config(".data.csv.path", "required for csv data");
  try {
    (void)ts::transform_from_string(data.transform);
  } catch (const Error& e) {
    bad_config(".data.transform", e.what());
  }
  if (!(data.multiplier > 0.0) || !std::isfinite(data.multiplier))
    bad_config(".data.multiplier", "must be a positive number");
  if (data.kind == "synthetic") {
    try {
      validate_synthetic(data.synthetic);
    } catch (const Error& e) {
      bad_config(".data.synthetic", e.what());
    }
  }

  if (roster.empty()) bad_config(".roster", "at least one model required");
  std::set<std::string> ids;
  for (std::size_t i = 0; i < roster.size(); ++i) {
    const std::string path = ".roster[" + std::to_string(i) + "]";
    const ModelConfig& m = roster[i];
    if (!valid_identifier(m.id)) bad_config(path + ".id", "must be nonempty [A-Za-z0-9_.-]");
    if (!ids.insert(m.id).second) bad_config(path + ".id", "duplicate model id '" + m.id + "'");
    static const std::set<std::string> kFamilies{"fq_ab", "fq_al", "edf", "ccc_garch", "dcc_garch"};
    if (!kFamilies.count(m.family)) bad_config(path + ".family", "unknown family '" + m.family + "'");
    if (m.calibration < 30) bad_config(path + ".calibration", "must be at least 30");
    if (m.n_factors < 1) bad_config(path + ".factors", "must be at least 1");
    if (m.bag_size < 1) bad_config(path + ".bag", "must be at least 1");
    if (m.bag_samples < 1) bad_config(path + ".bag_samples", "must be at least 1");
    if (!(m.omega_scale > 0.0) || !std::isfinite(m.omega_scale))
      bad_config(path + ".omega_scale", "must be a positive number");
  }

  if (!taus.empty()) {
    try {
      (void)qreg::QuantilePartition(taus);
    } catch (const Error& e) {
      bad_config(".taus", e.what());
    }
  }
  if (samples < 2) bad_config(".samples", "must be at least 2");

  std::set<std::string> seen_rules;
  for (const auto& r : rules) {
    try {
      (void)score::ScoringRule::parse(r);
    } catch (const Error& e) {
      bad_config(".rules", e.what());
    }
    if (!seen_rules.insert(r).second) bad_config(".rules", "duplicate rule '" + r + "'");
  }

  if (mcs.bootstrap < 2) bad_config(".mcs.bootstrap", "must be at least 2");
  if (mcs.alphas.empty()) bad_config(".mcs.alphas", "at least one level required");
  for (double a : mcs.alphas)
    if (!(a > 0.0 && a < 1.0)) bad_config(".mcs.alphas", "levels must lie in (0,1)");

  for (std::size_t i = 0; i < subperiods.size(); ++i) {
    try {
      (void)dates::parse_serial(subperiods[i], "%Y-%m-%d");
    } catch (const Error& e) {
      bad_config(".subperiods", e.what());
    }
    if (i > 0 && subperiods[i] <= subperiods[i - 1])
      bad_config(".subperiods", "boundaries must be strictly increasing");
  }

  if (!(guard.multiple > 0.0)) bad_config(".guard.multiple", "must be positive");
  if (guard.window < 1) bad_config(".guard.window", "must be at least 1");
  if (guard.warmup < 1) bad_config(".guard.warmup", "must be at least 1");
  if (!(guard.floor >= 0.0)) bad_config(".guard.floor", "must be non-negative");
  if (jobs < 1) bad_config(".jobs", "must be at least 1");
  if (out_dir.empty()) bad_config(".out", "output directory required");
}

ExperimentConfig config_from_json(const json& doc) {
  require_object(doc, "");
  check_keys(doc, "", {"data", "roster", "taus", "samples", "rules", "mcs", "subperiods", "eval_days",
                       "guard", "seed", "jobs", "out"});
  ExperimentConfig config;

  if (const json* data = find_key(doc, "data")) {
    require_object(*data, ".data");
    check_keys(*data, ".data", {"kind", "synthetic", "csv", "transform", "multiplier"});
    config.data.kind = get_string(*data, ".data", "kind", "synthetic");
    if (const json* syn = find_key(*data, "synthetic"))
      config.data.synthetic = synthetic_from_json(*syn, ".data.synthetic");
    if (const json* csv = find_key(*data, "csv")) {
      require_object(*csv, ".data.csv");
      check_keys(*csv, ".data.csv", {"path", "date_format"});
      config.data.csv_path = get_string(*csv, ".data.csv", "path", "");
      config.data.date_format = get_string(*csv, ".data.csv", "date_format", "%Y-%m-%d");
    }
    config.data.transform = get_string(*data, ".data", "transform", "none");
    config.data.multiplier = get_number(*data, ".data", "multiplier", 1.0);
  }

  if (const json* roster = find_key(doc, "roster")) {
    if (!roster->is_array()) bad_config(".roster", "must be an array of model objects");
    for (std::size_t i = 0; i < roster->size(); ++i)
      config.roster.push_back(model_from_json((*roster)[i], ".roster[" + std::to_string(i) + "]"));
  }

  config.taus = get_number_list(doc, "", "taus");
  config.samples = get_count(doc, "", "samples", config.samples);
  config.rules = get_string_list(doc, "", "rules");

  if (const json* m = find_key(doc, "mcs")) {
    require_object(*m, ".mcs");
    check_keys(*m, ".mcs", {"bootstrap", "block", "alphas"});
    config.mcs.bootstrap = get_count(*m, ".mcs", "bootstrap", config.mcs.bootstrap);
    config.mcs.block_length = get_count(*m, ".mcs", "block", config.mcs.block_length);
    auto alphas = get_number_list(*m, ".mcs", "alphas");
    if (!alphas.empty()) config.mcs.alphas = std::move(alphas);
  }

  config.subperiods = get_string_list(doc, "", "subperiods");
  config.eval_days = get_count(doc, "", "eval_days", 0);

  if (const json* g = find_key(doc, "guard")) {
    require_object(*g, ".guard");
    check_keys(*g, ".guard", {"multiple", "warmup", "window", "floor"});
    config.guard.multiple = get_number(*g, ".guard", "multiple", config.guard.multiple);
    config.guard.warmup = get_count(*g, ".guard", "warmup", config.guard.warmup);
    config.guard.window = get_count(*g, ".guard", "window", config.guard.window);
    config.guard.floor = get_number(*g, ".guard", "floor", config.guard.floor);
  }

  config.seed = get_count(doc, "", "seed", 0);
  config.jobs = get_count(doc, "", "jobs", 1);
  config.out_dir = get_string(doc, "", "out", config.out_dir);

  config.validate();
  return config;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config '" + path + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config '" + path + "': invalid JSON: " + e.what());
  }
  return config_from_json(doc);
}

nlohmann::json config_to_json(const ExperimentConfig& config) {
  json doc;
  doc["data"]["kind"] = config.data.kind;
  if (config.data.kind == "synthetic") {
    json& s = doc["data"]["synthetic"];
    s["kind"] = to_string(config.data.synthetic.kind);
    s["assets"] = config.data.synthetic.n_assets;
    s["length"] = config.data.synthetic.t_obs;
    s["factors"] = config.data.synthetic.n_factors;
    s["loading"] = config.data.synthetic.loading;
    s["idio"] = config.data.synthetic.idio_scale;
    s["seed"] = config.data.synthetic.seed;
  } else {
    doc["data"]["csv"]["path"] = config.data.csv_path;
    doc["data"]["csv"]["date_format"] = config.data.date_format;
  }
  doc["data"]["transform"] = config.data.transform;
  doc["data"]["multiplier"] = config.data.multiplier;
  doc["roster"] = json::array();
  for (const auto& m : config.roster) {
    json e;
    e["id"] = m.id;
    e["family"] = m.family;
    e["calibration"] = m.calibration;
    e["factors"] = m.n_factors;
    e["bag"] = m.bag_size;
    e["bag_samples"] = m.bag_samples;
    e["omega_scale"] = m.omega_scale;
    doc["roster"].push_back(std::move(e));
  }
  if (!config.taus.empty()) doc["taus"] = config.taus;
  doc["samples"] = config.samples;
  if (!config.rules.empty()) doc["rules"] = config.rules;
  doc["mcs"]["bootstrap"] = config.mcs.bootstrap;
  doc["mcs"]["block"] = config.mcs.block_length;
  doc["mcs"]["alphas"] = config.mcs.alphas;
  if (!config.subperiods.empty()) doc["subperiods"] = config.subperiods;
  doc["eval_days"] = config.eval_days;
  doc["guard"]["multiple"] = config.guard.multiple;
  doc["guard"]["warmup"] = config.guard.warmup;
  doc["guard"]["window"] = config.guard.window;
  doc["guard"]["floor"] = config.guard.floor;
  doc["seed"] = config.seed;
  doc["jobs"] = config.jobs;
  doc["out"] = config.out_dir;
  return doc;
}

// --- Sub-period partitioning.

std::vector<score::LossMatrix> subperiod_split(const score::LossMatrix& losses,
                                               const std::vector<std::string>& boundaries) {
  losses.validate();
  std::vector<std::string> iso;
  for (const auto& b : boundaries) {
    try {
      iso.push_back(dates::to_iso(dates::parse_serial(b, "%Y-%m-%d")));
    } catch (const Error& e) {
      throw ConfigError("subperiod boundary '" + b + "': " + e.what());
    }
    if (iso.size() > 1 && iso[iso.size() - 1] <= iso[iso.size() - 2])
      throw ConfigError("subperiod boundaries must be strictly increasing");
  }

  std::vector<score::LossMatrix> parts(iso.size() + 1);
  std::vector<std::vector<Eigen::Index>> members(parts.size());
  for (std::size_t r = 0; r < losses.dates.size(); ++r) {
    const std::size_t part =
        static_cast<std::size_t>(std::upper_bound(iso.begin(), iso.end(), losses.dates[r]) - iso.begin());
    members[part].push_back(static_cast<Eigen::Index>(r));
  }
  for (std::size_t p = 0; p < parts.size(); ++p) {
    parts[p].models = losses.models;
    parts[p].losses.resize(static_cast<Eigen::Index>(members[p].size()), losses.losses.cols());
    parts[p].dates.reserve(members[p].size());
    for (std::size_t k = 0; k < members[p].size(); ++k) {
      parts[p].dates.push_back(losses.dates[static_cast<std::size_t>(members[p][k])]);
      parts[p].losses.row(static_cast<Eigen::Index>(k)) = losses.losses.row(members[p][k]);
    }
  }
  return parts;
}

// --- The runner.

ExperimentResult run_experiment(const ExperimentConfig& config) {
  return run_experiment(config, ModelFactory{});
}

ExperimentResult run_experiment(const ExperimentConfig& config, const ModelFactory& factory) {
  config.validate();

  // Data.
  ts::Panel panel;
  if (config.data.kind == "synthetic") {
    panel = generate_synthetic(config.data.synthetic);
  } else {
    panel = ts::load_panel(config.data.csv_path, config.data.date_format).panel;
  }
  const ts::Transform transform = ts::transform_from_string(config.data.transform);
  if (transform != ts::Transform::none) panel = ts::to_stationary(panel, transform, config.data.multiplier);

  const auto t_total = static_cast<Eigen::Index>(panel.rows());
  const auto n_assets = static_cast<Eigen::Index>(panel.cols());
  if (n_assets < 2) throw DataError("run_experiment: need at least two series");

  Eigen::Index max_cal = 0;
  for (const auto& m : config.roster) max_cal = std::max(max_cal, m.calibration);
  if (max_cal >= t_total)
    throw ConfigError("config.roster: calibration " + std::to_string(max_cal) + " needs more than the " +
                      std::to_string(t_total) + " panel rows available");

  std::size_t n_eval = static_cast<std::size_t>(t_total - max_cal);
  if (config.eval_days > 0) n_eval = std::min(n_eval, config.eval_days);

  ExperimentResult result;
  for (std::size_t i = 0; i < n_eval; ++i)
    result.eval_dates.push_back(panel.dates[static_cast<std::size_t>(max_cal) + i]);

  std::vector<score::ScoringRule> rules;
  if (config.rules.empty()) {
    rules = score::ScoringRule::standard_set();
  } else {
    for (const auto& id : config.rules) rules.push_back(score::ScoringRule::parse(id));
  }
  for (const auto& r : rules) result.rule_ids.push_back(r.id());

  std::vector<std::string> columns;  // checkpoint layout: aggregate, then per-asset for univariate rules
  for (const auto& r : rules) {
    columns.push_back(r.id());
    if (is_univariate(r))
      for (const auto& a : panel.names) columns.push_back(r.id() + ":" + a);
  }

  // Output directories and static files.
  const fs::path out(config.out_dir);
  fs::create_directories(out / "checkpoints");
  fs::create_directories(out / "losses");
  fs::create_directories(out / "mcs");
  fs::create_directories(out / "report");
  auto note = [&](const std::string& rel) { result.files.push_back(rel); };

  ts::write_panel(panel, (out / "panel.csv").string());
  note("panel.csv");
  {
    std::ofstream cfg(out / "config.json");
    cfg << config_to_json(config).dump(2) << '\n';
    note("config.json");
  }

  // Per-model rolling forecasts.
  std::vector<Matrix> model_rows(config.roster.size());
  std::vector<std::string> summary_notes;
  for (std::size_t mi = 0; mi < config.roster.size(); ++mi) {
    const ModelConfig& mc = config.roster[mi];
    std::unique_ptr<ModelDriver> driver =
        factory ? factory(mc) : make_model(mc, config.taus, config.guard, config.jobs);

    const fs::path ck_path = out / "checkpoints" / (mc.id + ".csv");
    std::size_t done = 0;
    Matrix& rows = model_rows[mi];
    rows.resize(static_cast<Eigen::Index>(n_eval), static_cast<Eigen::Index>(columns.size()));

    // Stateful drivers rebuild their refit-guard state from day one, so
    // their checkpoints restart; stateless days are resumable directly.
    if (!driver->stateful()) {
      auto ck = read_checkpoint(ck_path, columns, result.eval_dates);
      if (ck) {
        done = std::min(ck->dates.size(), n_eval);
        if (done > 0) rows.topRows(static_cast<Eigen::Index>(done)) = ck->rows.topRows(static_cast<Eigen::Index>(done));
        if (done > 0)
          summary_notes.push_back("checkpoint " + mc.id + ": resumed " + std::to_string(done) + " days");
      }
    }

    auto compute_day = [&](std::size_t i) {
      const Eigen::Index t = max_cal + static_cast<Eigen::Index>(i);
      const Matrix window = panel.values.block(t - mc.calibration, 0, mc.calibration, n_assets);
      const Rng day_rng = Rng(config.seed).split("day").split(panel.dates[static_cast<std::size_t>(t)]).split(mc.id);
      cop::JointForecast fc = driver->forecast(window, config.samples, day_rng.split("forecast"));
      const Vector y = panel.values.row(t).transpose();

      Vector row(static_cast<Eigen::Index>(columns.size()));
      Eigen::Index c = 0;
      for (const auto& rule : rules) {
        row(c++) = score::apply_rule(rule, fc.samples, y);
        if (is_univariate(rule))
          for (Eigen::Index j = 0; j < n_assets; ++j) {
            Vector yj(1);
            yj << y(j);
            row(c++) = score::apply_rule(rule, Matrix(fc.samples.col(j)), yj);
          }
      }
      return row;
    };

    bool fresh = done == 0;
    if (driver->stateful()) {
      for (std::size_t i = 0; i < n_eval; ++i) {
        rows.row(static_cast<Eigen::Index>(i)) = compute_day(i).transpose();
        for (DriverEvent ev : driver->drain_events()) {
          // Drivers name assets by column index; translate to panel names.
          std::size_t col = 0;
          const char* s = ev.asset.c_str();
          char* end = nullptr;
          col = static_cast<std::size_t>(std::strtoul(s, &end, 10));
          const std::string asset = (end != s && *end == '\0' && col < panel.names.size())
                                        ? panel.names[col]
                                        : ev.asset;
          result.guard_events.push_back(
              {result.eval_dates[i], mc.id, asset, ev.distance, ev.threshold, ev.reason});
        }
        append_checkpoint_rows(ck_path, columns, result.eval_dates, rows, i, 1, fresh);
        fresh = false;
      }
    } else {
      const std::size_t chunk = std::max<std::size_t>(64, config.jobs * 8);
      while (done < n_eval) {
        const std::size_t batch = std::min(chunk, n_eval - done);
        parallel_for(batch, config.jobs, [&](std::size_t k) {
          rows.row(static_cast<Eigen::Index>(done + k)) = compute_day(done + k).transpose();
        });
        append_checkpoint_rows(ck_path, columns, result.eval_dates, rows, done, batch, fresh);
        fresh = false;
        done += batch;
      }
      if (fresh)  // fully resumed runs still need the file present
        append_checkpoint_rows(ck_path, columns, result.eval_dates, rows, 0, n_eval, true);
    }
    note("checkpoints/" + mc.id + ".csv");
  }

  // Loss matrices per column id (aggregate rules and rule:asset cells).
  std::vector<std::string> model_ids;
  for (const auto& m : config.roster) model_ids.push_back(m.id);
  for (std::size_t c = 0; c < columns.size(); ++c) {
    score::LossMatrix lm;
    lm.models = model_ids;
    lm.dates = result.eval_dates;
    lm.losses.resize(static_cast<Eigen::Index>(n_eval), static_cast<Eigen::Index>(model_ids.size()));
    for (std::size_t mi = 0; mi < model_ids.size(); ++mi)
      lm.losses.col(static_cast<Eigen::Index>(mi)) = model_rows[mi].col(static_cast<Eigen::Index>(c));
    result.losses.emplace(columns[c], std::move(lm));
  }
  for (const auto& [key, lm] : result.losses) {
    std::string file = key;
    std::replace(file.begin(), file.end(), ':', '.');
    lm.write_csv((out / "losses" / (file + ".csv")).string());
    note("losses/" + file + ".csv");
  }

  // Model confidence sets.
  const bool mcs_feasible = n_eval >= 50 && config.roster.size() >= 2;
  if (!mcs_feasible)
    summary_notes.push_back("mcs skipped: needs at least 50 evaluation days and 2 models");

  const Rng mcs_root = Rng(config.seed).split("mcs");
  auto mcs_options = [&](const std::string& label) {
    mcs::Options opt;
    opt.bootstrap = config.mcs.bootstrap;
    opt.block_length = config.mcs.block_length;
    opt.seed = mcs_root.split(label).key();
    return opt;
  };

  if (mcs_feasible) {
    for (const auto& id : result.rule_ids) {
      mcs::Result res = mcs::run_mcs(result.losses.at(id), mcs_options(id));
      std::ofstream outcsv(out / "mcs" / (id + ".csv"));
      outcsv << "model,p_value,eliminated_at,block_length\n";
      for (const auto& m : res.models)
        outcsv << m.model << ',' << format_double(m.p_value) << ',' << m.eliminated_at << ','
               << res.block_length << '\n';
      note("mcs/" + id + ".csv");
      result.mcs_results.emplace(id, std::move(res));
    }
  }

  // Inclusion rates over per-asset cells of the univariate rules.
  std::vector<std::string> univariate_ids;
  for (const auto& r : rules)
    if (is_univariate(r)) univariate_ids.push_back(r.id());

  auto write_inclusion = [&](const std::string& file, const std::vector<mcs::Result>& cells) {
    std::vector<std::map<std::string, double>> by_alpha;
    for (double a : config.mcs.alphas) by_alpha.push_back(mcs::inclusion_rates(cells, a));
    std::ofstream outcsv(out / "report" / file);
    outcsv << "model,cells";
    for (double a : config.mcs.alphas) outcsv << ",rate_" << format_short(a);
    outcsv << '\n';
    for (const auto& id : model_ids) {
      outcsv << id << ',' << cells.size();
      for (const auto& rates : by_alpha) outcsv << ',' << format_double(rates.at(id));
      outcsv << '\n';
    }
    note("report/" + file);
  };

  if (mcs_feasible && !univariate_ids.empty()) {
    std::vector<mcs::Result> cells;
    for (const auto& id : univariate_ids)
      for (const auto& a : panel.names)
        cells.push_back(mcs::run_mcs(result.losses.at(id + ":" + a), mcs_options(id + ":" + a)));
    write_inclusion("inclusion.csv", cells);

    if (!config.subperiods.empty()) {
      for (std::size_t p = 0; p <= config.subperiods.size(); ++p) {
        std::vector<mcs::Result> part_cells;
        bool usable = true;
        for (const auto& id : univariate_ids) {
          for (const auto& a : panel.names) {
            auto parts = subperiod_split(result.losses.at(id + ":" + a), config.subperiods);
            if (parts[p].dates.size() < 50) {
              usable = false;
              break;
            }
            part_cells.push_back(
                mcs::run_mcs(parts[p], mcs_options(id + ":" + a + ":period" + std::to_string(p))));
          }
          if (!usable) break;
        }
        if (usable) {
          write_inclusion("inclusion_period" + std::to_string(p) + ".csv", part_cells);
        } else {
          summary_notes.push_back("sub-period " + std::to_string(p) +
                                  ": fewer than 50 days, inclusion table skipped");
        }
      }
    }
  }

  // Mean losses and the guard log.
  {
    std::ofstream outcsv(out / "report" / "mean_losses.csv");
    outcsv << "rule";
    for (const auto& id : model_ids) outcsv << ',' << id;
    outcsv << '\n';
    for (const auto& id : result.rule_ids) {
      outcsv << id;
      const auto& lm = result.losses.at(id);
      for (Eigen::Index c = 0; c < lm.losses.cols(); ++c)
        outcsv << ',' << format_double(lm.losses.col(c).mean());
      outcsv << '\n';
    }
    note("report/mean_losses.csv");
  }
  {
    std::ofstream outcsv(out / "guard_events.csv");
    outcsv << "date,model,asset,distance,threshold,reason\n";
    for (const auto& ev : result.guard_events)
      outcsv << ev.date << ',' << ev.model << ',' << ev.asset << ',' << format_double(ev.distance) << ','
             << format_double(ev.threshold) << ',' << ev.reason << '\n';
    note("guard_events.csv");
  }

  // Plain-text summary.
  {
    std::ofstream txt(out / "report" / "summary.txt");
    txt << "experiment summary\n==================\n";
    txt << "data: " << (config.data.kind == "synthetic"
                            ? to_string(config.data.synthetic.kind) + " synthetic"
                            : config.data.csv_path)
        << ", " << panel.rows() << " rows x " << panel.cols() << " series (transform "
        << config.data.transform << ")\n";
    txt << "evaluation: " << n_eval << " days, " << result.eval_dates.front() << " .. "
        << result.eval_dates.back() << ", " << config.samples << " joint draws per model-day\n";
    txt << "seed: " << config.seed << "\n\nmodels:\n";
    for (const auto& m : config.roster)
      txt << "  " << m.id << " (" << m.family << ", window " << m.calibration << ")\n";
    txt << "\nmean losses:\n";
    for (const auto& id : result.rule_ids) {
      txt << "  " << id << ":";
      const auto& lm = result.losses.at(id);
      for (std::size_t mi = 0; mi < model_ids.size(); ++mi)
        txt << ' ' << model_ids[mi] << '=' << format_short(lm.losses.col(static_cast<Eigen::Index>(mi)).mean());
      txt << '\n';
    }
    if (!result.mcs_results.empty()) {
      txt << "\nconfidence sets:\n";
      for (const auto& [id, res] : result.mcs_results) {
        txt << "  " << id << " (block " << res.block_length << "):";
        for (double a : config.mcs.alphas) {
          txt << " [" << format_short(a) << "]";
          for (const auto& name : res.survivors_at(a)) txt << ' ' << name;
        }
        txt << '\n';
      }
    }
    txt << "\nguard events: " << result.guard_events.size() << '\n';
    for (const auto& line : summary_notes) txt << "note: " << line << '\n';
    note("report/summary.txt");
  }

  return result;
}

}  // namespace fq::bt
