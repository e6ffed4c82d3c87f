#pragma once

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "fq/common.hpp"
#include "fq/copula.hpp"
#include "fq/mcs.hpp"
#include "fq/rng.hpp"
#include "fq/scoring.hpp"
#include "fq/timeseries.hpp"

namespace fq::bt {

// --- Synthetic panels with a known generating law.

enum class SyntheticKind { factor_gaussian, factor_t, egarch_panel, regime_switch };

SyntheticKind synthetic_kind_from_string(const std::string& name);
std::string to_string(SyntheticKind kind);

// factor_gaussian: y_t = L f_t + idio_scale * eps_t with f, eps standard
//   normal.  Column j of L is `loading` for j = 0 and a loading * sqrt(2) *
//   cos(pi j (i + 1/2) / n) pattern for j >= 1, so factors are orthogonal
//   and identifiable.
// factor_t: same loadings, factors drawn from a unit-variance Student
//   t(5); idiosyncratic noise stays normal.
// egarch_panel: independent asymmetric log-variance columns (persistence
//   0.95, magnitude 0.10, sign response -0.08, t(7) innovations) around an
//   unconditional volatility of idio_scale, after a 250-step burn-in.
// regime_switch: factor_gaussian whose odd-index assets flip loading sign
//   from row t_obs/2 onwards.
struct SyntheticSpec {
  SyntheticKind kind = SyntheticKind::factor_gaussian;
  Eigen::Index n_assets = 8;
  Eigen::Index t_obs = 600;
  Eigen::Index n_factors = 1;
  double loading = 1.0;
  double idio_scale = 0.3;
  std::uint64_t seed = 0;
};

// Deterministic panel with consecutive ISO dates and names a01, a02, ...
ts::Panel generate_synthetic(const SyntheticSpec& spec);

// --- Model roster.

struct ModelConfig {
  std::string id;
  std::string family;              // fq_ab | fq_al | edf | ccc_garch | dcc_garch
  Eigen::Index calibration = 250;  // rolling window length
  Eigen::Index n_factors = 1;      // leading components used (fq_ab) or dropped (fq_al)
  Eigen::Index bag_size = 50;      // fq_ab: node-law draws per day
  Eigen::Index bag_samples = 2000;  // fq_ab: pooled values per draw
  double omega_scale = 1.0;        // fq_ab: node-law covariance multiplier
};

// Refit guard: a freshly fitted parameter vector whose distance from the
// previous accepted one exceeds `multiple` times the trailing median of
// accepted day-to-day changes is rejected in favour of the previous vector.
struct GuardPolicy {
  double multiple = 10.0;
  std::size_t warmup = 5;    // accepted changes needed before guarding starts
  std::size_t window = 60;   // trailing changes kept for the median
  double floor = 1e-3;       // lower bound on the median scale
};

// Something a guarded driver wants logged; the runner stamps date and model.
struct DriverEvent {
  std::string asset;
  double distance = 0.0;
  double threshold = 0.0;
  std::string reason;  // "jump" | "fit_failure"
};

struct GuardEvent {
  std::string date;
  std::string model;
  std::string asset;
  double distance = 0.0;
  double threshold = 0.0;
  std::string reason;
};

// One-day-ahead joint forecaster over a rolling calibration window.
// Stateless drivers must be safe to call concurrently from several threads;
// stateful ones (the volatility models with refit guards) see days strictly
// in order on one thread.
class ModelDriver {
 public:
  virtual ~ModelDriver() = default;
  virtual bool stateful() const { return false; }
  virtual cop::JointForecast forecast(const Matrix& window, std::size_t n_samples, const Rng& rng) = 0;
  // Returns and clears events accumulated since the last call.
  virtual std::vector<DriverEvent> drain_events() { return {}; }
};

std::unique_ptr<ModelDriver> make_model(const ModelConfig& config, const std::vector<double>& taus,
                                        const GuardPolicy& guard = {}, std::size_t jobs = 1);

using ModelFactory = std::function<std::unique_ptr<ModelDriver>(const ModelConfig&)>;

// --- Experiment configuration.

struct DataConfig {
  std::string kind = "synthetic";  // synthetic | csv
  SyntheticSpec synthetic;
  std::string csv_path;
  std::string date_format = "%Y-%m-%d";
  std::string transform = "none";  // none | log_returns | simple_returns | first_difference
  double multiplier = 1.0;
};

struct McsConfig {
  std::size_t bootstrap = 1000;
  std::size_t block_length = 0;  // 0 = automatic
  std::vector<double> alphas = {0.25, 0.10};
};

struct ExperimentConfig {
  DataConfig data;
  std::vector<ModelConfig> roster;
  std::vector<double> taus;       // empty = the nine tail-weighted levels
  std::size_t samples = 10000;    // joint draws per model-day
  std::vector<std::string> rules;  // empty = the standard nine rules
  McsConfig mcs;
  std::vector<std::string> subperiods;  // ISO boundary dates (starts of later parts)
  std::size_t eval_days = 0;      // 0 = every available target day
  GuardPolicy guard;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  std::string out_dir = "fqcast_out";

  void validate() const;  // throws ConfigError with the offending field
};

// Parses and validates a config document; error messages carry the JSON
// path of the offending entry.  Unknown keys are rejected.
ExperimentConfig config_from_json(const nlohmann::json& doc);
ExperimentConfig load_config(const std::string& path);
nlohmann::json config_to_json(const ExperimentConfig& config);

// --- Running.

struct ExperimentResult {
  std::vector<std::string> eval_dates;
  std::vector<std::string> rule_ids;
  // Per rule: losses over eval days x models.  Univariate rules hold the
  // across-asset mean; per-asset matrices are keyed "rule:asset".
  std::map<std::string, score::LossMatrix> losses;
  std::map<std::string, mcs::Result> mcs_results;  // aggregate rules only
  std::vector<GuardEvent> guard_events;
  std::vector<std::string> files;  // everything written, relative to out_dir
};

// Rolling one-day-ahead study: every model forecasts every target day after
// the longest calibration window, forecasts are scored against the realized
// vector, loss matrices feed the model confidence set, and all tables land
// under out_dir.  Deterministic for a fixed config: every (day, model)
// pair draws from its own generator split of (seed, date, model id), and
// checkpoints let an interrupted run resume without changing any value.
ExperimentResult run_experiment(const ExperimentConfig& config);

// Same, with model construction delegated to the caller (tests inject
// failing or instrumented drivers).
ExperimentResult run_experiment(const ExperimentConfig& config, const ModelFactory& factory);

// Splits by date: part k holds rows in [boundary_{k-1}, boundary_k), with
// open first and last parts.  K boundaries make K+1 parts; empty parts are
// allowed.  Boundaries must be sorted ISO dates.
std::vector<score::LossMatrix> subperiod_split(const score::LossMatrix& losses,
                                               const std::vector<std::string>& boundaries);

}  // namespace fq::bt
