// fqcast: distribution-forecast experiments from the command line.
//
// Subcommands: ingest, synth, run, score, mcs, report, inspect.
// Exit codes: 0 success, 2 configuration error, 3 data error.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include "fq/backtest.hpp"
#include "fq/mcs.hpp"
#include "fq/scoring.hpp"
#include "fq/timeseries.hpp"

namespace fs = std::filesystem;
using namespace fq;

namespace {

void print_mean_losses(const bt::ExperimentResult& result) {
  std::printf("mean losses:\n");
  for (const auto& id : result.rule_ids) {
    const score::LossMatrix& lm = result.losses.at(id);
    std::printf("  %-18s", id.c_str());
    for (std::size_t m = 0; m < lm.models.size(); ++m)
      std::printf(" %s=%.6g", lm.models[m].c_str(), lm.losses.col(static_cast<Eigen::Index>(m)).mean());
    std::printf("\n");
  }
}

void apply_overrides(bt::ExperimentConfig& config, const CLI::App* cmd, std::uint64_t seed,
                     std::size_t jobs, const std::string& out) {
  if (cmd->count("--seed")) config.seed = seed;
  if (cmd->count("--jobs")) config.jobs = jobs;
  if (cmd->count("--out")) config.out_dir = out;
}

int run_ingest(const std::string& input, const std::string& out, const std::string& date_format,
               const std::string& transform, double multiplier) {
  const ts::LoadResult loaded = ts::load_panel(input, date_format);
  ts::Panel panel = loaded.panel;
  const ts::Transform method = ts::transform_from_string(transform);
  if (method != ts::Transform::none) panel = ts::to_stationary(panel, method, multiplier);
  ts::write_panel(panel, out);
  std::printf("%s: %zu rows x %zu series (%zu rows dropped), %s .. %s\n", input.c_str(), panel.rows(),
              panel.cols(), loaded.rows_dropped, panel.dates.front().c_str(), panel.dates.back().c_str());
  std::printf("wrote %s\n", out.c_str());
  return 0;
}

int run_synth(const bt::SyntheticSpec& spec, const std::string& out) {
  const ts::Panel panel = bt::generate_synthetic(spec);
  ts::write_panel(panel, out);
  std::printf("%s panel: %zu rows x %zu series, seed %llu\n", bt::to_string(spec.kind).c_str(),
              panel.rows(), panel.cols(), static_cast<unsigned long long>(spec.seed));
  std::printf("wrote %s\n", out.c_str());
  return 0;
}

int run_run(const bt::ExperimentConfig& config, bool validate_only) {
  if (validate_only) {
    std::printf("config ok\n%s\n", bt::config_to_json(config).dump(2).c_str());
    return 0;
  }
  const bt::ExperimentResult result = bt::run_experiment(config);
  std::printf("evaluated %zu days x %zu models under %zu rules\n", result.eval_dates.size(),
              config.roster.size(), result.rule_ids.size());
  print_mean_losses(result);
  for (const auto& [rule, res] : result.mcs_results) {
    std::printf("confidence set (%s):", rule.c_str());
    for (const auto& m : res.survivors_at(config.mcs.alphas.front())) std::printf(" %s", m.c_str());
    std::printf("  [level %g]\n", config.mcs.alphas.front());
  }
  if (!result.guard_events.empty())
    std::printf("refit guard intervened %zu time(s); see guard_events.csv\n", result.guard_events.size());
  std::printf("wrote %zu files under %s\n", result.files.size(), config.out_dir.c_str());
  return 0;
}

int run_score(bt::ExperimentConfig config, const std::string& model_id) {
  std::vector<bt::ModelConfig> picked;
  std::string available;
  for (const auto& m : config.roster) {
    if (m.id == model_id) picked.push_back(m);
    available += (available.empty() ? "" : ", ") + m.id;
  }
  if (picked.empty())
    throw ConfigError("model '" + model_id + "' is not in the roster (have: " + available + ")");
  config.roster = std::move(picked);

  const bt::ExperimentResult result = bt::run_experiment(config);
  std::printf("scored %s over %zu days\n", model_id.c_str(), result.eval_dates.size());
  print_mean_losses(result);
  std::printf("wrote %zu files under %s\n", result.files.size(), config.out_dir.c_str());
  return 0;
}

int run_mcs_cmd(const std::string& losses_path, const mcs::Options& options,
                const std::vector<double>& alphas, const std::string& out) {
  const score::LossMatrix losses = score::LossMatrix::read_csv(losses_path);
  const mcs::Result result = mcs::run_mcs(losses, options);

  std::printf("%zu models, %zu days, block length %zu\n", losses.models.size(), losses.dates.size(),
              result.block_length);
  std::printf("%-24s %10s %14s\n", "model", "p_value", "eliminated_at");
  for (const auto& m : result.models)
    std::printf("%-24s %10.4f %14zu\n", m.model.c_str(), m.p_value, m.eliminated_at);
  for (double a : alphas) {
    std::printf("survivors at %g:", a);
    for (const auto& m : result.survivors_at(a)) std::printf(" %s", m.c_str());
    std::printf("\n");
  }

  if (!out.empty()) {
    std::ofstream file(out);
    file << "model,p_value,eliminated_at,block_length\n";
    for (const auto& m : result.models)
      file << m.model << ',' << m.p_value << ',' << m.eliminated_at << ',' << result.block_length << '\n';
    std::printf("wrote %s\n", out.c_str());
  }
  return 0;
}

int run_report(const std::string& run_dir) {
  const fs::path summary = fs::path(run_dir) / "report" / "summary.txt";
  std::ifstream in(summary);
  if (!in) throw DataError("no summary found at '" + summary.string() + "' (is this a run directory?)");
  std::cout << in.rdbuf();

  std::printf("\ntables:\n");
  for (const char* sub : {"losses", "mcs", "report"}) {
    const fs::path dir = fs::path(run_dir) / sub;
    if (!fs::exists(dir)) continue;
    std::vector<std::string> names;
    for (const auto& entry : fs::directory_iterator(dir))
      if (entry.path().extension() == ".csv") names.push_back(entry.path().filename().string());
    std::sort(names.begin(), names.end());
    for (const auto& n : names) std::printf("  %s/%s\n", sub, n.c_str());
  }
  return 0;
}

int run_inspect(const std::string& path, const std::string& date_format) {
  if (fs::path(path).extension() == ".json") {
    const bt::ExperimentConfig config = bt::load_config(path);
    std::printf("config ok\n%s\n", bt::config_to_json(config).dump(2).c_str());
    return 0;
  }
  const ts::LoadResult loaded = ts::load_panel(path, date_format);
  const ts::Panel& panel = loaded.panel;
  std::printf("%s: %zu rows x %zu series (%zu rows dropped), %s .. %s\n", path.c_str(), panel.rows(),
              panel.cols(), loaded.rows_dropped, panel.dates.front().c_str(), panel.dates.back().c_str());
  std::printf("%-16s %12s %12s %12s %12s\n", "series", "mean", "sd", "min", "max");
  for (std::size_t j = 0; j < panel.cols(); ++j) {
    const Vector col = panel.values.col(static_cast<Eigen::Index>(j));
    const double mean = col.mean();
    const double sd = std::sqrt((col.array() - mean).square().sum() /
                                std::max<double>(1.0, static_cast<double>(col.size() - 1)));
    std::printf("%-16s %12.6g %12.6g %12.6g %12.6g\n", panel.names[j].c_str(), mean, sd,
                col.minCoeff(), col.maxCoeff());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"distribution-forecast experiments: factor-quantile models, benchmarks, scoring, confidence sets"};
  app.require_subcommand(1);

  // ingest
  auto* ingest = app.add_subcommand("ingest", "clean a raw panel csv and write it back in canonical form");
  std::string in_path, in_out = "panel.csv", in_format = "%Y-%m-%d", in_transform = "none";
  double in_multiplier = 1.0;
  ingest->add_option("input", in_path, "raw csv with a date column followed by one column per series")
      ->required()
      ->check(CLI::ExistingFile);
  ingest->add_option("--out", in_out, "output csv path (default panel.csv)");
  ingest->add_option("--date-format", in_format, "strptime pattern for the date column");
  ingest->add_option("--transform", in_transform, "none | log_returns | simple_returns | first_difference");
  ingest->add_option("--multiplier", in_multiplier, "scale applied after the transform (e.g. 100 for percent)");

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic panel");
  bt::SyntheticSpec spec;
  std::string synth_kind = "factor_gaussian", synth_out = "synthetic.csv";
  long long synth_assets = 8, synth_length = 600, synth_factors = 1;
  synth->add_option("--kind", synth_kind, "factor_gaussian | factor_t | egarch_panel | regime_switch");
  synth->add_option("--assets", synth_assets, "number of series")->check(CLI::PositiveNumber);
  synth->add_option("--length", synth_length, "number of rows")->check(CLI::PositiveNumber);
  synth->add_option("--factors", synth_factors, "latent factor count")->check(CLI::PositiveNumber);
  synth->add_option("--loading", spec.loading, "factor loading scale");
  synth->add_option("--idio", spec.idio_scale, "idiosyncratic noise scale");
  synth->add_option("--seed", spec.seed, "generator seed");
  synth->add_option("--out", synth_out, "output csv path (default synthetic.csv)");

  // run / score share the override flags
  std::string run_config, score_config, score_model;
  std::uint64_t run_seed = 0, score_seed = 0;
  std::size_t run_jobs = 1, score_jobs = 1;
  std::string run_out, score_out;
  bool run_validate = false;

  auto* run = app.add_subcommand("run", "execute a full experiment from a json config");
  run->add_option("config", run_config, "experiment config (json)")->required()->check(CLI::ExistingFile);
  run->add_option("--seed", run_seed, "override the config seed");
  run->add_option("--jobs", run_jobs, "override the worker thread count");
  run->add_option("--out", run_out, "override the output directory");
  run->add_flag("--validate", run_validate, "check and echo the config without running");

  auto* score_cmd = app.add_subcommand("score", "compute per-day losses for a single roster model");
  score_cmd->add_option("config", score_config, "experiment config (json)")->required()->check(CLI::ExistingFile);
  score_cmd->add_option("--model", score_model, "roster id to score")->required();
  score_cmd->add_option("--seed", score_seed, "override the config seed");
  score_cmd->add_option("--jobs", score_jobs, "override the worker thread count");
  score_cmd->add_option("--out", score_out, "override the output directory");

  // mcs
  auto* mcs_cmd = app.add_subcommand("mcs", "model confidence set over a stored loss matrix");
  std::string mcs_path, mcs_out;
  mcs::Options mcs_options;
  std::vector<double> mcs_alphas = {0.25, 0.10};
  mcs_cmd->add_option("losses", mcs_path, "loss matrix csv (date column, one column per model)")
      ->required()
      ->check(CLI::ExistingFile);
  mcs_cmd->add_option("--bootstrap", mcs_options.bootstrap, "bootstrap resamples (default 1000)");
  mcs_cmd->add_option("--block", mcs_options.block_length, "block length; 0 selects it automatically");
  mcs_cmd->add_option("--alpha", mcs_alphas, "levels to report survivor sets at");
  mcs_cmd->add_option("--seed", mcs_options.seed, "bootstrap seed");
  mcs_cmd->add_option("--out", mcs_out, "also write the result table to this csv");

  // report / inspect
  auto* report = app.add_subcommand("report", "print the summary and table listing of a finished run");
  std::string report_dir;
  report->add_option("run_dir", report_dir, "experiment output directory")->required();

  auto* inspect = app.add_subcommand("inspect", "describe a panel csv, loss csv, or config");
  std::string inspect_path, inspect_format = "%Y-%m-%d";
  inspect->add_option("path", inspect_path, "file to describe")->required()->check(CLI::ExistingFile);
  inspect->add_option("--date-format", inspect_format, "strptime pattern for csv date columns");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;  // bad flags are configuration errors
  }

  try {
    if (*ingest) return run_ingest(in_path, in_out, in_format, in_transform, in_multiplier);
    if (*synth) {
      spec.kind = bt::synthetic_kind_from_string(synth_kind);
      spec.n_assets = static_cast<Eigen::Index>(synth_assets);
      spec.t_obs = static_cast<Eigen::Index>(synth_length);
      spec.n_factors = static_cast<Eigen::Index>(synth_factors);
      return run_synth(spec, synth_out);
    }
    if (*run) {
      bt::ExperimentConfig config = bt::load_config(run_config);
      apply_overrides(config, run, run_seed, run_jobs, run_out);
      config.validate();
      return run_run(config, run_validate);
    }
    if (*score_cmd) {
      bt::ExperimentConfig config = bt::load_config(score_config);
      apply_overrides(config, score_cmd, score_seed, score_jobs, score_out);
      config.validate();
      return run_score(std::move(config), score_model);
    }
    if (*mcs_cmd) return run_mcs_cmd(mcs_path, mcs_options, mcs_alphas, mcs_out);
    if (*report) return run_report(report_dir);
    if (*inspect) return run_inspect(inspect_path, inspect_format);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
