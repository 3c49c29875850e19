// Command-line front end: dataset generation, control-variate fitting,
// single sampler runs, trajectory evaluation and full sweeps.
//
// Exit codes: 0 success, 1 configuration error, 2 runtime failure in all
// cells of a sweep.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "sgpdmp/diagnostics.hpp"
#include "sgpdmp/harness.hpp"
#include "sgpdmp/samplers.hpp"
#include "sgpdmp/targets.hpp"

namespace fs = std::filesystem;
using namespace sgpdmp;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ExperimentConfig load_config(const std::string& path,
                             std::uint64_t* seed_override,
                             int* threads_override) {
  ExperimentConfig cfg = parse_config(read_file(path));
  if (seed_override) cfg.seed = *seed_override;
  if (threads_override) cfg.threads = *threads_override;
  return cfg;
}

json cv_to_json(const ControlVariate& cv) {
  json j;
  j["anchor"] = std::vector<double>(cv.anchor.data(),
                                    cv.anchor.data() + cv.anchor.size());
  j["full_grad_at_anchor"] = std::vector<double>(
      cv.full_grad_at_anchor.data(),
      cv.full_grad_at_anchor.data() + cv.full_grad_at_anchor.size());
  return j;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stochastic-gradient PDMP sampling harness"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "out";
  std::uint64_t seed = 0;
  bool seed_set = false;
  int threads = 0;

  auto add_common = [&](CLI::App* sub, bool needs_config) {
    auto* opt = sub->add_option("--config", config_path, "JSON config file");
    if (needs_config) opt->required();
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--seed", seed, "master seed override")
        ->each([&](const std::string&) { seed_set = true; });
    sub->add_option("--threads", threads, "worker threads");
  };

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "write a synthetic dataset CSV");
  std::string gen_kind = "linear_regression";
  int gen_n = 1000, gen_dim = 5;
  double gen_c = 1.0, gen_rho = 0.4;
  bool gen_sparse = false;
  std::uint64_t gen_seed = 1;
  std::string gen_out = "dataset.csv";
  std::string gen_truth_out;
  gen->add_option("--kind", gen_kind, "linear_regression | logistic | bnn");
  gen->add_option("--n", gen_n, "number of rows");
  gen->add_option("--dim", gen_dim, "covariate dimension");
  gen->add_option("--c", gen_c, "linear-regression noise scale");
  gen->add_option("--rho", gen_rho, "logistic covariate correlation");
  gen->add_flag("--sparse", gen_sparse, "zero half the true parameters");
  gen->add_option("--seed", gen_seed, "generator seed");
  gen->add_option("--out", gen_out, "output CSV path")->required();
  gen->add_option("--truth-out", gen_truth_out,
                  "optional CSV with the true parameters");

  auto* fit = app.add_subcommand("fit-cv", "fit the control-variate anchor");
  add_common(fit, true);

  auto* sample = app.add_subcommand(
      "sample", "run the first configured sampler cell and save its trace");
  add_common(sample, true);

  auto* eval = app.add_subcommand(
      "eval", "compute metrics for a saved trajectory against the config");
  add_common(eval, true);
  std::string traj_path;
  eval->add_option("--trajectory", traj_path, "skeleton CSV")->required();

  auto* sweep = app.add_subcommand("sweep", "run the full experiment grid");
  add_common(sweep, true);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      Dataset data;
      Vector truth;
      if (gen_kind == "linear_regression") {
        std::tie(data, truth) =
            synth_linear_regression(gen_n, gen_dim, gen_c, gen_seed);
      } else if (gen_kind == "logistic") {
        std::tie(data, truth) =
            synth_logistic(gen_n, gen_dim, gen_rho, gen_seed, gen_sparse);
      } else if (gen_kind == "bnn") {
        data = synth_bnn_regression(gen_n, gen_dim, gen_seed);
      } else {
        throw ConfigError("gen-data: unknown kind '" + gen_kind + "'");
      }
      write_dataset_csv(data, gen_out);
      if (!gen_truth_out.empty() && truth.size() > 0) {
        std::ofstream out(gen_truth_out);
        out << "param\n" << std::setprecision(17);
        for (long i = 0; i < truth.size(); ++i) out << truth[i] << "\n";
      }
      std::cout << "wrote " << gen_out << " (" << data.n_rows() << " rows)\n";
      return 0;
    }

    ExperimentConfig cfg =
        load_config(config_path, seed_set ? &seed : nullptr,
                    threads > 0 ? &threads : nullptr);

    if (fit->parsed()) {
      const ReplicateContext ctx = prepare_replicate(cfg, 0);
      fs::create_directories(out_dir);
      std::ofstream out(fs::path(out_dir) / "control_variate.json");
      out << cv_to_json(ctx.cv).dump(2) << "\n";
      std::cout << "anchor gradient norm "
                << ctx.cv.full_grad_at_anchor.norm() << "\n";
      return 0;
    }

    if (sample->parsed()) {
      const ReplicateContext ctx = prepare_replicate(cfg, 0);
      Trajectory traj;
      const ResultRow row = run_cell(cfg, ctx, 0, 0, 0, 0, &traj);
      fs::create_directories(out_dir);
      write_trajectory_files(traj,
                             (fs::path(out_dir) / "skeleton.csv").string(),
                             (fs::path(out_dir) / "events.csv").string());
      std::ofstream out(fs::path(out_dir) / "metrics.json");
      out << result_row_json(row).dump(2) << "\n";
      std::cout << "sampler " << row.sampler << " h " << row.step_size
                << (row.metrics.divergence_flag ? " DIVERGED" : " done")
                << "\n";
      return row.metrics.divergence_flag ? 2 : 0;
    }

    if (eval->parsed()) {
      const ReplicateContext ctx = prepare_replicate(cfg, 0);
      std::ifstream in(traj_path);
      if (!in) throw std::runtime_error("cannot open " + traj_path);
      const Trajectory traj = read_skeleton_csv(in);
      const auto [mean, sd] = path_moments(traj);
      json j;
      if (ctx.true_std) j["std_error"] = std_error_metric(sd, *ctx.true_std);
      j["mean"] = std::vector<double>(mean.data(), mean.data() + mean.size());
      j["std"] = std::vector<double>(sd.data(), sd.data() + sd.size());
      if (cfg.metrics.ksd) {
        const double delta = traj.duration() /
                             std::max(1, cfg.metrics.ksd_max_samples - 1);
        const FactorModel& model = ctx.model;
        j["ksd"] = ksd(
            discretize_trajectory(traj, delta),
            [&model](const Vector& x) { return full_gradient(model, x); },
            cfg.metrics.ksd_c, cfg.metrics.ksd_beta);
      }
      fs::create_directories(out_dir);
      std::ofstream out(fs::path(out_dir) / "eval.json");
      out << j.dump(2) << "\n";
      std::cout << j.dump(2) << "\n";
      return 0;
    }

    // sweep
    const ExperimentOutput result = run_experiment(cfg);
    write_outputs(result, out_dir.empty() ? cfg.output_dir : out_dir);
    int n_failed = 0;
    for (const auto& r : result.rows)
      n_failed += r.metrics.divergence_flag ? 1 : 0;
    std::cout << result.rows.size() << " cells, " << n_failed
              << " flagged\n";
    if (!result.rows.empty() &&
        n_failed == static_cast<int>(result.rows.size()))
      return 2;
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
