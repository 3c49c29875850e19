#pragma once

// Configuration-driven experiment orchestration: data generation or
// ingestion, control-variate fitting, sampler sweeps over step sizes and
// mini-batch sizes, metric evaluation and result emission.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "sgpdmp/diagnostics.hpp"
#include "sgpdmp/gradient_model.hpp"
#include "sgpdmp/samplers.hpp"
#include "sgpdmp/targets.hpp"

namespace sgpdmp {

using json = nlohmann::json;

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct SamplerSpec {
  SamplerKind kind = SamplerKind::SGZZ;
  double refresh_rate = 1.0;   // sg-bps
  double spike_weight = 0.5;   // sg-szz
  bool single_event_mode = false;
};

struct ModelSpec {
  std::string kind = "linear_regression";  // logistic | bnn
  int n = 1000;
  int dim = 5;                // d (linear) or p (logistic / bnn inputs)
  double c = 1.0;             // linear-regression noise scale
  double rho = 0.4;           // logistic covariate correlation
  double prior_variance = 0;  // 0 means kind default (100 linear, 10 else)
  bool sparse = false;        // logistic: zero half the true parameters
  int hidden = 50;            // bnn width
  std::string csv_path;       // load instead of synthesizing when set

  double effective_prior_variance() const {
    if (prior_variance > 0) return prior_variance;
    return kind == "linear_regression" ? 100.0 : 10.0;
  }
};

struct MetricToggles {
  bool std_error = true;
  bool ksd = false;
  bool acf = false;
  bool predictive_loss = false;
  int ksd_max_samples = 200;
  int loss_max_samples = 100;
  int acf_max_lag = 50;
  double ksd_c = 1.0;
  double ksd_beta = -0.5;
};

struct ExperimentConfig {
  ModelSpec model;
  std::vector<SamplerSpec> samplers;
  std::vector<double> step_sizes;
  std::vector<int> batch_sizes{1};
  double horizon = 0.0;   // either horizon or iterations must be set
  long iterations = 0;    // horizon = iterations * step size
  int replicates = 1;
  std::uint64_t seed = 1;
  std::string output_dir = "out";
  std::string init = "cv";  // cv | ols | zero
  double train_fraction = 0.9;
  bool standardize = false;
  bool save_trajectories = false;
  int threads = 1;
  AdamConfig adam{1e-3, 0.9, 0.999, 1e-8, 10000, 0.01};
  MetricToggles metrics;

  double cell_horizon(double h) const {
    return horizon > 0 ? horizon : static_cast<double>(iterations) * h;
  }

  void validate() const {
    if (samplers.empty()) throw ConfigError("config: no samplers");
    if (step_sizes.empty()) throw ConfigError("config: step_sizes empty");
    for (double h : step_sizes)
      if (!(h > 0)) throw ConfigError("config: step_size must be positive");
    if (batch_sizes.empty()) throw ConfigError("config: batch_sizes empty");
    for (int b : batch_sizes)
      if (b < 1) throw ConfigError("config: batch_size must be >= 1");
    if (replicates < 1) throw ConfigError("config: replicates must be >= 1");
    if (horizon <= 0 && iterations <= 0)
      throw ConfigError("config: set horizon or iterations");
    if (init != "cv" && init != "ols" && init != "zero")
      throw ConfigError("config: init must be cv, ols or zero");
    if (!(train_fraction > 0 && train_fraction < 1))
      throw ConfigError("config: train_fraction outside (0,1)");
    if (threads < 1) throw ConfigError("config: threads must be >= 1");
    adam.validate();
  }
};

// ----- JSON parsing (strict: unknown keys rejected) -----

namespace detail {

inline void check_keys(const json& obj, const std::string& path,
                       std::initializer_list<const char*> allowed) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* key : allowed) ok |= (it.key() == key);
    if (!ok)
      throw ConfigError("config: unknown key '" + path + it.key() + "'");
  }
}

template <typename T>
void read_field(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) {
    try {
      out = obj.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(std::string("config: bad value for '") + key + "'");
    }
  }
}

inline SamplerKind parse_sampler_kind(const std::string& name) {
  if (name == "sgld") return SamplerKind::SGLD;
  if (name == "sg-zz") return SamplerKind::SGZZ;
  if (name == "sg-bps") return SamplerKind::SGBPS;
  if (name == "sg-szz") return SamplerKind::SGSZZ;
  throw ConfigError("config: unknown sampler kind '" + name + "'");
}

}  // namespace detail

inline ExperimentConfig parse_config(const json& doc) {
  using detail::check_keys;
  using detail::read_field;
  if (!doc.is_object()) throw ConfigError("config: document is not an object");
  check_keys(doc, "",
             {"model", "samplers", "step_sizes", "batch_sizes", "horizon",
              "iterations", "replicates", "seed", "output_dir", "init",
              "train_fraction", "standardize", "save_trajectories", "threads",
              "adam", "metrics"});
  ExperimentConfig cfg;

  if (!doc.contains("model")) throw ConfigError("config: missing 'model'");
  const json& m = doc.at("model");
  check_keys(m, "model.",
             {"kind", "n", "dim", "c", "rho", "prior_variance", "sparse",
              "hidden", "csv_path"});
  read_field(m, "kind", cfg.model.kind);
  if (cfg.model.kind != "linear_regression" && cfg.model.kind != "logistic" &&
      cfg.model.kind != "bnn")
    throw ConfigError("config: unknown model.kind '" + cfg.model.kind + "'");
  read_field(m, "n", cfg.model.n);
  read_field(m, "dim", cfg.model.dim);
  read_field(m, "c", cfg.model.c);
  read_field(m, "rho", cfg.model.rho);
  read_field(m, "prior_variance", cfg.model.prior_variance);
  read_field(m, "sparse", cfg.model.sparse);
  read_field(m, "hidden", cfg.model.hidden);
  read_field(m, "csv_path", cfg.model.csv_path);

  if (!doc.contains("samplers"))
    throw ConfigError("config: missing 'samplers'");
  for (const json& s : doc.at("samplers")) {
    check_keys(s, "samplers[].",
               {"kind", "refresh_rate", "spike_weight", "single_event_mode"});
    SamplerSpec spec;
    std::string kind;
    if (!s.contains("kind"))
      throw ConfigError("config: sampler entry missing 'kind'");
    read_field(s, "kind", kind);
    spec.kind = detail::parse_sampler_kind(kind);
    read_field(s, "refresh_rate", spec.refresh_rate);
    read_field(s, "spike_weight", spec.spike_weight);
    read_field(s, "single_event_mode", spec.single_event_mode);
    cfg.samplers.push_back(spec);
  }

  if (!doc.contains("step_sizes"))
    throw ConfigError("config: missing 'step_sizes'");
  cfg.step_sizes = doc.at("step_sizes").get<std::vector<double>>();
  for (double h : cfg.step_sizes)
    if (!(h > 0)) throw ConfigError("config: step_size must be positive");
  read_field(doc, "batch_sizes", cfg.batch_sizes);
  read_field(doc, "horizon", cfg.horizon);
  read_field(doc, "iterations", cfg.iterations);
  read_field(doc, "replicates", cfg.replicates);
  read_field(doc, "seed", cfg.seed);
  read_field(doc, "output_dir", cfg.output_dir);
  read_field(doc, "init", cfg.init);
  read_field(doc, "train_fraction", cfg.train_fraction);
  read_field(doc, "standardize", cfg.standardize);
  read_field(doc, "save_trajectories", cfg.save_trajectories);
  read_field(doc, "threads", cfg.threads);

  if (doc.contains("adam")) {
    const json& a = doc.at("adam");
    check_keys(a, "adam.",
               {"alpha", "beta1", "beta2", "delta", "iterations",
                "minibatch_fraction"});
    read_field(a, "alpha", cfg.adam.alpha);
    read_field(a, "beta1", cfg.adam.beta1);
    read_field(a, "beta2", cfg.adam.beta2);
    read_field(a, "delta", cfg.adam.delta);
    read_field(a, "iterations", cfg.adam.iterations);
    read_field(a, "minibatch_fraction", cfg.adam.minibatch_fraction);
  }
  if (doc.contains("metrics")) {
    const json& t = doc.at("metrics");
    check_keys(t, "metrics.",
               {"std_error", "ksd", "acf", "predictive_loss",
                "ksd_max_samples", "loss_max_samples", "acf_max_lag", "ksd_c",
                "ksd_beta"});
    read_field(t, "std_error", cfg.metrics.std_error);
    read_field(t, "ksd", cfg.metrics.ksd);
    read_field(t, "acf", cfg.metrics.acf);
    read_field(t, "predictive_loss", cfg.metrics.predictive_loss);
    read_field(t, "ksd_max_samples", cfg.metrics.ksd_max_samples);
    read_field(t, "loss_max_samples", cfg.metrics.loss_max_samples);
    read_field(t, "acf_max_lag", cfg.metrics.acf_max_lag);
    read_field(t, "ksd_c", cfg.metrics.ksd_c);
    read_field(t, "ksd_beta", cfg.metrics.ksd_beta);
  }
  cfg.validate();
  return cfg;
}

inline ExperimentConfig parse_config(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  return parse_config(doc);
}

inline json serialize_config(const ExperimentConfig& cfg) {
  json doc;
  doc["model"] = {{"kind", cfg.model.kind},
                  {"n", cfg.model.n},
                  {"dim", cfg.model.dim},
                  {"c", cfg.model.c},
                  {"rho", cfg.model.rho},
                  {"prior_variance", cfg.model.prior_variance},
                  {"sparse", cfg.model.sparse},
                  {"hidden", cfg.model.hidden},
                  {"csv_path", cfg.model.csv_path}};
  doc["samplers"] = json::array();
  for (const auto& s : cfg.samplers)
    doc["samplers"].push_back({{"kind", sampler_kind_name(s.kind)},
                               {"refresh_rate", s.refresh_rate},
                               {"spike_weight", s.spike_weight},
                               {"single_event_mode", s.single_event_mode}});
  doc["step_sizes"] = cfg.step_sizes;
  doc["batch_sizes"] = cfg.batch_sizes;
  doc["horizon"] = cfg.horizon;
  doc["iterations"] = cfg.iterations;
  doc["replicates"] = cfg.replicates;
  doc["seed"] = cfg.seed;
  doc["output_dir"] = cfg.output_dir;
  doc["init"] = cfg.init;
  doc["train_fraction"] = cfg.train_fraction;
  doc["standardize"] = cfg.standardize;
  doc["save_trajectories"] = cfg.save_trajectories;
  doc["threads"] = cfg.threads;
  doc["adam"] = {{"alpha", cfg.adam.alpha},
                 {"beta1", cfg.adam.beta1},
                 {"beta2", cfg.adam.beta2},
                 {"delta", cfg.adam.delta},
                 {"iterations", cfg.adam.iterations},
                 {"minibatch_fraction", cfg.adam.minibatch_fraction}};
  doc["metrics"] = {{"std_error", cfg.metrics.std_error},
                    {"ksd", cfg.metrics.ksd},
                    {"acf", cfg.metrics.acf},
                    {"predictive_loss", cfg.metrics.predictive_loss},
                    {"ksd_max_samples", cfg.metrics.ksd_max_samples},
                    {"loss_max_samples", cfg.metrics.loss_max_samples},
                    {"acf_max_lag", cfg.metrics.acf_max_lag},
                    {"ksd_c", cfg.metrics.ksd_c},
                    {"ksd_beta", cfg.metrics.ksd_beta}};
  return doc;
}

// ----- experiment runner -----

struct ResultRow {
  std::string sampler;
  double step_size = 0.0;
  int batch_size = 1;
  int replicate = 0;
  MetricsReport metrics;
};

struct ReplicateContext {
  std::shared_ptr<const Dataset> train;
  std::shared_ptr<const Dataset> test;  // may be null
  FactorModel model;
  ControlVariate cv;
  Vector init_point;
  std::optional<Vector> true_std;  // analytic posterior std (linear only)
  LossKind loss_kind = LossKind::MSE;
  std::function<double(const Vector&, const Vector&)> predictor;  // MSE only
};

inline ReplicateContext prepare_replicate(const ExperimentConfig& cfg,
                                          int replicate) {
  ReplicateContext ctx;
  const std::uint64_t data_seed = derive_seed(cfg.seed, 0xdadaULL, replicate);
  const double prior_var = cfg.model.effective_prior_variance();

  Dataset full;
  if (!cfg.model.csv_path.empty()) {
    full = read_dataset_csv(cfg.model.csv_path);
  } else if (cfg.model.kind == "linear_regression") {
    full = synth_linear_regression(cfg.model.n, cfg.model.dim, cfg.model.c,
                                   data_seed)
               .first;
  } else if (cfg.model.kind == "logistic") {
    full = synth_logistic(cfg.model.n, cfg.model.dim, cfg.model.rho, data_seed,
                          cfg.model.sparse)
               .first;
  } else {
    full = synth_bnn_regression(cfg.model.n, cfg.model.dim, data_seed);
  }

  if (cfg.metrics.predictive_loss) {
    SplitSpec split{cfg.train_fraction, cfg.seed, replicate};
    auto [train, test] = load_and_split(full, split, cfg.standardize);
    ctx.train = std::make_shared<Dataset>(std::move(train));
    ctx.test = std::make_shared<Dataset>(std::move(test));
  } else {
    ctx.train = std::make_shared<Dataset>(std::move(full));
  }

  if (cfg.model.kind == "linear_regression") {
    ctx.model = linear_regression_model(ctx.train, cfg.model.c, prior_var);
    ctx.loss_kind = LossKind::MSE;
    if (cfg.metrics.std_error)
      ctx.true_std = Vector(
          linear_posterior_analytic(*ctx.train, cfg.model.c, prior_var)
              .covariance.diagonal()
              .cwiseSqrt());
  } else if (cfg.model.kind == "logistic") {
    ctx.model = logistic_model(ctx.train, prior_var);
    ctx.loss_kind = LossKind::LogisticNLL;
  } else {
    ctx.model = bnn_model(ctx.train, prior_var, cfg.model.hidden);
    ctx.loss_kind = LossKind::MSE;
    const BnnShape shape{ctx.train->n_features(), cfg.model.hidden};
    ctx.predictor = [shape](const Vector& params, const Vector& row) {
      return bnn_predict(shape, params, row);
    };
  }

  ctx.cv = fit_control_variate(ctx.model, cfg.adam,
                               derive_seed(cfg.seed, 0xadaULL, replicate));
  if (cfg.init == "cv") {
    ctx.init_point = ctx.cv.anchor;
  } else if (cfg.init == "zero") {
    ctx.init_point = Vector::Zero(ctx.model.dim);
  } else {  // ols: least squares on the design, linear targets only
    if (cfg.model.kind != "linear_regression")
      throw ConfigError("config: init 'ols' requires linear_regression");
    ctx.init_point = ctx.train->covariates.colPivHouseholderQr().solve(
        ctx.train->responses);
  }
  return ctx;
}

inline ResultRow run_cell(const ExperimentConfig& cfg,
                          const ReplicateContext& ctx, int sampler_idx,
                          int h_idx, int batch_idx, int replicate,
                          Trajectory* keep_trajectory = nullptr) {
  const SamplerSpec& spec = cfg.samplers[sampler_idx];
  ResultRow row;
  row.sampler = sampler_kind_name(spec.kind);
  row.step_size = cfg.step_sizes[h_idx];
  row.batch_size = cfg.batch_sizes[batch_idx];
  row.replicate = replicate;

  const auto t_start = std::chrono::steady_clock::now();
  try {
    SamplerConfig scfg;
    scfg.epsilon = row.step_size;
    scfg.horizon = cfg.cell_horizon(row.step_size);
    scfg.refresh_rate = spec.refresh_rate;
    scfg.batch_size = row.batch_size;
    scfg.single_event_mode = spec.single_event_mode;
    scfg.seed = derive_seed(cfg.seed, sampler_idx, h_idx, batch_idx, replicate);
    if (spec.kind == SamplerKind::SGSZZ) {
      const double slab0 =
          normal_density_at_zero(cfg.model.effective_prior_variance());
      scfg.kappa = sticky_kappa(
          Vector::Constant(ctx.model.dim, spec.spike_weight),
          Vector::Constant(ctx.model.dim, slab0));
    }
    Rng init_rng(derive_seed(scfg.seed, 0x1417ULL));
    SamplerState state = make_initial_state(spec.kind, ctx.init_point, init_rng);
    Trajectory traj = run_sampler(spec.kind, ctx.model, ctx.cv, scfg, state);

    row.metrics.divergence_flag = traj.divergence_flag;
    row.metrics.gradient_evaluations = traj.gradient_evaluations;
    if (!traj.divergence_flag) {
      const auto [mean, sd] = path_moments(traj);
      if (cfg.metrics.std_error && ctx.true_std)
        row.metrics.std_error = std_error_metric(sd, *ctx.true_std);
      if (cfg.metrics.ksd) {
        const double delta =
            scfg.horizon / std::max(1, cfg.metrics.ksd_max_samples - 1);
        const SampleMatrix samples = discretize_trajectory(traj, delta);
        const FactorModel& model = ctx.model;
        row.metrics.ksd =
            ksd(samples,
                [&model](const Vector& x) { return full_gradient(model, x); },
                cfg.metrics.ksd_c, cfg.metrics.ksd_beta);
      }
      if (cfg.metrics.acf) {
        const int n_pts = std::max(cfg.metrics.acf_max_lag * 20, 1000);
        const SampleMatrix samples =
            discretize_trajectory(traj, scfg.horizon / n_pts);
        for (long i = 0; i < samples.samples.cols(); ++i)
          row.metrics.acf.push_back(
              acf(samples.samples.col(i), cfg.metrics.acf_max_lag));
      }
      if (cfg.metrics.predictive_loss && ctx.test) {
        const double delta =
            scfg.horizon / std::max(1, cfg.metrics.loss_max_samples - 1);
        const SampleMatrix samples = discretize_trajectory(traj, delta);
        row.metrics.predictive_loss =
            predictive_loss(ctx.loss_kind, *ctx.test, samples, ctx.predictor);
      }
    }
    if (keep_trajectory) *keep_trajectory = std::move(traj);
  } catch (const std::exception&) {
    row.metrics.divergence_flag = true;
  }
  row.metrics.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
          .count();
  return row;
}

struct ExperimentOutput {
  std::vector<ResultRow> rows;
  // (file stem, trajectory) for optional per-cell trace dumps
  std::vector<std::pair<std::string, Trajectory>> traces;
};

inline ExperimentOutput run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  ExperimentOutput out;
  const int n_cells_per_rep = static_cast<int>(
      cfg.samplers.size() * cfg.step_sizes.size() * cfg.batch_sizes.size());
  for (int rep = 0; rep < cfg.replicates; ++rep) {
    const ReplicateContext ctx = prepare_replicate(cfg, rep);
    std::vector<ResultRow> rows(n_cells_per_rep);
    std::vector<Trajectory> traces(cfg.save_trajectories ? n_cells_per_rep : 0);
    std::atomic<int> next{0};
    auto worker = [&]() {
      while (true) {
        const int cell = next.fetch_add(1);
        if (cell >= n_cells_per_rep) break;
        const int si = cell / static_cast<int>(cfg.step_sizes.size() *
                                               cfg.batch_sizes.size());
        const int rem = cell % static_cast<int>(cfg.step_sizes.size() *
                                                cfg.batch_sizes.size());
        const int hi = rem / static_cast<int>(cfg.batch_sizes.size());
        const int bi = rem % static_cast<int>(cfg.batch_sizes.size());
        rows[cell] = run_cell(cfg, ctx, si, hi, bi, rep,
                              cfg.save_trajectories ? &traces[cell] : nullptr);
      }
    };
    const int n_threads = std::min(cfg.threads, n_cells_per_rep);
    if (n_threads <= 1) {
      worker();
    } else {
      std::vector<std::thread> pool;
      for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
      for (auto& th : pool) th.join();
    }
    for (int cell = 0; cell < n_cells_per_rep; ++cell) {
      out.rows.push_back(rows[cell]);
      if (cfg.save_trajectories) {
        std::ostringstream stem;
        stem << rows[cell].sampler << "_h" << rows[cell].step_size << "_b"
             << rows[cell].batch_size << "_r" << rep;
        out.traces.emplace_back(stem.str(), std::move(traces[cell]));
      }
    }
  }
  return out;
}

// ----- output emission -----

namespace detail {

inline std::string format_metric(double v) {
  if (std::isnan(v)) return "NaN";
  std::ostringstream ss;
  ss << std::setprecision(17) << v;
  return ss.str();
}

}  // namespace detail

inline void write_results_csv(const std::vector<ResultRow>& rows,
                              std::ostream& out) {
  out << "sampler,h,batch,replicate,std_error,ksd,predictive_loss,"
         "divergence_flag,gradient_evaluations\n";
  for (const auto& r : rows) {
    out << r.sampler << ',' << detail::format_metric(r.step_size) << ','
        << r.batch_size << ',' << r.replicate << ','
        << detail::format_metric(r.metrics.std_error) << ','
        << detail::format_metric(r.metrics.ksd) << ','
        << detail::format_metric(r.metrics.predictive_loss) << ','
        << (r.metrics.divergence_flag ? "true" : "false") << ','
        << r.metrics.gradient_evaluations << "\n";
  }
}

inline json result_row_json(const ResultRow& r) {
  json j;
  j["sampler"] = r.sampler;
  j["h"] = r.step_size;
  j["batch"] = r.batch_size;
  j["replicate"] = r.replicate;
  j["std_error"] = detail::format_metric(r.metrics.std_error);
  j["ksd"] = detail::format_metric(r.metrics.ksd);
  j["predictive_loss"] = detail::format_metric(r.metrics.predictive_loss);
  j["divergence_flag"] = r.metrics.divergence_flag;
  j["gradient_evaluations"] = r.metrics.gradient_evaluations;
  j["wall_time_s"] = r.metrics.wall_time_s;
  if (!r.metrics.acf.empty()) {
    json a = json::array();
    for (const auto& series : r.metrics.acf)
      a.push_back(std::vector<double>(series.data(),
                                      series.data() + series.size()));
    j["acf"] = a;
  }
  return j;
}

inline void write_outputs(const ExperimentOutput& out,
                          const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create directory " + dir);

  {
    std::ofstream csv(fs::path(dir) / "results.csv");
    if (!csv) throw std::runtime_error("cannot write results.csv in " + dir);
    write_results_csv(out.rows, csv);
  }
  {
    json doc = json::array();
    for (const auto& r : out.rows) doc.push_back(result_row_json(r));
    std::ofstream js(fs::path(dir) / "results.json");
    if (!js) throw std::runtime_error("cannot write results.json in " + dir);
    js << doc.dump(2) << "\n";
  }
  {
    std::ofstream md(fs::path(dir) / "summary.md");
    if (!md) throw std::runtime_error("cannot write summary.md in " + dir);
    md << "# Sweep summary\n\n";
    md << "| sampler | h | batch | mean std_error | mean ksd | mean loss | "
          "divergences |\n";
    md << "|---|---|---|---|---|---|---|\n";
    // aggregate over replicates, preserving first-seen cell order
    std::vector<std::tuple<std::string, double, int>> keys;
    for (const auto& r : out.rows) {
      const auto key = std::make_tuple(r.sampler, r.step_size, r.batch_size);
      bool seen = false;
      for (const auto& k : keys) seen |= (k == key);
      if (!seen) keys.push_back(key);
    }
    for (const auto& [sampler, h, batch] : keys) {
      double se = 0, kd = 0, pl = 0;
      int n_se = 0, n_kd = 0, n_pl = 0, n_div = 0;
      for (const auto& r : out.rows) {
        if (r.sampler != sampler || r.step_size != h || r.batch_size != batch)
          continue;
        if (!std::isnan(r.metrics.std_error)) { se += r.metrics.std_error; ++n_se; }
        if (!std::isnan(r.metrics.ksd)) { kd += r.metrics.ksd; ++n_kd; }
        if (!std::isnan(r.metrics.predictive_loss)) {
          pl += r.metrics.predictive_loss;
          ++n_pl;
        }
        n_div += r.metrics.divergence_flag ? 1 : 0;
      }
      auto cell = [](double sum, int n) {
        return n > 0 ? detail::format_metric(sum / n) : std::string("-");
      };
      md << "| " << sampler << " | " << detail::format_metric(h) << " | "
         << batch << " | " << cell(se, n_se) << " | " << cell(kd, n_kd)
         << " | " << cell(pl, n_pl) << " | " << n_div << " |\n";
    }
  }
  for (const auto& [stem, traj] : out.traces) {
    write_trajectory_files(
        traj, (fs::path(dir) / (stem + "_skeleton.csv")).string(),
        (fs::path(dir) / (stem + "_events.csv")).string());
  }
}

}  // namespace sgpdmp
