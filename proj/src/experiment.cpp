#include "dmtl/experiment.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

namespace dmtl {

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t x = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void require(bool ok, const char* key, const std::string& why) {
  if (!ok) throw ConfigError(key, why);
}

// Shared option table for config files and command-line flags.
void bind_options(CLI::App& app, ExperimentConfig& c) {
  app.add_option("--solver", c.solver, "local-elm | mtl-elm | dmtl-elm | fo-dmtl-elm");
  app.add_option("--data", c.data, "synthetic | dataset | surrogate");
  app.add_option("--dataset", c.dataset, "comma-delimited dataset (features..., label)");
  app.add_option("--agents", c.agents, "number of tasks/agents m");
  app.add_option("--hidden", c.hidden, "hidden nodes L");
  app.add_option("--samples", c.samples, "samples per task N_t (synthetic)");
  app.add_option("--latent", c.latent, "shared basis width r");
  app.add_option("--outputs", c.outputs, "output dimension d (synthetic)");
  app.add_option("--normalize", c.normalize, "unit-norm columns of the stacked H (synthetic)");
  app.add_option("--train_total", c.train_total, "training samples over all tasks");
  app.add_option("--test_total", c.test_total, "testing samples over all tasks");
  app.add_option("--pca_dims", c.pca_dims, "PCA output dimension (0 = off)");
  app.add_option("--pca_variance", c.pca_variance, "PCA retained variance fraction (0 = off)");
  app.add_option("--surrogate_classes", c.surrogate_classes);
  app.add_option("--surrogate_dim", c.surrogate_dim);
  app.add_option("--surrogate_rank", c.surrogate_rank);
  app.add_option("--surrogate_per_class", c.surrogate_per_class);
  app.add_option("--surrogate_separation", c.surrogate_separation);
  app.add_option("--surrogate_spread", c.surrogate_spread);
  app.add_option("--surrogate_noise", c.surrogate_noise);
  app.add_option("--topology", c.topology, "ring | star | path | custom");
  app.add_option("--edge_list", c.edge_list, "edge list file for topology = custom");
  app.add_option("--rho", c.rho);
  app.add_option("--delta", c.delta);
  app.add_option("--gamma_cap", c.gamma_cap);
  app.add_option("--prox_mode", c.prox_mode, "prox-linear | standard");
  app.add_option("--tau_rule", c.tau_rule, "offset | constant | degree | lipschitz | theorem");
  app.add_option("--tau", c.tau);
  app.add_option("--zeta", c.zeta);
  app.add_option("--sigma", c.sigma, "strong-convexity constant (0 = min(mu1/m, mu2))");
  app.add_option("--mu1", c.mu1);
  app.add_option("--mu2", c.mu2);
  app.add_option("--mu_local", c.mu_local, "ridge parameter of the local ELM baseline");
  app.add_option("--k_max", c.k_max, "iterations");
  app.add_option("--stop_tol", c.stop_tol, "MTL-ELM stop on objective decrease (0 = off)");
  app.add_option("--seed", c.seed);
  app.add_option("--repetitions", c.repetitions);
  app.add_option("--output_dir", c.output_dir);
}

struct BuiltProblem {
  MtlProblem<double> problem;
  std::optional<HiddenLayer<double>> layer;
  std::vector<TaskDataset> tests;
};

BuiltProblem build_problem(const ExperimentConfig& c, std::uint64_t seed, const LabeledData* data) {
  BuiltProblem built;
  if (!c.classification()) {
    SyntheticSpec spec;
    spec.tasks = c.agents;
    spec.hidden = c.hidden;
    spec.samples = c.samples;
    spec.latent = c.latent;
    spec.outputs = c.outputs;
    spec.seed = seed;
    spec.normalize = c.normalize;
    built.problem = make_synthetic<double>(spec, c.mu1, c.mu2);
    return built;
  }
  if (!data) throw UsageError("classification experiment needs a dataset");
  std::optional<PcaTarget> pca;
  if (c.pca_dims > 0) pca = PcaTarget::dims(c.pca_dims);
  else if (c.pca_variance > 0) pca = PcaTarget::fraction(c.pca_variance);
  TaskSplit split = make_tasks(*data, c.agents, c.train_total, c.test_total, mix_seed(seed, 1), pca);
  built.layer = sample_hidden_layer<double>(split.train.front().inputs.cols(), c.hidden,
                                            mix_seed(seed, 2));
  built.problem.mu1 = c.mu1;
  built.problem.mu2 = c.mu2;
  built.problem.latent_dim = c.latent;
  for (const auto& train : split.train)
    built.problem.tasks.push_back({feature_map(*built.layer, train.inputs), train.targets});
  built.tests = std::move(split.test);
  return built;
}

Topology experiment_topology(const ExperimentConfig& c) {
  const TopologyKind kind = parse_topology_kind(c.topology);
  if (kind == TopologyKind::Custom) return read_edge_list_file(c.edge_list, c.agents);
  return build_topology(kind, c.agents);
}

AdmmParams<double> make_params(const ExperimentConfig& c, const MtlProblem<double>& prob,
                               const Topology& topo) {
  AdmmParams<double> p;
  p.rho = c.rho;
  p.delta = c.delta;
  p.gamma_cap = c.gamma_cap;
  p.mu1 = c.mu1;
  p.mu2 = c.mu2;
  p.prox_mode = c.prox_kind();
  if (c.sigma > 0) p.sigma = c.sigma;
  const int m = topo.agents();
  const double sigma = p.sigma_value(m);
  // L_t at the initial coefficients A⁰ = 1, first-order variant only.
  auto lipschitz = [&](int t) {
    if (c.solver_kind() != SolverKind::FoDmtlElm) return 0.0;
    const auto& h = prob.tasks[std::size_t(t)].hidden;
    const Matrix<double> ones = Matrix<double>::Ones(prob.latent_dim, prob.output_dim());
    return estimate_lipschitz<double>(h.transpose() * h, ones, c.mu1, m);
  };
  for (int t = 0; t < m; ++t) {
    const double d = topo.degree(t);
    double tau = c.tau;
    switch (c.tau_kind()) {
      case TauRule::Offset:
        tau = c.rho * d + c.tau;
        break;
      case TauRule::Constant:
        break;
      case TauRule::Degree:
        tau = c.tau * c.rho * d;
        break;
      case TauRule::Lipschitz:
        tau = c.rho * d + c.tau * lipschitz(t);
        break;
      case TauRule::Theorem:
        tau = c.rho * m * (c.delta + 0.5) * d - sigma / 2 + lipschitz(t) + c.tau;
        if (p.prox_mode == ProxMode::ProxLinear) tau = std::max(tau, c.rho * d);
        break;
    }
    p.tau.push_back(tau);
    p.zeta.push_back(c.zeta);
  }
  return p;
}

double mean_error(const std::vector<double>& errors) {
  double sum = 0;
  for (double e : errors) sum += e;
  return sum / double(errors.size());
}

}  // namespace

SolverKind ExperimentConfig::solver_kind() const {
  if (solver == "local-elm") return SolverKind::LocalElm;
  if (solver == "mtl-elm") return SolverKind::MtlElm;
  if (solver == "dmtl-elm") return SolverKind::DmtlElm;
  if (solver == "fo-dmtl-elm") return SolverKind::FoDmtlElm;
  throw ConfigError("solver", "unknown solver '" + solver +
                                  "' (expected local-elm, mtl-elm, dmtl-elm or fo-dmtl-elm)");
}

DataKind ExperimentConfig::data_kind() const {
  if (data == "synthetic") return DataKind::Synthetic;
  if (data == "dataset") return DataKind::Dataset;
  if (data == "surrogate") return DataKind::Surrogate;
  throw ConfigError("data", "unknown data source '" + data +
                                "' (expected synthetic, dataset or surrogate)");
}

TauRule ExperimentConfig::tau_kind() const {
  if (tau_rule == "offset") return TauRule::Offset;
  if (tau_rule == "constant") return TauRule::Constant;
  if (tau_rule == "degree") return TauRule::Degree;
  if (tau_rule == "lipschitz") return TauRule::Lipschitz;
  if (tau_rule == "theorem") return TauRule::Theorem;
  throw ConfigError("tau_rule", "unknown rule '" + tau_rule +
                                    "' (expected offset, constant, degree, lipschitz or theorem)");
}

ProxMode ExperimentConfig::prox_kind() const {
  if (prox_mode == "prox-linear") return ProxMode::ProxLinear;
  if (prox_mode == "standard") return ProxMode::Standard;
  throw ConfigError("prox_mode", "unknown mode '" + prox_mode +
                                     "' (expected prox-linear or standard)");
}

bool ExperimentConfig::decentralized() const {
  const SolverKind s = solver_kind();
  return s == SolverKind::DmtlElm || s == SolverKind::FoDmtlElm;
}

void ExperimentConfig::validate() const {
  solver_kind();
  const DataKind source = data_kind();
  tau_kind();
  prox_kind();
  require(agents >= 1, "agents", "must be >= 1");
  require(hidden >= 1, "hidden", "must be >= 1");
  require(latent >= 1, "latent", "must be >= 1");
  require(std::isfinite(mu1) && mu1 > 0, "mu1", "must be > 0");
  require(std::isfinite(mu2) && mu2 > 0, "mu2", "must be > 0");
  require(std::isfinite(mu_local) && mu_local > 0, "mu_local", "must be > 0");
  require(k_max >= 0, "k_max", "must be >= 0");
  require(std::isfinite(stop_tol) && stop_tol >= 0, "stop_tol", "must be >= 0");
  require(repetitions >= 1, "repetitions", "must be >= 1");
  require(!output_dir.empty(), "output_dir", "must not be empty");
  if (source == DataKind::Synthetic) {
    require(samples >= 1, "samples", "must be >= 1");
    require(outputs >= 1, "outputs", "must be >= 1");
  } else {
    require(train_total >= 3 * agents, "train_total", "needs at least 3 samples per task");
    require(train_total % agents == 0, "train_total", "must divide evenly over the agents");
    require(test_total >= agents, "test_total", "needs at least 1 sample per task");
    require(test_total % agents == 0, "test_total", "must divide evenly over the agents");
    require(pca_dims >= 0, "pca_dims", "must be >= 0");
    require(pca_variance >= 0 && pca_variance <= 1, "pca_variance", "must lie in [0, 1]");
    require(!(pca_dims > 0 && pca_variance > 0), "pca_variance",
            "set either pca_dims or pca_variance, not both");
    if (source == DataKind::Dataset) {
      require(!dataset.empty(), "dataset", "path required when data = dataset");
      require(std::filesystem::exists(dataset), "dataset", "file '" + dataset + "' not found");
    } else {
      require(surrogate_classes >= 3, "surrogate_classes", "must be >= 3");
      require(surrogate_dim >= 1, "surrogate_dim", "must be >= 1");
      require(surrogate_rank >= 1 && surrogate_rank <= surrogate_dim, "surrogate_rank",
              "must lie in [1, surrogate_dim]");
      require(surrogate_per_class >= 1, "surrogate_per_class", "must be >= 1");
      require(surrogate_separation > 0, "surrogate_separation", "must be > 0");
      require(surrogate_spread >= 0, "surrogate_spread", "must be >= 0");
      require(surrogate_noise >= 0, "surrogate_noise", "must be >= 0");
    }
  }
  try {
    const TopologyKind kind = parse_topology_kind(topology);
    if (kind == TopologyKind::Custom) {
      require(!edge_list.empty(), "edge_list", "path required when topology = custom");
      require(std::filesystem::exists(edge_list), "edge_list",
              "file '" + edge_list + "' not found");
    }
  } catch (const UsageError& e) {
    throw ConfigError("topology", e.what());
  }
  if (decentralized()) {
    require(std::isfinite(rho) && rho > 0, "rho", "must be > 0");
    require(std::isfinite(delta) && delta > 0, "delta", "must be > 0");
    require(std::isfinite(gamma_cap) && gamma_cap > 0, "gamma_cap", "must be > 0");
    require(std::isfinite(tau), "tau", "must be finite");
    require(std::isfinite(zeta) && zeta >= 0, "zeta", "must be >= 0");
    require(std::isfinite(sigma) && sigma >= 0, "sigma", "must be >= 0");
    if (tau_kind() != TauRule::Theorem) require(tau >= 0, "tau", "must be >= 0");
  }
}

ExperimentConfig parse_config(std::istream& in) {
  ExperimentConfig config;
  CLI::App app;
  bind_options(app, config);
  app.allow_config_extras(CLI::config_extras_mode::error);
  try {
    app.parse_from_stream(in);
  } catch (const CLI::ParseError& e) {
    throw ConfigError("config", e.what());
  }
  return config;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot open '" + path + "'");
  return parse_config(in);
}

SummaryStat summarize(const std::string& metric, const std::vector<double>& values) {
  SummaryStat s;
  s.metric = metric;
  if (values.empty()) return s;
  double sum = 0;
  for (double v : values) sum += v;
  s.mean = sum / double(values.size());
  if (values.size() > 1) {
    double sq = 0;
    for (double v : values) sq += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(sq / double(values.size() - 1));
  }
  return s;
}

std::vector<SummaryStat> ExperimentResult::summary() const {
  std::vector<double> objective, iterations, comm, error;
  for (const auto& r : repetitions) {
    objective.push_back(r.final_objective);
    iterations.push_back(r.iterations);
    comm.push_back(double(r.comm_scalars));
    if (r.test_error) error.push_back(*r.test_error);
  }
  std::vector<SummaryStat> out{summarize("final_objective", objective),
                               summarize("iterations", iterations),
                               summarize("comm_scalars", comm)};
  if (!error.empty()) out.push_back(summarize("test_error", error));
  return out;
}

SummaryStat ExperimentResult::wall_time() const {
  std::vector<double> seconds;
  for (const auto& r : repetitions) seconds.push_back(r.wall_seconds);
  return summarize("wall_seconds", seconds);
}

LabeledData experiment_dataset(const ExperimentConfig& c) {
  if (c.data_kind() == DataKind::Dataset) return load_dataset(c.dataset);
  LatentClassSpec spec;
  spec.classes = c.surrogate_classes;
  spec.dim = c.surrogate_dim;
  spec.latent_rank = c.surrogate_rank;
  spec.per_class = c.surrogate_per_class;
  spec.separation = c.surrogate_separation;
  spec.spread = c.surrogate_spread;
  spec.noise = c.surrogate_noise;
  spec.seed = c.seed;
  return make_latent_classes(spec);
}

RepetitionResult run_repetition(const ExperimentConfig& c, int repetition,
                                const LabeledData* data) {
  using Clock = std::chrono::steady_clock;
  const auto start = Clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(Clock::now() - start).count(); };

  RepetitionResult res;
  res.repetition = repetition;
  res.seed = c.seed + std::uint64_t(repetition);
  BuiltProblem built = build_problem(c, res.seed, data);
  const MtlProblem<double>& prob = built.problem;
  res.input_dim = built.layer ? built.layer->input_dim() : prob.hidden_dim();
  std::vector<double> errors;

  switch (c.solver_kind()) {
    case SolverKind::LocalElm: {
      double total = 0;
      for (int t = 0; t < prob.task_count(); ++t) {
        const auto& task = prob.tasks[std::size_t(t)];
        const Matrix<double> beta = solve_local_elm(task.hidden, task.targets, c.mu_local);
        total += (task.hidden * beta - task.targets).squaredNorm() / 2 +
                 c.mu_local / 2 * beta.squaredNorm();
        if (built.layer)
          errors.push_back(classify_and_score(beta, *built.layer, built.tests[std::size_t(t)]));
      }
      res.final_objective = total;
      res.trace.push_back({0, total, total, 0, 0, 0, elapsed()});
      break;
    }
    case SolverKind::MtlElm: {
      if (c.k_max < 1) throw ConfigError("k_max", "mtl-elm needs at least one iteration");
      std::vector<double> times;
      const double tol = c.stop_tol > 0 ? c.stop_tol : -std::numeric_limits<double>::infinity();
      const auto sol = solve_mtl_elm<double>(
          prob, c.k_max, tol, [&](int, const auto&, const auto&) { times.push_back(elapsed()); });
      for (std::size_t k = 0; k < sol.objective_trace.size(); ++k) {
        const double f = sol.objective_trace[k];
        res.trace.push_back({int(k + 1), f, f, 0, 0, 0, times[k]});
      }
      res.iterations = sol.iterations;
      res.final_objective = sol.objective_trace.back();
      if (built.layer)
        for (int t = 0; t < prob.task_count(); ++t)
          errors.push_back(classify_and_score(sol.basis, sol.coeffs[std::size_t(t)], *built.layer,
                                              built.tests[std::size_t(t)]));
      break;
    }
    case SolverKind::DmtlElm:
    case SolverKind::FoDmtlElm: {
      const Topology topo = experiment_topology(c);
      const Variant variant =
          c.solver_kind() == SolverKind::DmtlElm ? Variant::Exact : Variant::FirstOrder;
      DmtlSimulator<double> sim(prob, topo, make_params(c, prob, topo), variant);
      res.conditions = sim.conditions();
      const auto run = sim.run(c.k_max);
      for (const auto& row : run.trace)
        res.trace.push_back({row.k, row.objective, row.lagrangian, row.primal_residual,
                             row.dual_residual, row.comm_scalars, row.elapsed_seconds});
      res.iterations = sim.iteration();
      res.final_objective = run.trace.empty() ? run.initial_objective : run.trace.back().objective;
      res.comm_scalars = sim.bus().total_scalars_sent();
      if (built.layer)
        for (int t = 0; t < prob.task_count(); ++t)
          errors.push_back(classify_and_score(run.bases[std::size_t(t)],
                                              run.coeffs[std::size_t(t)], *built.layer,
                                              built.tests[std::size_t(t)]));
      break;
    }
  }
  if (!errors.empty()) res.test_error = mean_error(errors);
  res.wall_seconds = elapsed();
  return res;
}

ExperimentResult execute(const ExperimentConfig& c) {
  c.validate();
  std::optional<LabeledData> data;
  if (c.classification()) data = experiment_dataset(c);
  ExperimentResult result;
  for (int rep = 0; rep < c.repetitions; ++rep)
    result.repetitions.push_back(run_repetition(c, rep, data ? &*data : nullptr));
  return result;
}

ConditionReport condition_report(const ExperimentConfig& c) {
  c.validate();
  if (!c.decentralized())
    throw ConfigError("solver", "condition checks apply to dmtl-elm and fo-dmtl-elm only");
  std::optional<LabeledData> data;
  if (c.classification()) data = experiment_dataset(c);
  const BuiltProblem built = build_problem(c, c.seed, data ? &*data : nullptr);
  const Topology topo = experiment_topology(c);
  const Variant variant =
      c.solver_kind() == SolverKind::DmtlElm ? Variant::Exact : Variant::FirstOrder;
  DmtlSimulator<double> sim(built.problem, topo, make_params(c, built.problem, topo), variant);
  return sim.conditions();
}

void write_results(const ExperimentConfig& c, const ExperimentResult& result) {
  namespace fs = std::filesystem;
  const fs::path dir(c.output_dir);
  fs::create_directories(dir);
  auto open = [&](const std::string& name) {
    std::ofstream out(dir / name);
    if (!out) throw UsageError("cannot write " + (dir / name).string());
    return out;
  };

  for (const auto& rep : result.repetitions) {
    auto out = open("trace_rep" + std::to_string(rep.repetition + 1) + ".csv");
    out << "k,objective,lagrangian,primal_residual,dual_residual,comm_scalars,elapsed_seconds\n";
    for (const auto& row : rep.trace)
      out << row.k << ',' << format_number(row.objective) << ',' << format_number(row.lagrangian)
          << ',' << format_number(row.primal_residual) << ','
          << format_number(row.dual_residual) << ',' << row.comm_scalars << ','
          << format_number(row.elapsed_seconds) << '\n';
  }
  {
    auto out = open("repetitions.csv");
    out << "repetition,seed,iterations,final_objective,test_error,comm_scalars\n";
    for (const auto& rep : result.repetitions)
      out << rep.repetition + 1 << ',' << rep.seed << ',' << rep.iterations << ','
          << format_number(rep.final_objective) << ','
          << (rep.test_error ? format_number(*rep.test_error) : std::string()) << ','
          << rep.comm_scalars << '\n';
  }
  {
    auto out = open("summary.csv");
    out << "metric,mean,std\n";
    for (const auto& s : result.summary())
      out << s.metric << ',' << format_number(s.mean) << ',' << format_number(s.std) << '\n';
  }
  {
    auto out = open("timing.csv");
    out << "repetition,wall_seconds\n";
    for (const auto& rep : result.repetitions)
      out << rep.repetition + 1 << ',' << format_number(rep.wall_seconds) << '\n';
    const SummaryStat w = result.wall_time();
    out << "mean," << format_number(w.mean) << "\nstd," << format_number(w.std) << '\n';
  }
  {
    auto out = open("conditions.txt");
    for (const auto& rep : result.repetitions)
      if (rep.conditions)
        out << "repetition " << rep.repetition + 1 << "\n" << rep.conditions->to_string();
  }
}

int run_experiment(const ExperimentConfig& c, std::ostream& out, std::ostream& err) {
  try {
    c.validate();
    if (c.decentralized()) out << condition_report(c).to_string();
    const ExperimentResult result = execute(c);
    write_results(c, result);
    for (const auto& s : result.summary())
      out << s.metric << ": mean " << s.mean << ", std " << s.std << "\n";
    const SummaryStat w = result.wall_time();
    out << "wall_seconds: mean " << w.mean << ", std " << w.std << "\n";
    out << "results written to " << c.output_dir << "\n";
    return 0;
  } catch (const ConfigError& e) {
    err << "invalid configuration: " << e.what() << "\n";
    return 2;
  } catch (const DivergenceError& e) {
    err << "diverged: " << e.what() << "\n";
    return 3;
  } catch (const SingularityError& e) {
    err << "diverged: " << e.what() << "\n";
    return 3;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
}

std::vector<SweepRow> comm_sweep(const ExperimentConfig& config, const std::vector<int>& ks,
                                 const std::vector<int>& hidden_sizes) {
  config.validate();
  if (!config.decentralized())
    throw ConfigError("solver", "the communication sweep needs dmtl-elm or fo-dmtl-elm");
  if (!config.classification())
    throw ConfigError("data", "the communication sweep needs a classification data source");
  if (ks.empty() || hidden_sizes.empty())
    throw ConfigError("sweep", "k and L lists must be non-empty");
  const LabeledData data = experiment_dataset(config);
  std::vector<SweepRow> rows;
  for (int k : ks)
    for (int hidden : hidden_sizes) {
      ExperimentConfig cell = config;
      cell.k_max = k;
      cell.hidden = hidden;
      cell.validate();
      std::vector<double> errors;
      SweepRow row;
      row.iterations = k;
      row.hidden = hidden;
      for (int rep = 0; rep < cell.repetitions; ++rep) {
        const RepetitionResult r = run_repetition(cell, rep, &data);
        errors.push_back(*r.test_error);
        if (rep == 0) {
          row.scalars_per_iteration = r.trace.empty() ? 0 : r.trace.front().comm_scalars;
          row.total_scalars = r.comm_scalars;
          row.comm_ratio = comm_ratio_vs_dnsp(k, hidden, cell.latent, double(r.input_dim));
        }
      }
      row.mean_test_error = mean_error(errors);
      rows.push_back(row);
    }
  return rows;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  ExperimentConfig config;
  CLI::App app("Multi-task ELM experiments: centralized and decentralized solvers", "dmtl_elm");
  app.set_config("--config", "", "flat key = value file; flags override it");
  app.allow_config_extras(CLI::config_extras_mode::error);
  bind_options(app, config);
  app.require_subcommand(1);
  app.fallthrough();
  auto* run = app.add_subcommand("run", "run an experiment and write its result files");
  auto* sweep = app.add_subcommand("sweep", "communication sweep over k and L");
  auto* check = app.add_subcommand("validate", "validate the config and print the condition report");
  std::vector<int> ks{25, 50, 100};
  std::vector<int> hidden_sizes{100, 150, 200, 250, 300};
  sweep->add_option("--ks", ks, "iteration budgets")->delimiter(',');
  sweep->add_option("--hidden_sizes", hidden_sizes, "hidden layer sizes")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : 2;
  }

  if (*run) return run_experiment(config, out, err);

  try {
    if (*check) {
      config.validate();
      out << "configuration ok\n";
      if (config.decentralized()) {
        const ConditionReport report = condition_report(config);
        out << report.to_string();
      }
      return 0;
    }
    if (*sweep) {
      const auto rows = comm_sweep(config, ks, hidden_sizes);
      std::filesystem::create_directories(config.output_dir);
      std::ofstream file(std::filesystem::path(config.output_dir) / "sweep.csv");
      const std::string header =
          "k,hidden,comm_ratio,scalars_per_iteration,total_scalars,mean_test_error\n";
      file << header;
      out << header;
      for (const auto& r : rows) {
        std::ostringstream line;
        line << r.iterations << ',' << r.hidden << ',' << format_number(r.comm_ratio) << ','
             << r.scalars_per_iteration << ',' << r.total_scalars << ','
             << format_number(r.mean_test_error) << '\n';
        file << line.str();
        out << line.str();
      }
      return 0;
    }
  } catch (const ConfigError& e) {
    err << "invalid configuration: " << e.what() << "\n";
    return 2;
  } catch (const DivergenceError& e) {
    err << "diverged: " << e.what() << "\n";
    return 3;
  } catch (const SingularityError& e) {
    err << "diverged: " << e.what() << "\n";
    return 3;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}

}  // namespace dmtl
