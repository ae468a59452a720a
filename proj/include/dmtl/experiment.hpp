#pragma once

// Experiment driver: builds problems from a flat configuration, runs one of
// the four solvers over several seeded repetitions, and writes traces and
// summary tables.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "dmtl/admm.hpp"
#include "dmtl/data.hpp"

namespace dmtl {

enum class SolverKind { LocalElm, MtlElm, DmtlElm, FoDmtlElm };
enum class DataKind { Synthetic, Dataset, Surrogate };
enum class TauRule { Offset, Constant, Degree, Lipschitz, Theorem };

/// Every key of a config file, with defaults matching the small synthetic
/// convergence study (m=5, L=5, N_t=10, r=2, d=1, μ1=μ2=2).
struct ExperimentConfig {
  std::string solver = "mtl-elm";  // local-elm | mtl-elm | dmtl-elm | fo-dmtl-elm
  std::string data = "synthetic";  // synthetic | dataset | surrogate
  std::string dataset;             // path, when data = dataset

  int agents = 5;      // m
  int hidden = 5;      // L
  int samples = 10;    // N_t (synthetic)
  int latent = 2;      // r
  int outputs = 1;     // d (synthetic; classification fixes d = 3)
  bool normalize = true;

  int train_total = 900;
  int test_total = 450;
  int pca_dims = 0;           // 0 disables PCA unless pca_variance is set
  double pca_variance = 0;

  int surrogate_classes = 10;
  int surrogate_dim = 64;
  int surrogate_rank = 6;
  int surrogate_per_class = 135;
  double surrogate_separation = 1.0;
  double surrogate_spread = 0.6;
  double surrogate_noise = 0.3;

  std::string topology = "ring";  // ring | star | path | custom
  std::string edge_list;          // path, when topology = custom

  double rho = 1;
  double delta = 10;
  double gamma_cap = 1;
  std::string prox_mode = "prox-linear";  // prox-linear | standard
  // offset: τ_t = ρd_t + tau
  // constant: τ_t = tau
  // degree: τ_t = tau·ρd_t
  // lipschitz: τ_t = ρd_t + tau·L_t (L_t only for the first-order variant)
  // theorem: the descent bound for the chosen variant + tau
  std::string tau_rule = "offset";
  double tau = 1;
  double zeta = 1;
  double sigma = 0; // 0 selects min(μ1/m, μ2)

  double mu1 = 2;
  double mu2 = 2;
  double mu_local = 2;

  int k_max = 100;
  double stop_tol = 0;  // MTL-ELM early stop on objective decrease; 0 runs k_max
  std::uint64_t seed = 1;
  int repetitions = 1;
  std::string output_dir = "results";

  SolverKind solver_kind() const;
  DataKind data_kind() const;
  TauRule tau_kind() const;
  ProxMode prox_kind() const;
  bool decentralized() const;
  bool classification() const { return data_kind() != DataKind::Synthetic; }

  /// Rejects the first invalid entry with a ConfigError naming its key.
  void validate() const;
};

/// Reads `key = value` lines ('#' comments) on top of the defaults.
ExperimentConfig parse_config(std::istream& in);
ExperimentConfig load_config(const std::string& path);

/// One row of a per-repetition trace file.
struct TraceRow {
  int k = 0;
  double objective = 0;
  double lagrangian = 0;
  double primal_residual = 0;
  double dual_residual = 0;
  std::int64_t comm_scalars = 0;
  double elapsed_seconds = 0;
};

struct RepetitionResult {
  int repetition = 0;
  std::uint64_t seed = 0;
  Index input_dim = 0;  // n seen by the hidden layer (after PCA)
  int iterations = 0;
  double final_objective = 0;
  std::optional<double> test_error;  // classification only
  std::int64_t comm_scalars = 0;     // total over the run
  double wall_seconds = 0;
  std::vector<TraceRow> trace;
  std::optional<ConditionReport> conditions;
};

struct SummaryStat {
  std::string metric;
  double mean = 0;
  double std = 0;  // sample standard deviation; 0 for one repetition
};

struct ExperimentResult {
  std::vector<RepetitionResult> repetitions;

  /// Mean and std of final objective, iterations, communicated scalars and,
  /// for classification, testing error. Wall time is kept separate.
  std::vector<SummaryStat> summary() const;
  SummaryStat wall_time() const;
};

SummaryStat summarize(const std::string& metric, const std::vector<double>& values);

/// The dataset an experiment draws its task splits from (loaded or generated
/// once per experiment).
LabeledData experiment_dataset(const ExperimentConfig& config);

/// Runs one repetition. `data` is required for classification configs.
RepetitionResult run_repetition(const ExperimentConfig& config, int repetition,
                                const LabeledData* data);

/// Runs every repetition in memory.
ExperimentResult execute(const ExperimentConfig& config);

/// Condition report for the first repetition's problem, without iterating.
ConditionReport condition_report(const ExperimentConfig& config);

/// Writes trace_rep<i>.csv, repetitions.csv, summary.csv, timing.csv and
/// conditions.txt under config.output_dir.
void write_results(const ExperimentConfig& config, const ExperimentResult& result);

/// Validates, executes and writes results. Returns 0 on success, 2 for an
/// invalid configuration or input, 3 when the iteration diverged.
int run_experiment(const ExperimentConfig& config, std::ostream& out, std::ostream& err);

struct SweepRow {
  int iterations = 0;  // k
  int hidden = 0;      // L
  double comm_ratio = 0;
  std::int64_t scalars_per_iteration = 0;
  std::int64_t total_scalars = 0;
  double mean_test_error = 0;
};

/// Communication/accuracy grid over iteration budgets and hidden sizes.
std::vector<SweepRow> comm_sweep(const ExperimentConfig& config, const std::vector<int>& ks,
                                 const std::vector<int>& hidden_sizes);

/// Command-line entry point: subcommands run, sweep, validate.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace dmtl
