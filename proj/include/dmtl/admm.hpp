#pragma once

// Decentralized multi-task ELM over a simulated agent network.
//
// Each agent t keeps a private task (H_t, T_t), a local copy U_t of the
// shared basis and its own coefficients A_t. One iteration runs
//
//   1. every agent computes U_t^{k+1} from its own state, its neighbors'
//      U_i^k and the multipliers on its incident edges (Jacobian phase),
//      then broadcasts U_t^{k+1} to its neighbors;
//   2. a dual step γ_i is chosen per edge and the multipliers move;
//   3. every agent updates A_t from U_t^{k+1} (Gauss-Seidel within the agent).
//
// The exact variant solves the U-subproblem in closed form through a
// Kronecker system; the first-order variant linearizes the data term so the
// U-step becomes a diagonal scaling.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dmtl/central.hpp"
#include "dmtl/errors.hpp"
#include "dmtl/graph.hpp"
#include "dmtl/numerics.hpp"
#include "dmtl/types.hpp"

namespace dmtl {

enum class ProxMode {
  ProxLinear,  // P_t = τ_t I − ρ C_tᵀC_t, Q_t = ζ_t I
  Standard,    // P_t, Q_t positive diagonals (default τ_t I, ζ_t I)
};

enum class Variant { Exact, FirstOrder };

template <typename Scalar>
struct AdmmParams {
  Scalar rho = 1;
  Scalar delta = 10;
  Scalar mu1 = 1;
  Scalar mu2 = 1;
  std::vector<Scalar> tau;   // one per agent
  std::vector<Scalar> zeta;  // one per agent
  /// Strong-convexity constant for the condition checks; unset means
  /// min(μ1/m, μ2).
  std::optional<Scalar> sigma;
  Scalar gamma_cap = 1;
  ProxMode prox_mode = ProxMode::ProxLinear;
  /// Standard-mode diagonals; an empty list means τ_t I and ζ_t I.
  std::vector<Vector<Scalar>> p_diag;
  std::vector<Vector<Scalar>> q_diag;
  Scalar divergence_cap = Scalar(1e12);

  Scalar sigma_value(int agents) const {
    return sigma ? *sigma : std::min(mu1 / Scalar(agents), mu2);
  }

  /// Diagonal of P_t.
  Vector<Scalar> proximal_u(int t, int degree, Index hidden) const {
    if (prox_mode == ProxMode::ProxLinear)
      return Vector<Scalar>::Constant(hidden, tau.at(t) - rho * Scalar(degree));
    if (!p_diag.empty()) return p_diag.at(t);
    return Vector<Scalar>::Constant(hidden, tau.at(t));
  }

  /// Diagonal of Q_t.
  Vector<Scalar> proximal_a(int t, Index latent) const {
    if (prox_mode == ProxMode::Standard && !q_diag.empty()) return q_diag.at(t);
    return Vector<Scalar>::Constant(latent, zeta.at(t));
  }

  /// Positivity and shape checks. Throws UsageError naming the parameter.
  void validate(const Topology& topo, Index hidden, Index latent) const {
    const int m = topo.agents();
    if (!(rho > 0)) throw UsageError("rho must be > 0");
    if (!(delta > 0)) throw UsageError("delta must be > 0");
    if (!(mu1 > 0)) throw UsageError("mu1 must be > 0");
    if (!(mu2 > 0)) throw UsageError("mu2 must be > 0");
    if (!(gamma_cap > 0)) throw UsageError("gamma_cap must be > 0");
    if (sigma && !(*sigma > 0)) throw UsageError("sigma must be > 0");
    if (int(tau.size()) != m || int(zeta.size()) != m)
      throw UsageError("tau and zeta need one entry per agent");
    for (int t = 0; t < m; ++t) {
      if (!(tau[t] >= 0)) throw UsageError("tau[" + std::to_string(t + 1) + "] must be >= 0");
      if (!(zeta[t] >= 0)) throw UsageError("zeta[" + std::to_string(t + 1) + "] must be >= 0");
      if (prox_mode == ProxMode::ProxLinear && tau[t] < rho * Scalar(topo.degree(t)))
        throw UsageError("tau[" + std::to_string(t + 1) + "] = " + std::to_string(double(tau[t])) +
                         " < rho*d_t makes P_t indefinite in prox-linear mode");
    }
    if (prox_mode == ProxMode::Standard) {
      if (!p_diag.empty()) {
        if (int(p_diag.size()) != m) throw UsageError("p_diag needs one entry per agent");
        for (const auto& p : p_diag)
          if (p.size() != hidden || !(p.array() > 0).all())
            throw UsageError("p_diag entries must be positive vectors of length L");
      }
      if (!q_diag.empty()) {
        if (int(q_diag.size()) != m) throw UsageError("q_diag needs one entry per agent");
        for (const auto& q : q_diag)
          if (q.size() != latent || !(q.array() > 0).all())
            throw UsageError("q_diag entries must be positive vectors of length r");
      }
    }
  }
};

// ---------------------------------------------------------------------------
// Local closed-form updates. Each takes only agent-local quantities plus the
// aggregated coupling term ρ C_tᵀ Σ_{i≠t} C_i U_i^k + C_tᵀλ^k.

/// ρ C_tᵀ Σ_{i≠t} C_i U_i + C_tᵀ λ from the neighbor blocks and incident
/// multiplier rows. `neighbor` maps an agent index to its U block.
template <typename Scalar, typename NeighborLookup>
Matrix<Scalar> coupling_term(const ConstraintSet& cs, int t, NeighborLookup&& neighbor,
                             const EdgeStack<Scalar>& lambda, Scalar rho) {
  Matrix<Scalar> out;
  for (const auto& inc : cs.incidence(t)) {
    const int other = cs.positive_end(inc.edge) == t ? cs.negative_end(inc.edge)
                                                      : cs.positive_end(inc.edge);
    // Edge block of C_other U_other carries −sign_t, so C_tᵀ of it is −U_other.
    const Matrix<Scalar>& u_other = neighbor(other);
    Matrix<Scalar> contrib = Scalar(inc.sign) * lambda.at(inc.edge) - rho * u_other;
    if (out.size() == 0)
      out = std::move(contrib);
    else
      out += contrib;
  }
  return out;
}

/// Exact U-step: solves
///   H_tᵀH_t U A A ᵀ + (μ1/m I + ρ d_t I + P_t) U = H_tᵀT_t Aᵀ − coupling + P_t U_t^k.
/// When P_t is a multiple of I and `spectral` (built from H_tᵀH_t) is given,
/// the cached eigendecomposition is used instead of a dense factorization.
template <typename Scalar>
Matrix<Scalar> update_U_agent(const Matrix<Scalar>& gram, const Matrix<Scalar>& cross,
                              const Matrix<Scalar>& basis, const Matrix<Scalar>& coeffs,
                              const Matrix<Scalar>& coupling, const Vector<Scalar>& p_diag,
                              Scalar mu1_over_m, Scalar rho_degree,
                              const SpectralKroneckerSolver<Scalar>* spectral = nullptr) {
  const Index hidden = gram.rows();
  Matrix<Scalar> rhs = cross * coeffs.transpose() + p_diag.asDiagonal() * basis;
  if (coupling.size() != 0) rhs -= coupling;
  const Matrix<Scalar> right = coeffs * coeffs.transpose();
  const Vector<Scalar> shift_diag = p_diag.array() + mu1_over_m + rho_degree;
  const bool uniform = (shift_diag.array() == shift_diag(0)).all();
  if (spectral && uniform && spectral->left_dim() == hidden)
    return spectral->solve(right, shift_diag(0), rhs);
  KroneckerSystem<Scalar> sys;
  sys.terms.push_back({right, gram});
  sys.shift = shift_diag.asDiagonal();
  return kron_vec_solve(sys, rhs);
}

/// First-order U-step: one scaled gradient step on the data term,
///   U^{k+1} = (ρ d_t I + P_t)⁻¹ (−H_tᵀH_t U A Aᵀ + H_tᵀT_t Aᵀ − μ1/m U − coupling + P_t U).
template <typename Scalar>
Matrix<Scalar> fo_update_U_agent(const Matrix<Scalar>& gram, const Matrix<Scalar>& cross,
                                 const Matrix<Scalar>& basis, const Matrix<Scalar>& coeffs,
                                 const Matrix<Scalar>& coupling, const Vector<Scalar>& p_diag,
                                 Scalar mu1_over_m, Scalar rho_degree) {
  const Vector<Scalar> scale = p_diag.array() + rho_degree;
  if (!(scale.array() > 0).all())
    throw UsageError("fo_update_U_agent: tau must be > 0 for the first-order step");
  Matrix<Scalar> rhs = -(gram * basis * (coeffs * coeffs.transpose())) +
                       cross * coeffs.transpose() - mu1_over_m * basis +
                       p_diag.asDiagonal() * basis;
  if (coupling.size() != 0) rhs -= coupling;
  return scale.cwiseInverse().asDiagonal() * rhs;
}

/// A-step: (UᵀH_tᵀH_tU + Q_t + μ2 I)⁻¹ (UᵀH_tᵀT_t + Q_t A_t^k).
template <typename Scalar>
Matrix<Scalar> update_A_agent(const Matrix<Scalar>& gram, const Matrix<Scalar>& cross,
                              const Matrix<Scalar>& basis, const Matrix<Scalar>& coeffs,
                              const Vector<Scalar>& q_diag, Scalar mu2) {
  Matrix<Scalar> system = basis.transpose() * gram * basis;
  system.diagonal() += q_diag;
  system.diagonal().array() += mu2;
  const Matrix<Scalar> rhs = basis.transpose() * cross + q_diag.asDiagonal() * coeffs;
  return spd_solve(system, rhs);
}

/// Lipschitz constant of U ↦ ∇_U F_t(U, A) at fixed A:
/// ‖H_tᵀH_t‖·‖A Aᵀ‖ + μ1/m.
template <typename Scalar>
Scalar estimate_lipschitz(const Matrix<Scalar>& gram, const Matrix<Scalar>& coeffs, Scalar mu1,
                          int agents) {
  const Matrix<Scalar> right = coeffs * coeffs.transpose();
  return spectral_norm_bound(gram) * spectral_norm_bound(right) + mu1 / Scalar(agents);
}

template <typename Scalar>
struct GammaChoice {
  Scalar gamma = 0;
  bool stalled = false;  // numerator zero, denominator positive
};

/// γ_i = min{cap, δ‖Ĉ_i(U^k − U^{k+1})‖² / ‖Ĉ_iU^{k+1}‖²}.
template <typename Scalar>
GammaChoice<Scalar> select_gamma(Scalar change_sq, Scalar residual_sq, Scalar delta, Scalar cap) {
  if (residual_sq == Scalar(0)) return {cap, false};
  if (change_sq == Scalar(0)) return {Scalar(0), true};
  return {std::min(cap, delta * change_sq / residual_sq), false};
}

/// Multiplier ascent on edge i: λ_i^{k+1} = λ_i^k + ρ γ_i (Ĉ_i U^{k+1}).
///
/// The direction matches the +⟨λ, Σ_t C_tU_t⟩ term of the Lagrangian, so the
/// step raises the Lagrangian by at most ρ γ_i ‖Ĉ_iU^{k+1}‖², which the γ rule
/// bounds by ρ δ ‖Ĉ_i(U^k − U^{k+1})‖².
template <typename Scalar>
EdgeStack<Scalar> update_lambda(const EdgeStack<Scalar>& lambda, const EdgeStack<Scalar>& residual,
                                const std::vector<Scalar>& gamma, Scalar rho) {
  if (lambda.size() != residual.size() || lambda.size() != gamma.size())
    throw UsageError("update_lambda: edge counts differ");
  EdgeStack<Scalar> out = lambda;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += rho * gamma[i] * residual[i];
  return out;
}

template <typename Scalar>
Scalar edge_inner(const EdgeStack<Scalar>& a, const EdgeStack<Scalar>& b) {
  Scalar s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i].array() * b[i].array()).sum();
  return s;
}

template <typename Scalar>
Scalar edge_squared_norm(const EdgeStack<Scalar>& a) {
  Scalar s = 0;
  for (const auto& block : a) s += block.squaredNorm();
  return s;
}

/// F_t(U_t, A_t) = ½‖H_tU_tA_t − T_t‖² + μ1/(2m)‖U_t‖² + μ2/2‖A_t‖².
template <typename Scalar>
Scalar local_objective(const TaskData<Scalar>& task, const Matrix<Scalar>& basis,
                       const Matrix<Scalar>& coeffs, Scalar mu1, Scalar mu2, int agents) {
  return (task.hidden * basis * coeffs - task.targets).squaredNorm() / 2 +
         mu1 / (2 * Scalar(agents)) * basis.squaredNorm() + mu2 / 2 * coeffs.squaredNorm();
}

/// Σ_t F_t + ⟨λ, Σ_t C_tU_t⟩ + ρ/2 ‖Σ_t C_tU_t‖².
template <typename Scalar>
Scalar augmented_lagrangian(const MtlProblem<Scalar>& prob, const std::vector<Matrix<Scalar>>& bases,
                            const std::vector<Matrix<Scalar>>& coeffs,
                            const EdgeStack<Scalar>& lambda, const ConstraintSet& cs, Scalar rho) {
  const int m = prob.task_count();
  Scalar total = 0;
  for (int t = 0; t < m; ++t)
    total += local_objective(prob.tasks[t], bases[t], coeffs[t], prob.mu1, prob.mu2, m);
  const EdgeStack<Scalar> residual = cs.apply_sum(bases);
  return total + edge_inner(lambda, residual) + rho / 2 * edge_squared_norm(residual);
}

/// Communication load of this solver relative to a master-slave subspace
/// pursuit baseline that needs r rounds: 2kL / ((r+1)n).
inline double comm_ratio_vs_dnsp(double iterations, double hidden, double latent, double input_dim) {
  if (!(iterations > 0 && hidden > 0 && latent > 0 && input_dim > 0))
    throw UsageError("comm_ratio_vs_dnsp: all arguments must be positive");
  return 2.0 * iterations * hidden / ((latent + 1.0) * input_dim);
}

// ---------------------------------------------------------------------------
// Sufficient-condition report.

struct ConditionCheck {
  int agent = 0;
  double tau = 0;       // effective τ_t (P_t + ρC_tᵀC_t = τ_t I)
  double required = 0;  // lower bound on τ_t
  double lipschitz = 0; // L_t, first-order variant only
  bool satisfied = false;
};

struct ConditionReport {
  Variant variant = Variant::Exact;
  double sigma = 0;
  std::vector<ConditionCheck> checks;
  bool zeta_nonnegative = true;
  std::vector<std::string> warnings;

  bool satisfied() const { return warnings.empty(); }

  std::string to_string() const {
    std::ostringstream out;
    out << (variant == Variant::Exact ? "exact" : "first-order")
        << " variant, sigma = " << sigma << "\n";
    for (const auto& c : checks)
      out << "  agent " << c.agent + 1 << ": tau = " << c.tau << ", required >= " << c.required
          << (c.satisfied ? "  ok" : "  VIOLATED") << "\n";
    for (const auto& w : warnings) out << "warning: " << w << "\n";
    return out.str();
  }
};

/// τ_t ≥ ρm(δ+½)d_t − σ/2 (exact) or τ_t ≥ L_t + ρm(δ+½)d_t − σ/2 (first
/// order), with ζ_t ≥ 0. Violations become warnings; they are sufficient
/// conditions only.
template <typename Scalar>
ConditionReport check_conditions(const AdmmParams<Scalar>& params, const Topology& topo,
                                 Variant variant, const std::vector<Scalar>& lipschitz = {}) {
  const int m = topo.agents();
  ConditionReport report;
  report.variant = variant;
  report.sigma = double(params.sigma_value(m));
  for (int t = 0; t < m; ++t) {
    const int d = topo.degree(t);
    ConditionCheck c;
    c.agent = t;
    c.tau = double(params.tau.at(t));
    if (params.prox_mode == ProxMode::Standard) {
      const Scalar pmin = params.p_diag.empty() ? params.tau.at(t) : params.p_diag.at(t).minCoeff();
      c.tau = double(pmin + params.rho * Scalar(d));
    }
    c.required = double(params.rho) * m * (double(params.delta) + 0.5) * d - report.sigma / 2;
    if (variant == Variant::FirstOrder) {
      c.lipschitz = lipschitz.empty() ? 0.0 : double(lipschitz.at(t));
      c.required += c.lipschitz;
    }
    c.satisfied = c.tau >= c.required;
    if (!c.satisfied) {
      std::ostringstream w;
      w << "agent " << t + 1 << ": tau = " << c.tau << " below the "
        << (variant == Variant::Exact ? "exact" : "first-order")
        << " descent condition " << c.required << "; monotone descent is not guaranteed";
      report.warnings.push_back(w.str());
    }
    report.checks.push_back(c);
    if (params.zeta.at(t) < 0) report.zeta_nonnegative = false;
  }
  if (!report.zeta_nonnegative) report.warnings.push_back("some zeta_t < 0");
  return report;
}

// ---------------------------------------------------------------------------
// Network simulation.

template <typename Scalar>
struct Message {
  int from = 0;
  int to = 0;
  int iteration = 0;
  Matrix<Scalar> payload;  // sender's U block
};

/// The only cross-agent channel. Carries U blocks between neighbors and
/// counts every scalar sent.
template <typename Scalar>
class MessageBus {
 public:
  using Audit = std::function<void(const Message<Scalar>&)>;

  explicit MessageBus(const Topology& topo) : topo_(topo), inbox_(topo.agents()) {}

  void set_audit(Audit audit) { audit_ = std::move(audit); }

  /// Sends `basis` from agent `from` to each of its neighbors.
  void publish(int from, int iteration, const Matrix<Scalar>& basis) {
    std::lock_guard lock(mutex_);
    if (int(sent_per_iteration_.size()) < iteration + 1) sent_per_iteration_.resize(iteration + 1, 0);
    for (int to : topo_.neighbors(from)) {
      Message<Scalar> msg{from, to, iteration, basis};
      if (audit_) audit_(msg);
      sent_per_iteration_[iteration] += msg.payload.size();
      total_sent_ += msg.payload.size();
      inbox_[to].push_back(std::move(msg));
    }
  }

  std::vector<Message<Scalar>> drain(int to) {
    std::lock_guard lock(mutex_);
    std::vector<Message<Scalar>> out;
    out.swap(inbox_.at(to));
    return out;
  }

  std::int64_t scalars_sent(int iteration) const {
    std::lock_guard lock(mutex_);
    return iteration < int(sent_per_iteration_.size()) ? sent_per_iteration_[iteration] : 0;
  }
  std::int64_t total_scalars_sent() const {
    std::lock_guard lock(mutex_);
    return total_sent_;
  }

 private:
  Topology topo_;
  mutable std::mutex mutex_;
  std::vector<std::vector<Message<Scalar>>> inbox_;
  std::vector<std::int64_t> sent_per_iteration_;
  std::int64_t total_sent_ = 0;
  Audit audit_;
};

/// One agent: owns its task data and local iterates. Nothing outside this
/// class reads H_t or T_t.
template <typename Scalar>
class Agent {
 public:
  Agent(int id, TaskData<Scalar> data, Index latent, const ConstraintSet& cs,
        const AdmmParams<Scalar>& params, int agents)
      : id_(id), cs_(&cs), params_(&params), agents_(agents), data_(std::move(data)) {
    const Index hidden = data_.hidden.cols();
    gram_ = data_.hidden.transpose() * data_.hidden;
    cross_ = data_.hidden.transpose() * data_.targets;
    basis_ = Matrix<Scalar>::Ones(hidden, latent);
    coeffs_ = Matrix<Scalar>::Ones(latent, data_.targets.cols());
    p_diag_ = params.proximal_u(id, cs.degree(id), hidden);
    q_diag_ = params.proximal_a(id, latent);
  }

  int id() const { return id_; }
  const Matrix<Scalar>& basis() const { return basis_; }
  const Matrix<Scalar>& coeffs() const { return coeffs_; }
  const Vector<Scalar>& proximal_u() const { return p_diag_; }
  const Vector<Scalar>& proximal_a() const { return q_diag_; }

  /// Initial neighbor copies are the shared all-ones initialization.
  void seed_neighbors(const Topology& topo) {
    for (int nb : topo.neighbors(id_)) neighbor_basis_[nb] = basis_;
  }

  void receive(const Message<Scalar>& msg) {
    if (msg.to != id_) throw UsageError("Agent::receive: message addressed to another agent");
    neighbor_basis_[msg.from] = msg.payload;
  }

  void enable_spectral_cache() {
    if (params_->prox_mode == ProxMode::ProxLinear || params_->p_diag.empty())
      spectral_ = SpectralKroneckerSolver<Scalar>(gram_);
  }

  /// U_t^{k+1} from U_t^k, A_t^k, cached neighbor U_i^k and λ^k.
  Matrix<Scalar> propose_basis(Variant variant, const EdgeStack<Scalar>& lambda) const {
    const Matrix<Scalar> coupling = coupling_term<Scalar>(
        *cs_, id_, [this](int nb) -> const Matrix<Scalar>& { return neighbor_basis_.at(nb); },
        lambda, params_->rho);
    const Scalar mu1_m = params_->mu1 / Scalar(agents_);
    const Scalar rho_d = params_->rho * Scalar(cs_->degree(id_));
    if (variant == Variant::FirstOrder)
      return fo_update_U_agent(gram_, cross_, basis_, coeffs_, coupling, p_diag_, mu1_m, rho_d);
    return update_U_agent(gram_, cross_, basis_, coeffs_, coupling, p_diag_, mu1_m, rho_d,
                          spectral_ ? &*spectral_ : nullptr);
  }

  void commit_basis(Matrix<Scalar> next) { basis_ = std::move(next); }

  void update_coeffs() {
    coeffs_ = update_A_agent(gram_, cross_, basis_, coeffs_, q_diag_, params_->mu2);
  }

  Scalar local_objective() const {
    return dmtl::local_objective(data_, basis_, coeffs_, params_->mu1, params_->mu2, agents_);
  }

  Scalar lipschitz() const { return estimate_lipschitz(gram_, coeffs_, params_->mu1, agents_); }

 private:
  int id_;
  const ConstraintSet* cs_;
  const AdmmParams<Scalar>* params_;
  int agents_;
  TaskData<Scalar> data_;
  Matrix<Scalar> gram_;   // H_tᵀH_t
  Matrix<Scalar> cross_;  // H_tᵀT_t
  Matrix<Scalar> basis_;
  Matrix<Scalar> coeffs_;
  Vector<Scalar> p_diag_;
  Vector<Scalar> q_diag_;
  std::map<int, Matrix<Scalar>> neighbor_basis_;
  std::optional<SpectralKroneckerSolver<Scalar>> spectral_;
};

template <typename Scalar>
struct DmtlTraceRow {
  int k = 0;
  Scalar objective = 0;        // Σ_t F_t(U_t, A_t)
  Scalar lagrangian = 0;
  Scalar primal_residual = 0;  // ‖Σ_t C_tU_t‖_F
  Scalar dual_residual = 0;    // Σ_t ‖U_t^k − U_t^{k+1}‖_F
  Scalar lambda_change = 0;    // ‖λ^k − λ^{k+1}‖
  Scalar descent_bound = 0;    // Σ_t c_{t,1}‖ΔU_t‖² + c_{t,2}‖ΔA_t‖²
  Scalar max_iterate_norm = 0;
  std::int64_t comm_scalars = 0;
  int stalled_edges = 0;
  double elapsed_seconds = 0;
};

template <typename Scalar>
struct DmtlResult {
  std::vector<Matrix<Scalar>> bases;
  std::vector<Matrix<Scalar>> coeffs;
  EdgeStack<Scalar> lambda;
  std::vector<DmtlTraceRow<Scalar>> trace;
  Scalar initial_objective = 0;
  Scalar initial_lagrangian = 0;
  ConditionReport conditions;
};

template <typename Scalar>
using DmtlObserver = std::function<void(int iteration, const std::vector<Matrix<Scalar>>& bases,
                                        const std::vector<Matrix<Scalar>>& coeffs)>;

/// Synchronous simulation of the decentralized iteration.
template <typename Scalar>
class DmtlSimulator {
 public:
  DmtlSimulator(const MtlProblem<Scalar>& problem, const Topology& topo, AdmmParams<Scalar> params,
                Variant variant)
      : topo_(topo), cs_(topo), params_(std::move(params)), variant_(variant), bus_(topo) {
    problem.validate();
    if (problem.task_count() != topo.agents())
      throw UsageError("run_dmtl: " + std::to_string(problem.task_count()) + " tasks for " +
                       std::to_string(topo.agents()) + " agents");
    params_.mu1 = problem.mu1;
    params_.mu2 = problem.mu2;
    params_.validate(topo, problem.hidden_dim(), problem.latent_dim);
    hidden_ = problem.hidden_dim();
    latent_ = problem.latent_dim;
    const int m = topo.agents();
    agents_.reserve(m);
    for (int t = 0; t < m; ++t) {
      agents_.emplace_back(t, problem.tasks[t], latent_, cs_, params_, m);
      agents_.back().seed_neighbors(topo);
      if (variant == Variant::Exact) agents_.back().enable_spectral_cache();
    }
    lambda_.assign(topo.edge_count(), Matrix<Scalar>::Zero(hidden_, latent_));

    std::vector<Scalar> lipschitz;
    if (variant == Variant::FirstOrder)
      for (const auto& a : agents_) lipschitz.push_back(a.lipschitz());
    conditions_ = check_conditions(params_, topo, variant, lipschitz);
  }

  DmtlSimulator(const DmtlSimulator&) = delete;
  DmtlSimulator& operator=(const DmtlSimulator&) = delete;

  MessageBus<Scalar>& bus() { return bus_; }
  const ConstraintSet& constraints() const { return cs_; }
  const ConditionReport& conditions() const { return conditions_; }
  const AdmmParams<Scalar>& params() const { return params_; }
  int iteration() const { return iteration_; }
  const EdgeStack<Scalar>& lambda() const { return lambda_; }

  std::vector<Matrix<Scalar>> bases() const {
    std::vector<Matrix<Scalar>> out;
    for (const auto& a : agents_) out.push_back(a.basis());
    return out;
  }
  std::vector<Matrix<Scalar>> coeffs() const {
    std::vector<Matrix<Scalar>> out;
    for (const auto& a : agents_) out.push_back(a.coeffs());
    return out;
  }

  Scalar objective() const {
    Scalar total = 0;
    for (const auto& a : agents_) total += a.local_objective();
    return total;
  }

  Scalar lagrangian() const {
    const EdgeStack<Scalar> residual = cs_.apply_sum(bases());
    return objective() + edge_inner(lambda_, residual) +
           params_.rho / 2 * edge_squared_norm(residual);
  }

  /// One full iteration; returns its trace row.
  DmtlTraceRow<Scalar> step() {
    const int m = topo_.agents();
    const int k = iteration_;
    const std::vector<Matrix<Scalar>> old_bases = bases();
    const std::vector<Matrix<Scalar>> old_coeffs = coeffs();

    // Jacobian phase: every proposal reads only iteration-k state.
    std::vector<Matrix<Scalar>> proposals(m);
    for (int t = 0; t < m; ++t) proposals[t] = agents_[t].propose_basis(variant_, lambda_);
    for (int t = 0; t < m; ++t) {
      check_finite(proposals[t], k + 1, t);
      agents_[t].commit_basis(std::move(proposals[t]));
      bus_.publish(t, k + 1, agents_[t].basis());
    }
    for (int t = 0; t < m; ++t)
      for (const auto& msg : bus_.drain(t)) agents_[t].receive(msg);

    // Dual step, one γ per edge shared by both endpoints.
    const std::vector<Matrix<Scalar>> new_bases = bases();
    const EdgeStack<Scalar> residual = cs_.apply_sum(new_bases);
    std::vector<Scalar> gamma(cs_.edge_count());
    int stalled = 0;
    for (int i = 0; i < cs_.edge_count(); ++i) {
      const Scalar change_sq = (cs_.apply_edge(i, old_bases) - residual[i]).squaredNorm();
      const auto choice =
          select_gamma(change_sq, residual[i].squaredNorm(), params_.delta, params_.gamma_cap);
      gamma[i] = choice.gamma;
      stalled += choice.stalled;
    }
    EdgeStack<Scalar> next_lambda = update_lambda(lambda_, residual, gamma, params_.rho);
    Scalar lambda_change_sq = 0;
    for (std::size_t i = 0; i < next_lambda.size(); ++i) {
      lambda_change_sq += (next_lambda[i] - lambda_[i]).squaredNorm();
      check_finite(next_lambda[i], k + 1, -1);
    }
    lambda_ = std::move(next_lambda);

    // Gauss-Seidel within each agent: A uses the fresh U.
    for (int t = 0; t < m; ++t) {
      try {
        agents_[t].update_coeffs();
      } catch (const SingularityError& e) {
        // Only reachable once U_t has blown up numerically.
        throw DivergenceError("divergence at iteration " + std::to_string(k + 1) + ", agent " +
                                  std::to_string(t + 1) + ": " + e.what(),
                              k + 1, t);
      }
      check_finite(agents_[t].coeffs(), k + 1, t);
    }
    iteration_ = k + 1;

    DmtlTraceRow<Scalar> row;
    row.k = iteration_;
    row.objective = objective();
    row.lagrangian = row.objective + edge_inner(lambda_, residual) +
                     params_.rho / 2 * edge_squared_norm(residual);
    row.primal_residual = std::sqrt(edge_squared_norm(residual));
    row.lambda_change = std::sqrt(lambda_change_sq);
    row.comm_scalars = bus_.scalars_sent(iteration_);
    row.stalled_edges = stalled;
    const Scalar sigma = params_.sigma_value(m);
    for (int t = 0; t < m; ++t) {
      const Scalar du = (old_bases[t] - agents_[t].basis()).squaredNorm();
      const Scalar da = (old_coeffs[t] - agents_[t].coeffs()).squaredNorm();
      row.dual_residual += std::sqrt(du);
      const auto& check = conditions_.checks[t];
      const Scalar c1 = Scalar(check.tau - check.required);
      const Scalar c2 = agents_[t].proximal_a().minCoeff() + sigma / 2;
      row.descent_bound += c1 * du + c2 * da;
      row.max_iterate_norm = std::max({row.max_iterate_norm, agents_[t].basis().norm(),
                                       agents_[t].coeffs().norm()});
    }
    row.max_iterate_norm = std::max(row.max_iterate_norm, std::sqrt(edge_squared_norm(lambda_)));
    return row;
  }

  DmtlResult<Scalar> run(int max_iterations, const DmtlObserver<Scalar>& observer = {}) {
    if (max_iterations < 0) throw UsageError("run_dmtl: max_iterations must be >= 0");
    DmtlResult<Scalar> result;
    result.initial_objective = objective();
    result.initial_lagrangian = lagrangian();
    const auto start = std::chrono::steady_clock::now();
    for (int k = 0; k < max_iterations; ++k) {
      auto row = step();
      row.elapsed_seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      result.trace.push_back(row);
      if (observer) observer(iteration_, bases(), coeffs());
    }
    result.bases = bases();
    result.coeffs = coeffs();
    result.lambda = lambda_;
    result.conditions = conditions_;
    return result;
  }

 private:
  void check_finite(const Matrix<Scalar>& m, int iteration, int agent) const {
    if (!m.allFinite() || m.norm() > params_.divergence_cap) {
      std::ostringstream msg;
      msg << "divergence at iteration " << iteration;
      if (agent >= 0)
        msg << ", agent " << agent + 1;
      else
        msg << " in the multipliers";
      msg << " (norm " << m.norm() << ")";
      throw DivergenceError(msg.str(), iteration, agent);
    }
  }

  Topology topo_;
  ConstraintSet cs_;
  AdmmParams<Scalar> params_;
  Variant variant_;
  MessageBus<Scalar> bus_;
  Index hidden_ = 0;
  Index latent_ = 0;
  std::vector<Agent<Scalar>> agents_;
  EdgeStack<Scalar> lambda_;
  ConditionReport conditions_;
  int iteration_ = 0;
};

template <typename Scalar>
DmtlResult<Scalar> run_dmtl(const MtlProblem<Scalar>& problem, const Topology& topo,
                            const AdmmParams<Scalar>& params, Variant variant, int max_iterations,
                            const DmtlObserver<Scalar>& observer = {}) {
  DmtlSimulator<Scalar> sim(problem, topo, params, variant);
  return sim.run(max_iterations, observer);
}

}  // namespace dmtl
