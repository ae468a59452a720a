#pragma once

// Centralized multi-task ELM: alternating closed-form updates of the shared
// basis U (L×r) and per-task coefficients A_t (r×d) for
//
//   Σ_t ½‖H_t U A_t − T_t‖² + (μ1/2)‖U‖² + (μ2/2) Σ_t ‖A_t‖².

#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "dmtl/errors.hpp"
#include "dmtl/numerics.hpp"
#include "dmtl/types.hpp"

namespace dmtl {

/// Hidden-layer outputs and targets of one task.
template <typename Scalar>
struct TaskData {
  Matrix<Scalar> hidden;   // H_t, N_t×L
  Matrix<Scalar> targets;  // T_t, N_t×d
};

template <typename Scalar>
struct MtlProblem {
  std::vector<TaskData<Scalar>> tasks;
  Scalar mu1 = 1;
  Scalar mu2 = 1;
  Index latent_dim = 1;  // r

  int task_count() const { return int(tasks.size()); }
  Index hidden_dim() const { return tasks.empty() ? 0 : tasks.front().hidden.cols(); }
  Index output_dim() const { return tasks.empty() ? 0 : tasks.front().targets.cols(); }

  void validate() const {
    if (tasks.empty()) throw UsageError("MtlProblem: no tasks");
    if (!(mu1 > Scalar(0))) throw UsageError("MtlProblem: mu1 must be > 0");
    if (!(mu2 > Scalar(0))) throw UsageError("MtlProblem: mu2 must be > 0");
    if (latent_dim < 1) throw UsageError("MtlProblem: latent dimension r must be >= 1");
    for (std::size_t t = 0; t < tasks.size(); ++t) {
      const auto& task = tasks[t];
      if (task.hidden.cols() != hidden_dim() || task.targets.cols() != output_dim() ||
          task.hidden.rows() != task.targets.rows())
        throw UsageError("MtlProblem: task " + std::to_string(t) + " has inconsistent shape");
      if (!task.hidden.allFinite() || !task.targets.allFinite())
        throw UsageError("MtlProblem: task " + std::to_string(t) + " has non-finite data");
    }
  }
};

template <typename Scalar>
struct MtlSolution {
  Matrix<Scalar> basis;                 // U
  std::vector<Matrix<Scalar>> coeffs;   // A_t
  std::vector<Scalar> objective_trace;  // after each full iteration
  int iterations = 0;
};

template <typename Scalar>
Scalar objective(const MtlProblem<Scalar>& prob, const Matrix<Scalar>& basis,
                 const std::vector<Matrix<Scalar>>& coeffs) {
  if (int(coeffs.size()) != prob.task_count())
    throw UsageError("objective: expected one coefficient block per task");
  Scalar fit = 0, coeff_norm = 0;
  for (int t = 0; t < prob.task_count(); ++t) {
    fit += (prob.tasks[t].hidden * basis * coeffs[t] - prob.tasks[t].targets).squaredNorm();
    coeff_norm += coeffs[t].squaredNorm();
  }
  return fit / 2 + prob.mu1 / 2 * basis.squaredNorm() + prob.mu2 / 2 * coeff_norm;
}

/// U-step: solves Σ_t H_tᵀH_t U A_tA_tᵀ + μ1 U = Σ_t H_tᵀT_t A_tᵀ.
template <typename Scalar>
Matrix<Scalar> update_U_central(const MtlProblem<Scalar>& prob,
                                const std::vector<Matrix<Scalar>>& coeffs) {
  if (int(coeffs.size()) != prob.task_count())
    throw UsageError("update_U_central: expected one coefficient block per task");
  const Index hidden = prob.hidden_dim();
  KroneckerSystem<Scalar> sys;
  sys.shift = Matrix<Scalar>::Identity(hidden, hidden) * prob.mu1;
  Matrix<Scalar> rhs = Matrix<Scalar>::Zero(hidden, prob.latent_dim);
  for (int t = 0; t < prob.task_count(); ++t) {
    const auto& task = prob.tasks[t];
    const Matrix<Scalar>& a = coeffs[t];
    if (a.rows() != prob.latent_dim || a.cols() != prob.output_dim())
      throw UsageError("update_U_central: A_" + std::to_string(t) + " has wrong shape");
    if (!a.allFinite()) throw UsageError("update_U_central: non-finite A_" + std::to_string(t));
    sys.terms.push_back({a * a.transpose(), task.hidden.transpose() * task.hidden});
    rhs.noalias() += task.hidden.transpose() * task.targets * a.transpose();
  }
  return kron_vec_solve(sys, rhs);
}

/// A-step for task t: (UᵀH_tᵀH_tU + μ2 I)⁻¹ UᵀH_tᵀT_t.
template <typename Scalar>
Matrix<Scalar> update_A_central(const MtlProblem<Scalar>& prob, const Matrix<Scalar>& basis,
                                int t) {
  const auto& task = prob.tasks.at(t);
  const Matrix<Scalar> projected = task.hidden * basis;
  Matrix<Scalar> gram = projected.transpose() * projected;
  gram.diagonal().array() += prob.mu2;
  return spd_solve(gram, projected.transpose() * task.targets);
}

template <typename Scalar>
using MtlObserver =
    std::function<void(int iteration, const Matrix<Scalar>&, const std::vector<Matrix<Scalar>>&)>;

/// Alternating optimization from A_t⁰ = all-ones.
///
/// Each iteration updates U, then every A_t. The run stops after `max_iterations`
/// or once an iteration lowers the objective by less than `stop_tol`. For the
/// first iteration the decrease is measured from the objective at (U¹, A⁰).
template <typename Scalar>
MtlSolution<Scalar> solve_mtl_elm(const MtlProblem<Scalar>& prob, int max_iterations,
                                  Scalar stop_tol = Scalar(1e-10),
                                  const MtlObserver<Scalar>& observer = {}) {
  prob.validate();
  if (max_iterations < 1) throw UsageError("solve_mtl_elm: max_iterations must be >= 1");

  MtlSolution<Scalar> sol;
  sol.coeffs.assign(prob.task_count(),
                    Matrix<Scalar>::Ones(prob.latent_dim, prob.output_dim()));
  Scalar previous = std::numeric_limits<Scalar>::quiet_NaN();
  for (int k = 0; k < max_iterations; ++k) {
    sol.basis = update_U_central(prob, sol.coeffs);
    if (k == 0) previous = objective(prob, sol.basis, sol.coeffs);
    for (int t = 0; t < prob.task_count(); ++t)
      sol.coeffs[t] = update_A_central(prob, sol.basis, t);
    const Scalar current = objective(prob, sol.basis, sol.coeffs);
    sol.objective_trace.push_back(current);
    sol.iterations = k + 1;
    if (observer) observer(k + 1, sol.basis, sol.coeffs);
    if (previous - current < stop_tol) break;
    previous = current;
  }
  return sol;
}

}  // namespace dmtl
