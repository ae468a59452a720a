#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "dmtl/central.hpp"
#include "dmtl/data.hpp"
#include "dmtl/elm.hpp"
#include "test_util.hpp"

using namespace dmtl;
using testutil::numeric_gradient;
using testutil::random_matrix;
using testutil::random_problem;

namespace {

double naive_objective(const MtlProblem<double>& prob, const Matrix<double>& u,
                       const std::vector<Matrix<double>>& a) {
  double total = 0;
  for (int t = 0; t < prob.task_count(); ++t) {
    const auto& h = prob.tasks[t].hidden;
    const auto& y = prob.tasks[t].targets;
    for (Index i = 0; i < h.rows(); ++i)
      for (Index c = 0; c < y.cols(); ++c) {
        double pred = 0;
        for (Index l = 0; l < h.cols(); ++l)
          for (Index k = 0; k < u.cols(); ++k) pred += h(i, l) * u(l, k) * a[t](k, c);
        total += 0.5 * (pred - y(i, c)) * (pred - y(i, c));
      }
    for (Index k = 0; k < a[t].size(); ++k) total += prob.mu2 / 2 * a[t](k) * a[t](k);
  }
  for (Index k = 0; k < u.size(); ++k) total += prob.mu1 / 2 * u(k) * u(k);
  return total;
}

}  // namespace

TEST_CASE("objective") {
  std::mt19937_64 rng(1);
  const auto prob = random_problem(3, 4, 6, 2, 2, 0.7, 1.3, rng);

  SUBCASE("zero iterates") {
    double expected = 0;
    for (const auto& t : prob.tasks) expected += 0.5 * t.targets.squaredNorm();
    std::vector<Matrix<double>> a(3, Matrix<double>::Zero(2, 2));
    CHECK(objective(prob, Matrix<double>(Matrix<double>::Zero(4, 2)), a) ==
          doctest::Approx(expected).epsilon(1e-14));
  }
  SUBCASE("perfect fit leaves only the penalties") {
    MtlProblem<double> single;
    single.mu1 = single.mu2 = 1e-12;
    single.latent_dim = 3;
    const Matrix<double> t = random_matrix(3, 2, rng);
    single.tasks.push_back({Matrix<double>::Identity(3, 3), t});
    const double value = objective(single, Matrix<double>(Matrix<double>::Identity(3, 3)), {t});
    CHECK(value == doctest::Approx(0.5 * (3.0 + t.squaredNorm()) * 1e-12).epsilon(1e-10));
  }
  SUBCASE("scalar-loop oracle") {
    for (int trial = 0; trial < 5; ++trial) {
      const Matrix<double> u = random_matrix(4, 2, rng);
      std::vector<Matrix<double>> a;
      for (int t = 0; t < 3; ++t) a.push_back(random_matrix(2, 2, rng));
      const double oracle = naive_objective(prob, u, a);
      CHECK(std::abs(objective(prob, u, a) - oracle) <= 1e-12 * oracle);
    }
  }
  SUBCASE("wrong number of coefficient blocks") {
    CHECK_THROWS_AS(objective(prob, Matrix<double>(Matrix<double>::Zero(4, 2)), {}), UsageError);
  }
}

TEST_CASE("update_U_central") {
  std::mt19937_64 rng(2);

  SUBCASE("zero coefficients give zero basis") {
    const auto prob = random_problem(2, 3, 5, 2, 1, 1.0, 1.0, rng);
    std::vector<Matrix<double>> a(2, Matrix<double>::Zero(2, 1));
    CHECK(update_U_central(prob, a).norm() == 0.0);
  }
  SUBCASE("single task with identity coefficients is a ridge ELM") {
    auto prob = random_problem(1, 4, 9, 2, 2, 0.8, 1.0, rng);
    const Matrix<double> u =
        update_U_central(prob, {Matrix<double>(Matrix<double>::Identity(2, 2))});
    const Matrix<double> beta = solve_local_elm(prob.tasks[0].hidden, prob.tasks[0].targets, 0.8);
    CHECK((u - beta).norm() < 1e-10);
  }
  SUBCASE("stationarity and finite-difference gradient") {
    const auto prob = random_problem(2, 3, 7, 2, 2, 0.5, 0.5, rng);
    std::vector<Matrix<double>> a{random_matrix(2, 2, rng), random_matrix(2, 2, rng)};
    const Matrix<double> u = update_U_central(prob, a);

    Matrix<double> lhs = prob.mu1 * u, rhs = Matrix<double>::Zero(3, 2);
    for (int t = 0; t < 2; ++t) {
      const auto& h = prob.tasks[t].hidden;
      lhs += h.transpose() * h * u * a[t] * a[t].transpose();
      rhs += h.transpose() * prob.tasks[t].targets * a[t].transpose();
    }
    CHECK((lhs - rhs).norm() < 1e-8 * (1 + rhs.norm()));

    const auto grad = numeric_gradient([&](const Matrix<double>& x) { return objective(prob, x, a); }, u);
    CHECK(grad.norm() < 1e-5);
  }
  SUBCASE("non-finite coefficients are rejected") {
    const auto prob = random_problem(1, 3, 4, 1, 1, 1.0, 1.0, rng);
    Matrix<double> a(1, 1);
    a << std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(update_U_central(prob, {a}), UsageError);
  }
}

TEST_CASE("update_A_central") {
  std::mt19937_64 rng(3);
  SUBCASE("zero targets") {
    auto prob = random_problem(2, 3, 5, 2, 1, 1.0, 1.0, rng);
    prob.tasks[1].targets.setZero();
    CHECK(update_A_central(prob, random_matrix(3, 2, rng), 1).norm() == 0.0);
  }
  SUBCASE("interpolation limit") {
    MtlProblem<double> prob;
    prob.mu1 = 1;
    prob.mu2 = 1e-9;
    prob.latent_dim = 3;
    const Matrix<double> t = random_matrix(3, 2, rng);
    prob.tasks.push_back({Matrix<double>::Identity(3, 3), t});
    const Matrix<double> a = update_A_central(prob, Matrix<double>(Matrix<double>::Identity(3, 3)), 0);
    CHECK((a - t).norm() < 1e-6);
  }
  SUBCASE("finite-difference gradient") {
    const auto prob = random_problem(2, 4, 8, 2, 3, 0.4, 0.6, rng);
    const Matrix<double> u = random_matrix(4, 2, rng);
    std::vector<Matrix<double>> a{random_matrix(2, 3, rng), random_matrix(2, 3, rng)};
    a[1] = update_A_central(prob, u, 1);
    const auto grad = numeric_gradient(
        [&](const Matrix<double>& x) {
          auto trial = a;
          trial[1] = x;
          return objective(prob, u, trial);
        },
        a[1]);
    CHECK(grad.norm() < 1e-5);
  }
}

TEST_CASE("solve_mtl_elm") {
  SUBCASE("synthetic five-task problem descends monotonically and converges") {
    const auto prob = make_synthetic<double>({5, 5, 10, 2, 1, 42, true}, 2.0, 2.0);
    const auto sol = solve_mtl_elm(prob, 1000, 0.0);
    for (std::size_t k = 1; k < sol.objective_trace.size(); ++k)
      CHECK(sol.objective_trace[k] <= sol.objective_trace[k - 1] + 1e-10);
    int converged_at = -1;
    for (std::size_t k = 1; k < sol.objective_trace.size(); ++k)
      if (std::abs(sol.objective_trace[k - 1] - sol.objective_trace[k]) <
          1e-8 * std::abs(sol.objective_trace[k])) {
        converged_at = int(k);
        break;
      }
    CHECK(converged_at > 0);
    CHECK(converged_at < 1000);

    // First-order stationarity in every block.
    const auto gu = numeric_gradient(
        [&](const Matrix<double>& x) { return objective(prob, x, sol.coeffs); }, sol.basis);
    CHECK(gu.norm() < 1e-4);
    for (int t = 0; t < prob.task_count(); ++t) {
      const auto ga = numeric_gradient(
          [&](const Matrix<double>& x) {
            auto trial = sol.coeffs;
            trial[t] = x;
            return objective(prob, sol.basis, trial);
          },
          sol.coeffs[t]);
      CHECK(ga.norm() < 1e-4);
    }
  }
  SUBCASE("monotone on random problems") {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 10; ++trial) {
      const auto prob = random_problem(3, 6, 12, 2, 2, 0.3, 0.3, rng);
      const auto sol = solve_mtl_elm(prob, 60, -1.0);
      CHECK(sol.iterations == 60);
      for (std::size_t k = 1; k < sol.objective_trace.size(); ++k)
        CHECK(sol.objective_trace[k] <= sol.objective_trace[k - 1] + 1e-10);
    }
  }
  SUBCASE("infinite tolerance stops after one iteration") {
    std::mt19937_64 rng(5);
    const auto prob = random_problem(2, 3, 5, 1, 1, 1.0, 1.0, rng);
    const auto sol = solve_mtl_elm(prob, 50, std::numeric_limits<double>::infinity());
    CHECK(sol.iterations == 1);
    CHECK(sol.objective_trace.size() == 1);
  }
  SUBCASE("identical tasks fit at least as well as a ridge ELM") {
    std::mt19937_64 rng(6);
    const Matrix<double> h = random_matrix(20, 4, rng, 0, 1);
    const Matrix<double> y = random_matrix(20, 2, rng);
    MtlProblem<double> prob;
    prob.mu1 = 1e-9;
    prob.mu2 = 0.5;
    prob.latent_dim = 2;
    prob.tasks.assign(3, {h, y});
    const auto sol = solve_mtl_elm(prob, 500, 1e-14);
    const Matrix<double> beta = solve_local_elm(h, y, 0.5);
    const double local = 0.5 * (h * beta - y).squaredNorm() + 0.25 * beta.squaredNorm();
    for (int t = 0; t < 3; ++t) {
      const double fit = 0.5 * (h * sol.basis * sol.coeffs[t] - y).squaredNorm();
      CHECK(fit <= local + 1e-6);
    }
  }
  SUBCASE("task permutation permutes coefficients and keeps the subspace") {
    std::mt19937_64 rng(7);
    const auto prob = random_problem(3, 5, 10, 2, 2, 0.5, 0.5, rng);
    auto swapped = prob;
    std::swap(swapped.tasks[0], swapped.tasks[2]);
    // Symmetric all-ones start: rounding decides how the iterates leave it,
    // so compare converged solutions up to the orthogonal gauge U R, RᵀA.
    const auto a = solve_mtl_elm(prob, 1000, -1.0);
    const auto b = solve_mtl_elm(swapped, 1000, -1.0);
    const Matrix<double> qa = Eigen::HouseholderQR<Matrix<double>>(a.basis).householderQ() *
                              Matrix<double>::Identity(5, 2);
    const Matrix<double> qb = Eigen::HouseholderQR<Matrix<double>>(b.basis).householderQ() *
                              Matrix<double>::Identity(5, 2);
    const Vector<double> cosines = Eigen::JacobiSVD<Matrix<double>>(qa.transpose() * qb).singularValues();
    CHECK((Vector<double>::Ones(2) - cosines).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((a.basis * a.coeffs[0] - b.basis * b.coeffs[2]).norm() < 1e-8);
    CHECK((a.basis * a.coeffs[2] - b.basis * b.coeffs[0]).norm() < 1e-8);
    CHECK(std::abs(a.objective_trace.back() - b.objective_trace.back()) < 1e-9);
  }
  SUBCASE("invalid problems") {
    std::mt19937_64 rng(8);
    auto prob = random_problem(2, 3, 4, 1, 1, 1.0, 1.0, rng);
    CHECK_THROWS_AS(solve_mtl_elm(prob, 0), UsageError);
    prob.mu2 = 0;
    CHECK_THROWS_AS(solve_mtl_elm(prob, 5), UsageError);
    prob.mu2 = 1;
    prob.tasks[1].hidden = Matrix<double>::Zero(4, 2);
    CHECK_THROWS_AS(solve_mtl_elm(prob, 5), UsageError);
  }
}
