#include <doctest.h>

#include <random>
#include <sstream>

#include "dmtl/graph.hpp"
#include "test_util.hpp"

using namespace dmtl;
using testutil::dense_C;
using testutil::random_matrix;
using testutil::stack;

namespace {

std::vector<Topology> sample_topologies() {
  return {build_topology(TopologyKind::Ring, 5), build_topology(TopologyKind::Star, 4),
          build_topology(TopologyKind::Path, 3), build_topology(TopologyKind::Ring, 2),
          build_topology(TopologyKind::Custom, 4, {{0, 1}, {1, 2}, {2, 0}, {2, 3}})};
}

}  // namespace

TEST_CASE("build_topology degrees and edges") {
  const auto star = build_topology(TopologyKind::Star, 4);
  CHECK(star.degrees() == std::vector<int>{3, 1, 1, 1});

  const auto path = build_topology(TopologyKind::Path, 3);
  CHECK(path.edges() == std::vector<Edge>{{0, 1}, {1, 2}});
  CHECK(path.degrees() == std::vector<int>{1, 2, 1});

  const auto ring = build_topology(TopologyKind::Ring, 5);
  CHECK(ring.edge_count() == 5);
  for (int d : ring.degrees()) CHECK(d == 2);

  CHECK(build_topology(TopologyKind::Ring, 1).edge_count() == 0);
  CHECK(parse_topology_kind("star") == TopologyKind::Star);
  CHECK_THROWS_AS(parse_topology_kind("mesh"), UsageError);
}

TEST_CASE("malformed graphs are rejected") {
  try {
    build_topology(TopologyKind::Custom, 4, {{0, 1}, {2, 3}});
    FAIL("expected UsageError");
  } catch (const UsageError& e) {
    CHECK(std::string(e.what()).find("agent 3") != std::string::npos);
  }
  CHECK_THROWS_AS(Topology(3, {{0, 0}, {1, 2}}), UsageError);
  CHECK_THROWS_AS(Topology(3, {{0, 1}, {1, 0}, {1, 2}}), UsageError);
  CHECK_THROWS_AS(Topology(2, {{0, 2}}), UsageError);
  CHECK_THROWS_AS(Topology(0, {}), UsageError);
}

TEST_CASE("read_edge_list") {
  std::istringstream in("# triangle plus tail\n1 2\n2 3\n\n3 1  # closing edge\n3 4\n");
  const auto topo = read_edge_list(in);
  CHECK(topo.agents() == 4);
  CHECK(topo.degrees() == std::vector<int>{2, 2, 3, 1});

  std::istringstream bad("1 2 3\n");
  CHECK_THROWS_AS(read_edge_list(bad), ParseError);
  std::istringstream zero("0 1\n");
  CHECK_THROWS_AS(read_edge_list(zero), ParseError);
  std::istringstream isolated("1 2\n");
  CHECK_THROWS_AS(read_edge_list(isolated, 3), UsageError);
}

TEST_CASE("constraint set on path(3)") {
  const auto cs = build_constraints(build_topology(TopologyKind::Path, 3));
  const Matrix<double> eye = Matrix<double>::Identity(2, 2);
  const Matrix<double> zero = Matrix<double>::Zero(2, 2);

  for (const auto& block : cs.apply_sum<double>({eye, eye, eye})) CHECK(block.norm() == 0.0);

  const auto r = cs.apply_sum<double>({eye, zero, zero});
  CHECK(r[0] == eye);
  CHECK(r[1] == zero);

  std::mt19937_64 rng(1);
  const Matrix<double> b1 = random_matrix(2, 3, rng), b2 = random_matrix(2, 3, rng);
  CHECK(cs.apply_Ct_T<double>(1, {b1, b2}) == -b1 + b2);
  CHECK(cs.apply_Ct_T<double>(0, {Matrix<double>(Matrix<double>::Zero(2, 3)),
                                  Matrix<double>(Matrix<double>::Zero(2, 3))})
            .norm() == 0.0);
  CHECK_THROWS_AS(cs.apply_Ct_T<double>(0, {b1}), UsageError);
  CHECK_THROWS_AS(cs.apply_sum<double>({eye, eye}), UsageError);
}

TEST_CASE("structural products agree with dense constraint matrices") {
  std::mt19937_64 rng(4);
  for (const auto& topo : sample_topologies()) {
    const auto cs = build_constraints(topo);
    for (Index hidden : {Index(1), Index(3), Index(4)}) {
      std::vector<Matrix<double>> u;
      for (int t = 0; t < topo.agents(); ++t) u.push_back(random_matrix(hidden, 2, rng));

      Matrix<double> dense_sum = Matrix<double>::Zero(cs.edge_count() * hidden, 2);
      for (int t = 0; t < topo.agents(); ++t) {
        const Matrix<double> c = dense_C(cs, t, hidden);
        const Matrix<double> ctc = c.transpose() * c;
        CHECK(ctc == double(topo.degree(t)) * Matrix<double>::Identity(hidden, hidden));
        const Eigen::SelfAdjointEigenSolver<Matrix<double>> eig(ctc);
        CHECK(eig.eigenvalues().maxCoeff() == doctest::Approx(topo.degree(t)));
        dense_sum += c * u[t];
      }
      const auto structural = cs.apply_sum(u);
      CHECK(stack(structural) == dense_sum);
      for (int i = 0; i < cs.edge_count(); ++i) CHECK(cs.apply_edge(i, u) == structural[i]);

      EdgeStack<double> v;
      for (int i = 0; i < cs.edge_count(); ++i) v.push_back(random_matrix(hidden, 2, rng));
      for (int t = 0; t < topo.agents(); ++t)
        CHECK((cs.apply_Ct_T(t, v) - dense_C(cs, t, hidden).transpose() * stack(v)).norm() < 1e-14);
    }
  }
}

TEST_CASE("constraint residual vanishes exactly at consensus") {
  std::mt19937_64 rng(5);
  for (const auto& topo : sample_topologies()) {
    const auto cs = build_constraints(topo);
    const Matrix<double> common = random_matrix(3, 2, rng);
    std::vector<Matrix<double>> u(topo.agents(), common);
    double total = 0;
    for (const auto& b : cs.apply_sum(u)) total += b.squaredNorm();
    CHECK(total == 0.0);

    for (int t = 0; t < topo.agents(); ++t) {
      auto perturbed = u;
      perturbed[t](0, 0) += 1e-3;
      double norm = 0;
      for (const auto& b : cs.apply_sum(perturbed)) norm += b.squaredNorm();
      CHECK(norm > 0.0);
    }
  }
}

TEST_CASE("flipped orientation only changes signs") {
  const auto topo = build_topology(TopologyKind::Ring, 5);
  const ConstraintSet plain(topo);
  const ConstraintSet flipped(topo, {true, false, true, false, false});
  CHECK(flipped.positive_end(0) == plain.negative_end(0));
  std::mt19937_64 rng(6);
  std::vector<Matrix<double>> u;
  for (int t = 0; t < 5; ++t) u.push_back(random_matrix(2, 2, rng));
  const auto a = plain.apply_sum(u), b = flipped.apply_sum(u);
  CHECK(a[0] == -b[0]);
  CHECK(a[1] == b[1]);
  CHECK(a[2] == -b[2]);
  CHECK_THROWS_AS(ConstraintSet(topo, {true}), UsageError);
}
