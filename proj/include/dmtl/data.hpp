#pragma once

// Dataset I/O, task partitioning, synthetic problem generators and scoring.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "dmtl/central.hpp"
#include "dmtl/elm.hpp"
#include "dmtl/errors.hpp"
#include "dmtl/numerics.hpp"
#include "dmtl/types.hpp"

namespace dmtl {

/// Feature rows with one integer label each.
struct LabeledData {
  Matrix<double> features;  // N×n
  std::vector<int> labels;  // N

  Index size() const { return features.rows(); }
};

/// Comma-delimited rows: features followed by an integer label.
LabeledData parse_dataset(std::istream& in);
LabeledData load_dataset(const std::string& path);

/// Writes rows in the format `parse_dataset` reads. Values are printed in
/// shortest round-trip form, so reading back is exact.
void write_dataset(std::ostream& out, const LabeledData& data);
void write_dataset(const std::string& path, const LabeledData& data);

constexpr int kClassesPerTask = 3;

/// Which classes a task sees and how many samples per task go to each side.
struct ClassificationTaskSpec {
  std::array<int, kClassesPerTask> classes{};
  int train_count = 0;
  int test_count = 0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// One side (train or test) of one task after preprocessing.
struct TaskDataset {
  Matrix<double> inputs;    // N_t×p, PCA-projected when a target was given
  Matrix<double> targets;   // N_t×3 one-hot over `classes`
  std::vector<int> labels;  // local class index in 0..2
  std::array<int, kClassesPerTask> classes{};

  Index size() const { return inputs.rows(); }
};

struct TaskSplit {
  std::vector<TaskDataset> train;
  std::vector<TaskDataset> test;
  std::optional<PcaModel<double>> pca;
};

/// Draws `tasks` specs, each with 3 distinct random classes and the given
/// totals divided evenly over tasks.
std::vector<ClassificationTaskSpec> draw_task_specs(const std::vector<int>& labels, int tasks,
                                                    int train_total, int test_total,
                                                    std::uint64_t seed);

/// Builds train/test sets for explicit task specs. Per task, the counts are
/// split across its classes as evenly as possible (earlier classes get the
/// remainder) and train and test rows never overlap. PCA, when requested, is
/// fitted on the union of all training rows and applied to both sides.
TaskSplit make_tasks(const LabeledData& data, const std::vector<ClassificationTaskSpec>& specs,
                     std::optional<PcaTarget> pca = std::nullopt);

/// Convenience: `draw_task_specs` followed by `make_tasks`.
TaskSplit make_tasks(const LabeledData& data, int tasks, int train_total, int test_total,
                     std::uint64_t seed, std::optional<PcaTarget> pca = std::nullopt);

/// Random regression problem with uniform(0,1) entries.
struct SyntheticSpec {
  int tasks = 5;           // m
  Index hidden = 5;        // L
  Index samples = 10;      // N_t
  Index latent = 2;        // r
  Index outputs = 1;       // d
  std::uint64_t seed = 1;
  bool normalize = true;   // unit-norm columns of the stacked H

  void validate() const {
    if (tasks < 1 || hidden < 1 || samples < 1 || latent < 1 || outputs < 1)
      throw UsageError("SyntheticSpec: all sizes must be >= 1");
  }
};

template <typename Scalar = double>
MtlProblem<Scalar> make_synthetic(const SyntheticSpec& spec, Scalar mu1, Scalar mu2) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  MtlProblem<Scalar> prob;
  prob.mu1 = mu1;
  prob.mu2 = mu2;
  prob.latent_dim = spec.latent;
  prob.tasks.resize(spec.tasks);
  for (auto& task : prob.tasks) {
    task.hidden.resize(spec.samples, spec.hidden);
    for (Index i = 0; i < spec.samples; ++i)
      for (Index l = 0; l < spec.hidden; ++l) task.hidden(i, l) = Scalar(unit(rng));
    task.targets.resize(spec.samples, spec.outputs);
    for (Index i = 0; i < spec.samples; ++i)
      for (Index j = 0; j < spec.outputs; ++j) task.targets(i, j) = Scalar(unit(rng));
  }
  if (spec.normalize) {
    Vector<Scalar> norms = Vector<Scalar>::Zero(spec.hidden);
    for (const auto& task : prob.tasks) norms += task.hidden.colwise().squaredNorm().transpose();
    norms = norms.cwiseSqrt();
    for (auto& task : prob.tasks) task.hidden *= norms.cwiseInverse().asDiagonal();
  }
  return prob;
}

/// Class-conditional Gaussian data whose class means and within-class spread
/// both live in one low-dimensional subspace shared by all classes.
struct LatentClassSpec {
  int classes = 10;
  Index dim = 64;
  Index latent_rank = 6;
  int per_class = 135;
  double separation = 1.0;  // std of class means inside the subspace
  double spread = 0.6;      // within-class std inside the subspace
  double noise = 0.3;       // isotropic std outside the subspace
  std::uint64_t seed = 1;
};

LabeledData make_latent_classes(const LatentClassSpec& spec);

/// argmax_j of the network outputs for each row, ties to the lowest index.
std::vector<int> predict_labels(const Matrix<double>& outputs);

/// Misclassified fraction of `test` under output weights β (L×3).
double classify_and_score(const Matrix<double>& beta, const HiddenLayer<double>& layer,
                          const TaskDataset& test);

/// Misclassified fraction of `test` under the factorized weights U A_t.
double classify_and_score(const Matrix<double>& basis, const Matrix<double>& coeffs,
                          const HiddenLayer<double>& layer, const TaskDataset& test);

}  // namespace dmtl
