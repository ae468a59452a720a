#include "dmtl/data.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <string_view>

namespace dmtl {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(std::string_view field, std::size_t line, std::size_t column) {
  field = trim(field);
  T value{};
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (field.empty() || ec != std::errc() || ptr != field.data() + field.size())
    throw ParseError("field " + std::to_string(column) + " is not a valid " +
                         (std::is_integral_v<T> ? "integer label" : "number") + ": '" +
                         std::string(field) + "'",
                     line);
  return value;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

LabeledData parse_dataset(std::istream& in) {
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  std::string raw;
  std::size_t line = 0;
  std::size_t width = 0;
  while (std::getline(in, raw)) {
    ++line;
    const std::string_view text = trim(raw);
    if (text.empty()) continue;
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
      const auto comma = text.find(',', start);
      fields.push_back(text.substr(start, comma == std::string_view::npos ? comma : comma - start));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (fields.size() < 2) throw ParseError("row needs at least one feature and a label", line);
    if (width == 0) width = fields.size();
    if (fields.size() != width)
      throw ParseError("row has " + std::to_string(fields.size()) + " fields, expected " +
                           std::to_string(width),
                       line);
    std::vector<double> row(width - 1);
    for (std::size_t j = 0; j + 1 < width; ++j) row[j] = parse_number<double>(fields[j], line, j + 1);
    labels.push_back(parse_number<int>(fields.back(), line, width));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError("dataset is empty", line);

  LabeledData data;
  data.features.resize(Index(rows.size()), Index(width - 1));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j + 1 < width; ++j) data.features(Index(i), Index(j)) = rows[i][j];
  data.labels = std::move(labels);
  return data;
}

LabeledData load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open dataset '" + path + "'");
  return parse_dataset(in);
}

void write_dataset(std::ostream& out, const LabeledData& data) {
  if (Index(data.labels.size()) != data.size())
    throw UsageError("write_dataset: label count does not match row count");
  char buf[64];
  for (Index i = 0; i < data.size(); ++i) {
    for (Index j = 0; j < data.features.cols(); ++j) {
      const auto res = std::to_chars(buf, buf + sizeof buf, data.features(i, j));
      out.write(buf, res.ptr - buf);
      out.put(',');
    }
    out << data.labels[std::size_t(i)] << '\n';
  }
}

void write_dataset(const std::string& path, const LabeledData& data) {
  std::ofstream out(path);
  if (!out) throw UsageError("cannot write dataset '" + path + "'");
  write_dataset(out, data);
}

void ClassificationTaskSpec::validate() const {
  if (classes[0] == classes[1] || classes[0] == classes[2] || classes[1] == classes[2])
    throw UsageError("task classes must be distinct");
  if (train_count < 1 || test_count < 1)
    throw UsageError("task train and test counts must be positive");
}

std::vector<ClassificationTaskSpec> draw_task_specs(const std::vector<int>& labels, int tasks,
                                                    int train_total, int test_total,
                                                    std::uint64_t seed) {
  if (tasks < 1) throw UsageError("draw_task_specs: need at least one task");
  if (train_total % tasks != 0 || test_total % tasks != 0)
    throw UsageError("draw_task_specs: train/test totals " + std::to_string(train_total) + "/" +
                     std::to_string(test_total) + " do not divide evenly over " +
                     std::to_string(tasks) + " tasks");
  const std::set<int> distinct(labels.begin(), labels.end());
  if (distinct.size() < std::size_t(kClassesPerTask))
    throw UsageError("draw_task_specs: dataset has fewer than 3 classes");
  std::vector<int> pool(distinct.begin(), distinct.end());

  std::mt19937_64 rng(seed);
  std::vector<ClassificationTaskSpec> specs(tasks);
  for (int t = 0; t < tasks; ++t) {
    std::shuffle(pool.begin(), pool.end(), rng);
    auto& spec = specs[t];
    std::copy_n(pool.begin(), kClassesPerTask, spec.classes.begin());
    spec.train_count = train_total / tasks;
    spec.test_count = test_total / tasks;
    spec.seed = splitmix64(seed + std::uint64_t(t));
    spec.validate();
  }
  return specs;
}

TaskSplit make_tasks(const LabeledData& data, const std::vector<ClassificationTaskSpec>& specs,
                     std::optional<PcaTarget> pca) {
  if (Index(data.labels.size()) != data.size())
    throw UsageError("make_tasks: label count does not match row count");
  if (specs.empty()) throw UsageError("make_tasks: no task specs");
  std::map<int, std::vector<Index>> by_class;
  for (Index i = 0; i < data.size(); ++i) by_class[data.labels[std::size_t(i)]].push_back(i);

  struct Rows {
    std::vector<Index> index;
    std::vector<int> local;
  };
  std::vector<Rows> train_rows(specs.size()), test_rows(specs.size());
  for (std::size_t t = 0; t < specs.size(); ++t) {
    const auto& spec = specs[t];
    spec.validate();
    std::mt19937_64 rng(spec.seed);
    for (int j = 0; j < kClassesPerTask; ++j) {
      const int n_train = spec.train_count / kClassesPerTask + (j < spec.train_count % kClassesPerTask);
      const int n_test = spec.test_count / kClassesPerTask + (j < spec.test_count % kClassesPerTask);
      auto found = by_class.find(spec.classes[j]);
      const std::size_t available = found == by_class.end() ? 0 : found->second.size();
      if (available < std::size_t(n_train + n_test))
        throw UsageError("make_tasks: task " + std::to_string(t + 1) + " needs " +
                         std::to_string(n_train + n_test) + " samples of class " +
                         std::to_string(spec.classes[j]) + ", only " + std::to_string(available) +
                         " available");
      std::vector<Index> pool = found->second;
      std::shuffle(pool.begin(), pool.end(), rng);
      for (int i = 0; i < n_train; ++i) {
        train_rows[t].index.push_back(pool[std::size_t(i)]);
        train_rows[t].local.push_back(j);
      }
      for (int i = 0; i < n_test; ++i) {
        test_rows[t].index.push_back(pool[std::size_t(n_train + i)]);
        test_rows[t].local.push_back(j);
      }
    }
  }

  TaskSplit split;
  if (pca) {
    std::set<Index> pooled;
    for (const auto& rows : train_rows) pooled.insert(rows.index.begin(), rows.index.end());
    Matrix<double> fit_rows(Index(pooled.size()), data.features.cols());
    Index r = 0;
    for (Index i : pooled) fit_rows.row(r++) = data.features.row(i);
    split.pca = pca_reduce(fit_rows, *pca).model;
  }

  auto assemble = [&](const Rows& rows, const ClassificationTaskSpec& spec) {
    TaskDataset ds;
    ds.classes = spec.classes;
    ds.labels = rows.local;
    Matrix<double> raw(Index(rows.index.size()), data.features.cols());
    for (std::size_t i = 0; i < rows.index.size(); ++i) raw.row(Index(i)) = data.features.row(rows.index[i]);
    ds.inputs = split.pca ? split.pca->transform(raw) : raw;
    ds.targets = Matrix<double>::Zero(raw.rows(), kClassesPerTask);
    for (std::size_t i = 0; i < rows.local.size(); ++i) ds.targets(Index(i), rows.local[i]) = 1.0;
    return ds;
  };
  for (std::size_t t = 0; t < specs.size(); ++t) {
    split.train.push_back(assemble(train_rows[t], specs[t]));
    split.test.push_back(assemble(test_rows[t], specs[t]));
  }
  return split;
}

TaskSplit make_tasks(const LabeledData& data, int tasks, int train_total, int test_total,
                     std::uint64_t seed, std::optional<PcaTarget> pca) {
  return make_tasks(data, draw_task_specs(data.labels, tasks, train_total, test_total, seed), pca);
}

LabeledData make_latent_classes(const LatentClassSpec& spec) {
  if (spec.classes < kClassesPerTask || spec.dim < 1 || spec.latent_rank < 1 ||
      spec.latent_rank > spec.dim || spec.per_class < 1)
    throw UsageError("make_latent_classes: invalid sizes");
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto gaussian = [&](Index rows, Index cols) {
    Matrix<double> g(rows, cols);
    for (Index i = 0; i < rows; ++i)
      for (Index j = 0; j < cols; ++j) g(i, j) = gauss(rng);
    return g;
  };

  const Matrix<double> basis =
      Eigen::HouseholderQR<Matrix<double>>(gaussian(spec.dim, spec.latent_rank))
          .householderQ() *
      Matrix<double>::Identity(spec.dim, spec.latent_rank);
  const Matrix<double> means = gaussian(spec.classes, spec.latent_rank) * spec.separation;

  LabeledData data;
  const Index total = Index(spec.classes) * spec.per_class;
  data.features.resize(total, spec.dim);
  data.labels.reserve(std::size_t(total));
  Index row = 0;
  for (int c = 0; c < spec.classes; ++c)
    for (int i = 0; i < spec.per_class; ++i, ++row) {
      const Vector<double> latent =
          means.row(c).transpose() + spec.spread * gaussian(spec.latent_rank, 1);
      data.features.row(row) =
          (basis * latent + spec.noise * gaussian(spec.dim, 1)).transpose();
      data.labels.push_back(c);
    }
  return data;
}

std::vector<int> predict_labels(const Matrix<double>& outputs) {
  std::vector<int> out(std::size_t(outputs.rows()));
  for (Index i = 0; i < outputs.rows(); ++i) {
    Index best = 0;
    for (Index j = 1; j < outputs.cols(); ++j)
      if (outputs(i, j) > outputs(i, best)) best = j;
    out[std::size_t(i)] = int(best);
  }
  return out;
}

namespace {

double error_fraction(const Matrix<double>& outputs, const TaskDataset& test) {
  if (test.size() == 0) throw UsageError("classify_and_score: empty test set");
  const auto predicted = predict_labels(outputs);
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) wrong += predicted[i] != test.labels[i];
  return double(wrong) / double(predicted.size());
}

}  // namespace

double classify_and_score(const Matrix<double>& beta, const HiddenLayer<double>& layer,
                          const TaskDataset& test) {
  return error_fraction(feature_map(layer, test.inputs) * beta, test);
}

double classify_and_score(const Matrix<double>& basis, const Matrix<double>& coeffs,
                          const HiddenLayer<double>& layer, const TaskDataset& test) {
  return error_fraction(feature_map(layer, test.inputs) * (basis * coeffs), test);
}

}  // namespace dmtl
