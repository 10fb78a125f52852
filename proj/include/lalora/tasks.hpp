// Copyright (c) 2026, The lalora Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "lalora/numkit/matrix.hpp"
#include "lalora/numkit/rng.hpp"

namespace lalora {

/// Labelled samples, one feature row per sample.
struct Dataset {
  DenseMatrix features;  // samples x d
  std::vector<int> labels;
  std::size_t n_classes = 0;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return features.cols(); }

  void validate() const {
    if (features.rows() != labels.size()) {
      throw DimensionMismatch("Dataset: feature rows vs labels");
    }
    for (int y : labels) {
      if (y < 0 || static_cast<std::size_t>(y) >= n_classes) {
        throw InvalidArgument(fmt::format("Dataset: label {} outside [0, {})",
                                          y, n_classes));
      }
    }
  }
};

struct SplitDataset {
  Dataset train;
  Dataset eval;
};

// n_classes random unit directions in R^d, one per row.
inline DenseMatrix random_unit_directions(std::size_t n_classes, std::size_t d,
                                          SeededRng& rng) {
  DenseMatrix u = gaussian_fill(n_classes, d, rng, 1.0);
  for (std::size_t c = 0; c < n_classes; ++c) {
    double n = 0.0;
    for (double v : u.row(c)) n += v * v;
    n = std::sqrt(n);
    for (double& v : u.row(c)) v /= n;
  }
  return u;
}

/// Gaussian blobs around separation * centers[c] with identity covariance.
/// Each class contributes its first 80% of samples to train and the rest
/// to eval (at least one of each).
inline SplitDataset gen_blobs_at(const DenseMatrix& centers,
                                 std::size_t per_class, double separation,
                                 SeededRng& rng) {
  if (per_class < 2) throw InvalidArgument("gen_blobs: per_class must be >= 2");
  const std::size_t k = centers.rows();
  const std::size_t d = centers.cols();
  std::size_t n_train = static_cast<std::size_t>(
      std::llround(0.8 * static_cast<double>(per_class)));
  n_train = std::clamp<std::size_t>(n_train, 1, per_class - 1);
  const std::size_t n_eval = per_class - n_train;

  SplitDataset out;
  out.train.features = DenseMatrix(k * n_train, d);
  out.eval.features = DenseMatrix(k * n_eval, d);
  out.train.n_classes = out.eval.n_classes = k;
  // Sample-major interleaving keeps classes mixed in index order.
  std::size_t tr = 0;
  std::size_t ev = 0;
  for (std::size_t i = 0; i < per_class; ++i) {
    for (std::size_t c = 0; c < k; ++c) {
      Dataset& ds = i < n_train ? out.train : out.eval;
      std::size_t& row = i < n_train ? tr : ev;
      for (std::size_t j = 0; j < d; ++j) {
        ds.features(row, j) = separation * centers(c, j) + rng.normal();
      }
      ds.labels.push_back(static_cast<int>(c));
      ++row;
    }
  }
  return out;
}

inline SplitDataset gen_blobs(std::size_t n_classes, std::size_t d,
                              std::size_t per_class, double separation,
                              SeededRng& rng) {
  if (n_classes < 1 || d < 1) throw InvalidArgument("gen_blobs: empty shape");
  const DenseMatrix centers = random_unit_directions(n_classes, d, rng);
  return gen_blobs_at(centers, per_class, separation, rng);
}

struct LossAndGrad {
  double loss = 0.0;
  DenseMatrix grad;
};

struct EvalMetrics {
  double loss = 0.0;
  double accuracy = 0.0;
};

namespace detail {

// Softmax probabilities of logits W x, computed with the max shift.
inline std::vector<double> softmax_probs(const DenseMatrix& w,
                                         std::span<const double> x) {
  std::vector<double> z(w.rows(), 0.0);
  for (std::size_t c = 0; c < w.rows(); ++c) {
    double s = 0.0;
    for (std::size_t j = 0; j < w.cols(); ++j) s += w(c, j) * x[j];
    z[c] = s;
  }
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : z) mx = std::max(mx, v);
  double sum = 0.0;
  for (double& v : z) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (double& v : z) v /= sum;
  return z;
}

inline double nll_from_logits(const DenseMatrix& w, std::span<const double> x,
                              int y) {
  std::vector<double> z(w.rows(), 0.0);
  for (std::size_t c = 0; c < w.rows(); ++c) {
    double s = 0.0;
    for (std::size_t j = 0; j < w.cols(); ++j) s += w(c, j) * x[j];
    z[c] = s;
  }
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : z) mx = std::max(mx, v);
  double sum = 0.0;
  for (double v : z) sum += std::exp(v - mx);
  return mx + std::log(sum) - z[static_cast<std::size_t>(y)];
}

}  // namespace detail

/// Cross-entropy gradient of one sample: (p - e_y) x^T.
inline DenseMatrix softmax_sample_grad(const DenseMatrix& w,
                                       std::span<const double> x, int y) {
  std::vector<double> p = detail::softmax_probs(w, x);
  p[static_cast<std::size_t>(y)] -= 1.0;
  DenseMatrix g(w.rows(), w.cols());
  for (std::size_t c = 0; c < w.rows(); ++c) {
    for (std::size_t j = 0; j < w.cols(); ++j) g(c, j) = p[c] * x[j];
  }
  return g;
}

/// Mean cross-entropy and its gradient over the given sample indices.
inline LossAndGrad softmax_loss_and_grad(const DenseMatrix& w,
                                         const Dataset& data,
                                         std::span<const std::size_t> idx) {
  if (w.cols() != data.dim()) {
    throw DimensionMismatch(fmt::format("softmax: W {} vs d = {}",
                                        w.shape_string(), data.dim()));
  }
  if (idx.empty()) throw InvalidArgument("softmax_loss_and_grad: empty batch");
  LossAndGrad out{0.0, DenseMatrix(w.rows(), w.cols())};
  for (std::size_t i : idx) {
    const auto x = data.features.row(i);
    out.loss += detail::nll_from_logits(w, x, data.labels[i]);
    out.grad += softmax_sample_grad(w, x, data.labels[i]);
  }
  const double inv = 1.0 / static_cast<double>(idx.size());
  out.loss *= inv;
  out.grad = inv * out.grad;
  return out;
}

inline std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  return idx;
}

inline EvalMetrics softmax_evaluate(const DenseMatrix& w, const Dataset& data) {
  EvalMetrics m;
  if (data.size() == 0) return m;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto x = data.features.row(i);
    m.loss += detail::nll_from_logits(w, x, data.labels[i]);
    const auto p = detail::softmax_probs(w, x);
    std::size_t best = 0;
    for (std::size_t c = 1; c < p.size(); ++c) {
      if (p[c] > p[best]) best = c;
    }
    if (static_cast<int>(best) == data.labels[i]) ++correct;
  }
  m.loss /= static_cast<double>(data.size());
  m.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
  return m;
}

/// Full-batch gradient descent from zero; used for the frozen base weight
/// and as a non-private reference trainer.
inline DenseMatrix train_softmax(const Dataset& data, std::size_t steps,
                                 double lr) {
  DenseMatrix w(data.n_classes, data.dim());
  const auto idx = all_indices(data.size());
  for (std::size_t t = 0; t < steps; ++t) {
    axpy(-lr, softmax_loss_and_grad(w, data, idx).grad, w);
  }
  return w;
}

/// Reads a CSV of numeric feature columns followed by an integer label
/// column. A first line that does not parse as numbers is treated as a
/// header. Classes are 0..max(label).
inline Dataset load_csv_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open dataset '" + path + "'");
  std::vector<double> feats;
  std::vector<int> labels;
  std::size_t d = 0;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> cells;
    std::stringstream ss(line);
    std::string cell;
    bool numeric = true;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        cells.push_back(std::stod(cell, &used));
        while (used < cell.size() && std::isspace(static_cast<unsigned char>(cell[used]))) ++used;
        if (used != cell.size()) numeric = false;
      } catch (const std::exception&) {
        numeric = false;
      }
      if (!numeric) break;
    }
    if (!numeric) {
      if (lineno == 1) continue;  // header
      throw ConfigError(fmt::format("{}:{}: non-numeric cell", path, lineno));
    }
    if (cells.size() < 2) {
      throw ConfigError(fmt::format("{}:{}: need features and a label", path, lineno));
    }
    if (d == 0) d = cells.size() - 1;
    if (cells.size() - 1 != d) {
      throw ConfigError(fmt::format("{}:{}: expected {} columns, got {}", path,
                                    lineno, d + 1, cells.size()));
    }
    const double lab = cells.back();
    if (lab < 0 || lab != std::floor(lab)) {
      throw ConfigError(fmt::format("{}:{}: label must be a non-negative integer",
                                    path, lineno));
    }
    labels.push_back(static_cast<int>(lab));
    feats.insert(feats.end(), cells.begin(), cells.end() - 1);
  }
  if (labels.empty()) throw ConfigError("dataset '" + path + "' has no rows");
  Dataset ds;
  ds.features = DenseMatrix::from_data(labels.size(), d, std::move(feats));
  ds.labels = std::move(labels);
  int mx = 0;
  for (int y : ds.labels) mx = std::max(mx, y);
  ds.n_classes = static_cast<std::size_t>(mx) + 1;
  return ds;
}

/// Deterministic 80/20 split of a dataset by shuffled index.
inline SplitDataset split_dataset(const Dataset& all, SeededRng& rng) {
  if (all.size() < 2) throw InvalidArgument("split_dataset: need >= 2 rows");
  const auto order = shuffled(all_indices(all.size()), rng);
  std::size_t n_train = static_cast<std::size_t>(
      std::llround(0.8 * static_cast<double>(all.size())));
  n_train = std::clamp<std::size_t>(n_train, 1, all.size() - 1);
  auto take = [&](std::size_t lo, std::size_t hi) {
    Dataset ds;
    ds.n_classes = all.n_classes;
    ds.features = DenseMatrix(hi - lo, all.dim());
    for (std::size_t i = lo; i < hi; ++i) {
      const auto src = all.features.row(order[i]);
      std::copy(src.begin(), src.end(), ds.features.row(i - lo).begin());
      ds.labels.push_back(all.labels[order[i]]);
    }
    return ds;
  };
  return {take(0, n_train), take(n_train, all.size())};
}

/// Softmax classification head fine-tuned from a frozen base weight.
///
/// This is the task type consumed by the federated simulator. Any type
/// exposing the same members can be used instead.
class ClassificationTask {
 public:
  ClassificationTask(SplitDataset data, DenseMatrix w0)
      : data_(std::move(data)), w0_(std::move(w0)) {
    data_.train.validate();
    data_.eval.validate();
    if (w0_.rows() != data_.train.n_classes || w0_.cols() != data_.train.dim()) {
      throw DimensionMismatch("ClassificationTask: W0 shape vs data");
    }
  }

  const DenseMatrix& base_weight() const { return w0_; }
  const Dataset& train() const { return data_.train; }
  const Dataset& eval() const { return data_.eval; }
  std::size_t train_size() const { return data_.train.size(); }
  const std::vector<int>& train_labels() const { return data_.train.labels; }

  DenseMatrix sample_grad(const DenseMatrix& w, std::size_t i) const {
    return softmax_sample_grad(w, data_.train.features.row(i),
                               data_.train.labels[i]);
  }
  LossAndGrad batch_loss_and_grad(const DenseMatrix& w,
                                  std::span<const std::size_t> idx) const {
    return softmax_loss_and_grad(w, data_.train, idx);
  }
  EvalMetrics evaluate_train(const DenseMatrix& w) const {
    return softmax_evaluate(w, data_.train);
  }
  EvalMetrics evaluate(const DenseMatrix& w) const {
    return softmax_evaluate(w, data_.eval);
  }

 private:
  SplitDataset data_;
  DenseMatrix w0_;
};

struct BlobTaskOptions {
  std::size_t n_classes = 4;
  std::size_t dim = 16;
  std::size_t per_class = 250;
  double separation = 3.0;
  // Fine-tune class centers are the pretraining centers pushed by `shift`
  // along fresh random directions and renormalized.
  double shift = 1.0;
  std::size_t pretrain_per_class = 250;
  std::size_t pretrain_steps = 100;
  double pretrain_lr = 0.5;
};

/// Base weight pretrained on one blob distribution, fine-tuning data drawn
/// from a shifted one.
inline ClassificationTask make_blob_task(const BlobTaskOptions& o,
                                         std::uint64_t seed) {
  SeededRng rng(seed, {0, 0, 0, Purpose::kData});
  const DenseMatrix centers = random_unit_directions(o.n_classes, o.dim, rng);
  const SplitDataset pre =
      gen_blobs_at(centers, o.pretrain_per_class, o.separation, rng);
  const DenseMatrix w0 = train_softmax(pre.train, o.pretrain_steps, o.pretrain_lr);

  const DenseMatrix push = random_unit_directions(o.n_classes, o.dim, rng);
  DenseMatrix shifted = centers;
  axpy(o.shift, push, shifted);
  for (std::size_t c = 0; c < o.n_classes; ++c) {
    double n = 0.0;
    for (double v : shifted.row(c)) n += v * v;
    n = std::sqrt(n);
    if (n == 0.0) throw NumericFailure("make_blob_task: degenerate shift");
    for (double& v : shifted.row(c)) v /= n;
  }
  return ClassificationTask(gen_blobs_at(shifted, o.per_class, o.separation, rng),
                            w0);
}

/// Per-sample loss 1/2 ||W - Y_j||_F^2. Smoothness constant 1; used by
/// the tests as a task with closed-form gradients.
class QuadraticTask {
 public:
  QuadraticTask(DenseMatrix w0, std::vector<DenseMatrix> targets)
      : w0_(std::move(w0)), targets_(std::move(targets)), labels_(targets_.size(), 0) {
    for (const auto& y : targets_) {
      if (!y.same_shape(w0_)) throw DimensionMismatch("QuadraticTask: target shape");
    }
  }

  const DenseMatrix& base_weight() const { return w0_; }
  std::size_t train_size() const { return targets_.size(); }
  const std::vector<int>& train_labels() const { return labels_; }
  const DenseMatrix& target(std::size_t i) const { return targets_[i]; }

  DenseMatrix sample_grad(const DenseMatrix& w, std::size_t i) const {
    return w - targets_[i];
  }
  LossAndGrad batch_loss_and_grad(const DenseMatrix& w,
                                  std::span<const std::size_t> idx) const {
    LossAndGrad out{0.0, DenseMatrix(w.rows(), w.cols())};
    for (std::size_t i : idx) {
      const DenseMatrix d = w - targets_[i];
      out.loss += 0.5 * frobenius_norm_sq(d);
      out.grad += d;
    }
    const double inv = 1.0 / static_cast<double>(idx.size());
    out.loss *= inv;
    out.grad = inv * out.grad;
    return out;
  }
  EvalMetrics evaluate_train(const DenseMatrix& w) const {
    return {batch_loss_and_grad(w, all_indices(train_size())).loss, 0.0};
  }
  EvalMetrics evaluate(const DenseMatrix& w) const { return evaluate_train(w); }

 private:
  DenseMatrix w0_;
  std::vector<DenseMatrix> targets_;
  std::vector<int> labels_;
};

}  // namespace lalora
