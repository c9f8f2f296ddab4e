#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "rkdsc/rng.hpp"
#include "rkdsc/util.hpp"

namespace rkdsc {

struct Dataset {
  Eigen::MatrixXd inputs;  // one column per sample
  std::vector<int> labels;
  int num_classes = 0;
  std::vector<int> input_shape;  // e.g. {h, w, c}
  std::uint64_t digest = 0;

  Eigen::Index size() const { return inputs.cols(); }
  Eigen::Index dim() const { return inputs.rows(); }

  void compute_digest() {
    Fnv1a h;
    h.update(num_classes);
    for (int d : input_shape) h.update(d);
    h.update(inputs.data(), sizeof(double) * inputs.size());
    h.update(labels.data(), sizeof(int) * labels.size());
    digest = h.digest();
  }
};

struct Batch {
  Eigen::MatrixXd inputs;
  std::vector<int> labels;
};

inline Batch take_batch(const Dataset& ds, const std::vector<int>& order,
                        std::size_t start, std::size_t count) {
  count = std::min(count, order.size() - start);
  Batch b;
  b.inputs.resize(ds.dim(), static_cast<Eigen::Index>(count));
  b.labels.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    b.inputs.col(static_cast<Eigen::Index>(i)) = ds.inputs.col(order[start + i]);
    b.labels[i] = ds.labels[static_cast<std::size_t>(order[start + i])];
  }
  return b;
}

inline std::vector<int> shuffled_order(Eigen::Index n, RngStream& rng) {
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  // Fisher-Yates with explicit draws, deterministic across platforms
  for (std::size_t i = order.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

enum class Difficulty { trivial, easy, medium };

struct SyntheticSpec {
  int num_classes = 4;
  int samples_per_class = 64;
  std::vector<int> input_shape = {8, 8, 1};
  Difficulty difficulty = Difficulty::easy;
};

// Class-conditional procedural images: a deterministic class pattern
// (oriented bar whose position/orientation depend on the class index) plus
// Gaussian texture whose amplitude sets the difficulty.
inline Dataset make_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  if (spec.num_classes <= 0 || spec.samples_per_class <= 0)
    throw std::invalid_argument("make_synthetic: counts must be positive");
  int dim = 1;
  for (int d : spec.input_shape) dim *= d;
  const int h = spec.input_shape.size() >= 2 ? spec.input_shape[0] : dim;
  const int w = spec.input_shape.size() >= 2 ? spec.input_shape[1] : 1;
  const int ch = spec.input_shape.size() >= 3 ? spec.input_shape[2] : 1;

  double noise_amp = 0.5;
  switch (spec.difficulty) {
    case Difficulty::trivial: noise_amp = 0.05; break;
    case Difficulty::easy: noise_amp = 0.35; break;
    case Difficulty::medium: noise_amp = 0.8; break;
  }

  RngStream proto_rng = derive_stream(seed, 0xA11CE);
  // prototypes: per-class spatial pattern, unit RMS
  Eigen::MatrixXd protos(dim, spec.num_classes);
  for (int c = 0; c < spec.num_classes; ++c) {
    Eigen::VectorXd p(dim);
    for (int k = 0; k < ch; ++k)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const double fy = h > 1 ? double(y) / (h - 1) : 0.0;
          const double fx = w > 1 ? double(x) / (w - 1) : 0.0;
          const double angle = 3.14159265358979 * (c + 1) / (spec.num_classes + 1);
          const double s = std::sin(6.0 * (fx * std::cos(angle) + fy * std::sin(angle)) +
                                    0.7 * c + 0.3 * k);
          p(k * h * w + y * w + x) = s;
        }
    // a touch of per-class random structure so prototypes are not pure waves
    for (int i = 0; i < dim; ++i) p(i) += 0.3 * gaussian(proto_rng);
    p /= std::sqrt(p.squaredNorm() / dim);
    protos.col(c) = p;
  }

  RngStream rng = derive_stream(seed, 0xDA7A);
  const int n = spec.num_classes * spec.samples_per_class;
  Dataset ds;
  ds.inputs.resize(dim, n);
  ds.labels.resize(static_cast<std::size_t>(n));
  ds.num_classes = spec.num_classes;
  ds.input_shape = spec.input_shape;
  int col = 0;
  for (int c = 0; c < spec.num_classes; ++c)
    for (int s = 0; s < spec.samples_per_class; ++s) {
      Eigen::VectorXd x = protos.col(c);
      for (int i = 0; i < dim; ++i) x(i) += noise_amp * gaussian(rng);
      ds.inputs.col(col) = x;
      ds.labels[static_cast<std::size_t>(col)] = c;
      ++col;
    }
  ds.compute_digest();
  return ds;
}

// CIFAR-10 in its canonical binary layout (cifar-10-batches-bin).
inline Dataset load_small_corpus(const std::string& name, const std::string& root) {
  if (name != "cifar10")
    throw std::invalid_argument("unknown corpus: " + name + " (supported: cifar10)");
  const int record = 1 + 32 * 32 * 3;
  std::vector<std::string> files = {"data_batch_1.bin", "data_batch_2.bin",
                                    "data_batch_3.bin", "data_batch_4.bin",
                                    "data_batch_5.bin", "test_batch.bin"};
  std::vector<std::vector<unsigned char>> raw;
  std::size_t total = 0;
  for (const auto& f : files) {
    const std::string path = root + "/cifar-10-batches-bin/" + f;
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cifar10 corpus file missing: " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    if (bytes.empty() || bytes.size() % record != 0)
      throw std::runtime_error("cifar10 corpus file corrupt (size not a multiple of " +
                               std::to_string(record) + "): " + path);
    total += bytes.size() / record;
    raw.push_back(std::move(bytes));
  }
  Dataset ds;
  ds.num_classes = 10;
  ds.input_shape = {32, 32, 3};
  ds.inputs.resize(32 * 32 * 3, static_cast<Eigen::Index>(total));
  ds.labels.resize(total);
  Eigen::Index col = 0;
  for (const auto& bytes : raw)
    for (std::size_t off = 0; off < bytes.size(); off += record) {
      const int label = bytes[off];
      if (label < 0 || label > 9)
        throw std::runtime_error("cifar10 corpus corrupt: label out of range");
      ds.labels[static_cast<std::size_t>(col)] = label;
      for (int i = 0; i < record - 1; ++i)
        ds.inputs(i, col) = bytes[off + 1 + static_cast<std::size_t>(i)] / 255.0;
      ++col;
    }
  ds.compute_digest();
  return ds;
}

struct SplitFractions {
  double train = 0.8, val = 0.1, test = 0.1;
};

struct Splits {
  Dataset train, val, test;
};

// Label-stratified, deterministic split.
inline Splits split(const Dataset& ds, const SplitFractions& fr, std::uint64_t seed) {
  if (!(fr.train > 0 && fr.val > 0 && fr.test > 0))
    throw std::invalid_argument("split fractions must be positive");
  if (std::abs(fr.train + fr.val + fr.test - 1.0) > 1e-9)
    throw std::invalid_argument("split fractions must sum to 1");

  std::vector<std::vector<int>> by_class(static_cast<std::size_t>(ds.num_classes));
  for (Eigen::Index i = 0; i < ds.size(); ++i)
    by_class[static_cast<std::size_t>(ds.labels[static_cast<std::size_t>(i)])].push_back(
        static_cast<int>(i));

  RngStream rng = derive_stream(seed, 0x5E117);
  std::vector<int> idx_train, idx_val, idx_test;
  for (auto& cls : by_class) {
    for (std::size_t i = cls.size(); i > 1; --i)
      std::swap(cls[i - 1], cls[static_cast<std::size_t>(rng() % i)]);
    const std::size_t n = cls.size();
    const std::size_t n_train = static_cast<std::size_t>(std::llround(fr.train * n));
    const std::size_t n_val = static_cast<std::size_t>(std::llround(fr.val * n));
    for (std::size_t i = 0; i < n; ++i) {
      if (i < n_train)
        idx_train.push_back(cls[i]);
      else if (i < n_train + n_val)
        idx_val.push_back(cls[i]);
      else
        idx_test.push_back(cls[i]);
    }
  }

  auto gather = [&](const std::vector<int>& idx) {
    Dataset out;
    out.num_classes = ds.num_classes;
    out.input_shape = ds.input_shape;
    out.inputs.resize(ds.dim(), static_cast<Eigen::Index>(idx.size()));
    out.labels.resize(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      out.inputs.col(static_cast<Eigen::Index>(i)) = ds.inputs.col(idx[i]);
      out.labels[i] = ds.labels[static_cast<std::size_t>(idx[i])];
    }
    out.compute_digest();
    return out;
  };
  return Splits{gather(idx_train), gather(idx_val), gather(idx_test)};
}

// Zero-mean unit-variance per input dimension, statistics from the train split.
inline void normalize_with_train_stats(Splits& s) {
  const Eigen::VectorXd mean = s.train.inputs.rowwise().mean();
  Eigen::VectorXd sd(s.train.dim());
  for (Eigen::Index r = 0; r < s.train.dim(); ++r) {
    const Eigen::ArrayXd d = s.train.inputs.row(r).array() - mean(r);
    sd(r) = std::sqrt(d.square().mean());
    if (sd(r) < 1e-12) sd(r) = 1.0;
  }
  for (Dataset* ds : {&s.train, &s.val, &s.test}) {
    ds->inputs.colwise() -= mean;
    ds->inputs.array().colwise() /= sd.array();
    ds->compute_digest();
  }
}

}  // namespace rkdsc
