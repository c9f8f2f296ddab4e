#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "rkdsc/autodiff.hpp"
#include "rkdsc/rng.hpp"
#include "rkdsc/util.hpp"

namespace rkdsc {

using ad::Mat;
using ad::Tape;
using ad::Var;

struct Param {
  std::string name;
  Mat value;
  Mat grad;  // persistent accumulator, zeroed by the optimizer
};

class ParamStore {
 public:
  int add(std::string name, Mat init) {
    Mat g = Mat::Zero(init.rows(), init.cols());
    params_.push_back(Param{std::move(name), std::move(init), std::move(g)});
    return static_cast<int>(params_.size()) - 1;
  }

  Param& at(int id) { return params_.at(id); }
  const Param& at(int id) const { return params_.at(id); }
  int count() const { return static_cast<int>(params_.size()); }

  long scalar_count(const std::vector<int>& ids) const {
    long n = 0;
    for (int id : ids) n += params_.at(id).value.size();
    return n;
  }

  long scalar_count() const {
    long n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

  std::uint64_t digest(const std::vector<int>& ids) const {
    Fnv1a h;
    for (int id : ids) {
      const Param& p = params_.at(id);
      h.update(p.name);
      h.update(p.value.data(), sizeof(double) * p.value.size());
    }
    return h.digest();
  }

  std::vector<Param>& all() { return params_; }
  const std::vector<Param>& all() const { return params_; }

 private:
  std::vector<Param> params_;
};

// One leaf per parameter, aligned with parameter ids.
inline std::vector<Var> bind_params(Tape& t, const ParamStore& store) {
  std::vector<Var> vars;
  vars.reserve(store.count());
  for (int i = 0; i < store.count(); ++i) vars.push_back(t.leaf(store.at(i).value));
  return vars;
}

inline void collect_grads(const Tape& t, const std::vector<Var>& vars,
                          ParamStore& store) {
  for (int i = 0; i < store.count(); ++i)
    store.at(i).grad += t.grad(vars[static_cast<std::size_t>(i)]);
}

inline Mat glorot_uniform(int rows, int cols, RngStream& rng) {
  const double limit = std::sqrt(6.0 / (rows + cols));
  Mat m(rows, cols);
  for (int c = 0; c < cols; ++c)
    for (int r = 0; r < rows; ++r) m(r, c) = uniform_real(rng, -limit, limit);
  return m;
}

struct Linear {
  int w = -1, b = -1;
  int in_dim = 0, out_dim = 0;

  static Linear create(ParamStore& ps, const std::string& name, int in,
                       int out, RngStream& rng) {
    Linear l;
    l.in_dim = in;
    l.out_dim = out;
    l.w = ps.add(name + ".w", glorot_uniform(out, in, rng));
    l.b = ps.add(name + ".b", Mat::Zero(out, 1));
    return l;
  }

  Var forward(Tape& t, const std::vector<Var>& pv, Var x) const {
    return ad::add_colwise(t, ad::matmul(t, pv[w], x), pv[b]);
  }

  std::vector<int> param_ids() const { return {w, b}; }
  long param_count() const { return static_cast<long>(in_dim) * out_dim + out_dim; }
  // forward FLOPs for a single column input (MAC = 2 FLOPs)
  long flops() const { return 2L * in_dim * out_dim + out_dim; }
};

struct CosineSchedule {
  double lr_initial = 1e-2;
  double lr_final = 1e-4;
  int total_steps = 1;

  double at(int step) const {
    if (total_steps <= 1) return lr_initial;
    const double u = std::min(1.0, std::max(0.0, step / double(total_steps - 1)));
    return lr_final +
           0.5 * (lr_initial - lr_final) * (1.0 + std::cos(std::numbers::pi * u));
  }
};

// Plain SGD with cosine-annealed learning rate and decoupled weight decay.
struct Sgd {
  CosineSchedule schedule;
  double weight_decay = 0.0;
  int step_count = 0;

  double current_lr() const { return schedule.at(step_count); }

  void step(ParamStore& store, const std::vector<int>& ids) {
    const double lr = current_lr();
    for (int id : ids) {
      Param& p = store.at(id);
      p.value -= lr * (p.grad + weight_decay * p.value);
      p.grad.setZero();
    }
    ++step_count;
  }
};

}  // namespace rkdsc
