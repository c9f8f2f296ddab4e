#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "rkdsc/data.hpp"
#include "rkdsc/search_space.hpp"

namespace rkdsc {

enum class ApproxMode { first_order, unrolled };

struct LrSpec {
  double initial = 0.025;
  double final_ = 1e-4;
};

struct SearchConfig {
  double lambda_j = 0.05;
  double xi = 0.0;
  int k_select = 1;
  int epochs = 50;
  int batch_size = 32;
  LrSpec lr_alpha{0.025, 1e-4};
  LrSpec lr_theta{3e-4, 1e-4};
  double weight_decay_alpha = 1e-5;
  double weight_decay_theta = 1e-4;
  ApproxMode approx_mode = ApproxMode::first_order;
  double lambda_kd = 0.5;  // KD share of L_train; remainder is task CE

  void validate(const std::vector<MixedLayer>& layers) const {
    if (lambda_j < 0) throw std::invalid_argument("lambda_j must be >= 0");
    if (xi < 0) throw std::invalid_argument("xi must be >= 0");
    if (k_select < 1) throw std::invalid_argument("k_select must be >= 1");
    for (const auto& l : layers)
      if (k_select > static_cast<int>(l.candidates.size()))
        throw std::invalid_argument("k_select exceeds layer candidate count");
  }
};

struct DiscreteArchitecture {
  std::vector<std::vector<int>> selected;          // candidate indices per layer
  std::vector<std::vector<std::string>> selected_ids;
  long total_param_count = 0;                      // selected candidates only
  std::uint64_t seed = 0;
  std::string config_digest;
};

// J^(l) = sum_j beta_j * alpha_j; returns (total, per layer).
inline std::pair<double, std::vector<double>> complexity_regularizer(
    const std::vector<MixedLayer>& layers, const ParamStore& store) {
  std::vector<double> per_layer;
  double total = 0.0;
  for (const auto& l : layers) {
    const double j = l.beta.dot(store.at(l.alpha).value.col(0));
    per_layer.push_back(j);
    total += j;
  }
  return {total, per_layer};
}

// dJ^(l)/dalpha = beta, independent of alpha.
inline Eigen::VectorXd regularizer_gradient(const MixedLayer& layer) { return layer.beta; }

inline Var complexity_regularizer_var(Tape& t, const std::vector<Var>& pv,
                                      const std::vector<MixedLayer>& layers) {
  Var total{};
  for (const auto& l : layers) {
    Var beta = t.leaf(l.beta);
    Var j = ad::sum_all(t, ad::cmul(t, beta, pv[l.alpha]));
    total = total.valid() ? ad::add(t, total, j) : j;
  }
  return total;
}

// Supernet plus the search-time task head and frozen teacher features.
struct SearchState {
  Supernet net;
  Linear task_head;  // feature_dim -> num_classes, counted in theta
  std::function<Eigen::MatrixXd(const Eigen::MatrixXd&)> teacher;  // may be null
  Sgd opt_alpha, opt_theta;
  std::vector<int> theta_ids;  // supernet weights + task head

  std::vector<int> all_theta() const { return theta_ids; }
};

inline SearchState make_search_state(const SearchSpaceSpec& spec, int num_classes,
                                     std::function<Eigen::MatrixXd(const Eigen::MatrixXd&)> teacher,
                                     const SearchConfig& cfg, int steps_per_stage,
                                     RngStream& rng) {
  SearchState st;
  st.net = build_supernet(spec, rng);
  st.task_head = Linear::create(st.net.store, "task_head", spec.feature_dim, num_classes, rng);
  st.teacher = std::move(teacher);
  st.theta_ids = st.net.weight_ids;
  st.theta_ids.push_back(st.task_head.w);
  st.theta_ids.push_back(st.task_head.b);
  st.opt_alpha.schedule = {cfg.lr_alpha.initial, cfg.lr_alpha.final_, steps_per_stage};
  st.opt_alpha.weight_decay = cfg.weight_decay_alpha;
  st.opt_theta.schedule = {cfg.lr_theta.initial, cfg.lr_theta.final_, steps_per_stage};
  st.opt_theta.weight_decay = cfg.weight_decay_theta;
  return st;
}

// L_train = lambda_kd * KD-MSE(teacher, features) + (1-lambda_kd) * CE.
inline Var train_loss_var(Tape& t, const std::vector<Var>& pv, const SearchState& st,
                          const Batch& batch, double lambda_kd) {
  Var x = t.leaf(batch.inputs);
  Var feats = st.net.forward(t, pv, x);
  Var logits = st.task_head.forward(t, pv, feats);
  Var ce = ad::cross_entropy_logits(t, logits, batch.labels);
  if (!st.teacher || lambda_kd == 0.0) return ce;
  Var tea = t.leaf(st.teacher(batch.inputs));
  Var kd = ad::mse(t, tea, feats);
  return ad::add(t, ad::smul(t, kd, lambda_kd), ad::smul(t, ce, 1.0 - lambda_kd));
}

inline Var val_loss_var(Tape& t, const std::vector<Var>& pv, const SearchState& st,
                        const Batch& batch) {
  Var x = t.leaf(batch.inputs);
  Var feats = st.net.forward(t, pv, x);
  Var logits = st.task_head.forward(t, pv, feats);
  return ad::cross_entropy_logits(t, logits, batch.labels);
}

inline void check_finite_loss(double v, const char* where) {
  if (!std::isfinite(v))
    throw std::runtime_error(std::string("non-finite loss in ") + where);
}

// One optimizer step on alpha against L_val + lambda_j * sum_l J^(l).
// theta is restored bit-for-bit afterwards (unrolled mode shifts it
// temporarily by xi * grad of L_train).
inline double arch_step(SearchState& st, const Batch& val_batch, const Batch& train_batch,
                        const SearchConfig& cfg) {
  if (val_batch.labels.empty()) throw std::invalid_argument("arch_step: empty val batch");
  std::vector<Eigen::MatrixXd> saved;
  const bool shift = cfg.approx_mode == ApproxMode::unrolled && cfg.xi > 0.0;
  if (shift) {
    if (train_batch.labels.empty())
      throw std::invalid_argument("arch_step: unrolled mode needs a train batch");
    Tape t;
    auto pv = bind_params(t, st.net.store);
    Var loss = train_loss_var(t, pv, st, train_batch, cfg.lambda_kd);
    check_finite_loss(t.val(loss)(0, 0), "arch_step (inner)");
    t.backward(loss);
    for (int id : st.theta_ids) {
      saved.push_back(st.net.store.at(id).value);
      st.net.store.at(id).value -= cfg.xi * t.grad(pv[id]);
    }
  }

  double lval = 0.0;
  {
    Tape t;
    auto pv = bind_params(t, st.net.store);
    Var loss = val_loss_var(t, pv, st, val_batch);
    Var reg = complexity_regularizer_var(t, pv, st.net.layers);
    Var total = ad::add(t, loss, ad::smul(t, reg, cfg.lambda_j));
    lval = t.val(total)(0, 0);
    check_finite_loss(lval, "arch_step");
    t.backward(total);
    // only alpha grads are applied
    for (int id : st.net.alpha_ids) st.net.store.at(id).grad += t.grad(pv[id]);
  }
  st.opt_alpha.step(st.net.store, st.net.alpha_ids);

  if (shift) {
    std::size_t i = 0;
    for (int id : st.theta_ids) st.net.store.at(id).value = saved[i++];
  }
  return lval;
}

// One optimizer step on theta against L_train; alpha untouched.
inline double weight_step(SearchState& st, const Batch& train_batch, const SearchConfig& cfg) {
  if (train_batch.labels.empty()) throw std::invalid_argument("weight_step: empty train batch");
  Tape t;
  auto pv = bind_params(t, st.net.store);
  Var loss = train_loss_var(t, pv, st, train_batch, cfg.lambda_kd);
  const double v = t.val(loss)(0, 0);
  check_finite_loss(v, "weight_step");
  t.backward(loss);
  for (int id : st.theta_ids) st.net.store.at(id).grad += t.grad(pv[id]);
  st.opt_theta.step(st.net.store, st.theta_ids);
  return v;
}

// Top-k by m_j = alpha_j * (1 - beta_j); exact ties break to the lower index.
inline DiscreteArchitecture derive_architecture(const std::vector<MixedLayer>& layers,
                                                const ParamStore& store, int k_select) {
  DiscreteArchitecture arch;
  for (const auto& l : layers) {
    const int n = static_cast<int>(l.candidates.size());
    if (k_select > n) throw std::invalid_argument("k_select exceeds candidate count");
    const Eigen::VectorXd alpha = store.at(l.alpha).value.col(0);
    std::vector<int> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) {
      const double ma = alpha(a) * (1.0 - l.beta(a));
      const double mb = alpha(b) * (1.0 - l.beta(b));
      if (ma != mb) return ma > mb;
      return a < b;
    });
    std::vector<int> chosen(idx.begin(), idx.begin() + k_select);
    std::sort(chosen.begin(), chosen.end());
    std::vector<std::string> ids;
    for (int j : chosen) {
      ids.push_back(l.candidates[static_cast<std::size_t>(j)].id);
      arch.total_param_count += l.candidates[static_cast<std::size_t>(j)].param_count;
    }
    arch.selected.push_back(std::move(chosen));
    arch.selected_ids.push_back(std::move(ids));
  }
  return arch;
}

struct SearchLogRow {
  int epoch = 0;
  double l_val = 0.0;
  double sum_j = 0.0;
  std::vector<int> per_layer_argmax;
  std::vector<Eigen::VectorXd> alpha_snapshot;
};

struct SearchResult {
  DiscreteArchitecture arch;
  std::vector<SearchLogRow> log;
};

inline std::vector<int> alpha_argmax(const std::vector<MixedLayer>& layers,
                                     const ParamStore& store) {
  std::vector<int> out;
  for (const auto& l : layers) {
    Eigen::Index j = 0;
    store.at(l.alpha).value.col(0).maxCoeff(&j);
    out.push_back(static_cast<int>(j));
  }
  return out;
}

// Alternating search loop: per batch pair, one arch step
// on validation data then one weight step on training data.
inline SearchResult search(SearchState& st, const Splits& data, const SearchConfig& cfg,
                           std::uint64_t seed) {
  cfg.validate(st.net.layers);
  if (data.train.size() == 0 || data.val.size() == 0)
    throw std::invalid_argument("search: empty train or val split");

  SearchResult result;
  RngStream order_rng = derive_stream(seed, 0x08DE8);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto train_order = shuffled_order(data.train.size(), order_rng);
    auto val_order = shuffled_order(data.val.size(), order_rng);
    const std::size_t steps = (train_order.size() + cfg.batch_size - 1) / cfg.batch_size;
    double lval_sum = 0.0;
    int lval_n = 0;
    for (std::size_t s = 0; s < steps; ++s) {
      Batch tb = take_batch(data.train, train_order,
                            s * static_cast<std::size_t>(cfg.batch_size),
                            static_cast<std::size_t>(cfg.batch_size));
      const std::size_t voff =
          (s * static_cast<std::size_t>(cfg.batch_size)) % val_order.size();
      Batch vb = take_batch(data.val, val_order, voff,
                            static_cast<std::size_t>(cfg.batch_size));
      lval_sum += arch_step(st, vb, tb, cfg);
      weight_step(st, tb, cfg);
      ++lval_n;
    }
    SearchLogRow row;
    row.epoch = epoch;
    row.l_val = lval_n ? lval_sum / lval_n : 0.0;
    row.sum_j = complexity_regularizer(st.net.layers, st.net.store).first;
    row.per_layer_argmax = alpha_argmax(st.net.layers, st.net.store);
    for (int id : st.net.alpha_ids)
      row.alpha_snapshot.push_back(st.net.store.at(id).value.col(0));
    result.log.push_back(std::move(row));
  }
  result.arch = derive_architecture(st.net.layers, st.net.store, cfg.k_select);
  result.arch.seed = seed;
  return result;
}

// The discrete network a search result denotes: stem -> selected candidate
// sums with residuals -> head, freshly initialized.
struct DiscreteNet {
  Linear stem;
  std::vector<std::vector<CandidateOp>> layer_ops;
  Linear head;
  std::vector<int> param_ids;
  int input_dim = 0, feature_dim = 0;
  long flops_ = 0;

  Var forward(Tape& t, const std::vector<Var>& pv, Var x) const {
    Var h = ad::relu(t, stem.forward(t, pv, x));
    for (const auto& ops : layer_ops) {
      Var y{};
      for (const auto& op : ops) {
        Var o = op.forward(t, pv, h);
        y = y.valid() ? ad::add(t, y, o) : o;
      }
      if (y.valid()) h = ad::add(t, h, y);
    }
    return head.forward(t, pv, h);
  }
  long flops() const { return flops_; }
};

inline DiscreteNet build_discrete_net(ParamStore& store, const SearchSpaceSpec& spec,
                                      const DiscreteArchitecture& arch, RngStream& rng) {
  if (arch.selected.size() != spec.layers.size())
    throw std::invalid_argument("architecture does not match search space");
  DiscreteNet net;
  net.input_dim = spec.input_dim;
  net.feature_dim = spec.feature_dim;
  net.stem = Linear::create(store, "enc.stem", spec.input_dim, spec.width, rng);
  net.param_ids.push_back(net.stem.w);
  net.param_ids.push_back(net.stem.b);
  net.flops_ += net.stem.flops() + spec.width;
  for (std::size_t l = 0; l < spec.layers.size(); ++l) {
    std::vector<CandidateOp> ops;
    for (int j : arch.selected[l]) {
      const CandidateSpec& cs = spec.layers[l].candidates.at(static_cast<std::size_t>(j));
      std::string name = "enc.layer" + std::to_string(l) + ".op" + std::to_string(j);
      CandidateOp op = build_candidate(store, name, cs, spec.width, rng);
      for (int id : op.params) net.param_ids.push_back(id);
      net.flops_ += op.flops;
      ops.push_back(std::move(op));
    }
    net.layer_ops.push_back(std::move(ops));
  }
  net.head = Linear::create(store, "enc.head", spec.width, spec.feature_dim, rng);
  net.param_ids.push_back(net.head.w);
  net.param_ids.push_back(net.head.b);
  net.flops_ += net.head.flops();
  return net;
}

}  // namespace rkdsc
