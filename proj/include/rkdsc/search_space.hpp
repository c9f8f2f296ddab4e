#pragma once

#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "rkdsc/nn.hpp"

namespace rkdsc {

enum class CountNormalization { max, sum, none };

// beta_j = softmax(normalized_count_j / t_beta); larger op -> larger beta.
inline Eigen::VectorXd penalty_factors(const std::vector<long>& param_counts,
                                       double t_beta,
                                       CountNormalization norm = CountNormalization::max) {
  if (param_counts.empty()) throw std::invalid_argument("penalty_factors: no candidates");
  if (!(t_beta > 0.0)) throw std::invalid_argument("penalty_factors: t_beta must be > 0");
  for (long c : param_counts)
    if (c < 0) throw std::invalid_argument("penalty_factors: negative count");
  const std::size_t n = param_counts.size();
  Eigen::ArrayXd counts(n);
  for (std::size_t i = 0; i < n; ++i) counts(i) = static_cast<double>(param_counts[i]);
  double denom = 1.0;
  switch (norm) {
    case CountNormalization::max: denom = std::max(1.0, counts.maxCoeff()); break;
    case CountNormalization::sum: denom = std::max(1.0, counts.sum()); break;
    case CountNormalization::none: denom = 1.0; break;
  }
  Eigen::ArrayXd logits = counts / denom / t_beta;
  logits -= logits.maxCoeff();
  Eigen::ArrayXd e = logits.exp();
  return (e / e.sum()).matrix();
}

// A candidate feature transform with a declared learnable-scalar count.
struct CandidateOp {
  std::string id;
  long param_count = 0;
  std::vector<int> params;  // ids in the owning store
  std::function<Var(Tape&, const std::vector<Var>&, Var)> forward;
  long flops = 0;  // per forward of one column
};

// One residual MLP block: x + V * relu(W x + b) + c. Candidate "stack-k"
// applies k of them in sequence.
inline CandidateOp make_stacked_residual_op(ParamStore& ps, const std::string& name,
                                            int width, int blocks, RngStream& rng) {
  CandidateOp op;
  op.id = name;
  struct Block {
    Linear l1, l2;
  };
  auto blocks_vec = std::make_shared<std::vector<Block>>();
  for (int k = 0; k < blocks; ++k) {
    Block blk;
    blk.l1 = Linear::create(ps, name + ".blk" + std::to_string(k) + ".l1", width, width, rng);
    blk.l2 = Linear::create(ps, name + ".blk" + std::to_string(k) + ".l2", width, width, rng);
    op.params.push_back(blk.l1.w);
    op.params.push_back(blk.l1.b);
    op.params.push_back(blk.l2.w);
    op.params.push_back(blk.l2.b);
    op.param_count += blk.l1.param_count() + blk.l2.param_count();
    op.flops += blk.l1.flops() + blk.l2.flops() + width /* relu */ + width /* residual add */;
    blocks_vec->push_back(blk);
  }
  op.forward = [blocks_vec](Tape& t, const std::vector<Var>& pv, Var x) {
    Var h = x;
    for (const auto& blk : *blocks_vec) {
      Var u = ad::relu(t, blk.l1.forward(t, pv, h));
      h = ad::add(t, h, blk.l2.forward(t, pv, u));
    }
    return h;
  };
  return op;
}

// Test construction: output is identically zero regardless of its (real,
// registered) parameters. Lets param counts differ while all candidates
// compute the same function.
inline CandidateOp make_zero_op(ParamStore& ps, const std::string& name, long dummy_params) {
  CandidateOp op;
  op.id = name;
  op.param_count = dummy_params;
  if (dummy_params > 0)
    op.params.push_back(ps.add(name + ".dummy", Mat::Zero(dummy_params, 1)));
  op.forward = [](Tape& t, const std::vector<Var>&, Var x) {
    return t.make(Mat::Zero(t.val(x).rows(), t.val(x).cols()),
                  [](Tape&, const Mat&) {});
  };
  op.flops = 0;
  return op;
}

struct MixedLayer {
  std::vector<CandidateOp> candidates;
  int alpha = -1;  // param id, one entry per candidate
  double t_alpha = 1.0;
  double t_beta = 2.0;
  Eigen::VectorXd beta;  // precomputed from param counts

  std::vector<long> param_counts() const {
    std::vector<long> c;
    c.reserve(candidates.size());
    for (const auto& op : candidates) c.push_back(op.param_count);
    return c;
  }
};

inline MixedLayer finalize_mixed_layer(ParamStore& ps, const std::string& name,
                                       std::vector<CandidateOp> candidates,
                                       double t_alpha, double t_beta) {
  if (candidates.empty()) throw std::invalid_argument("mixed layer needs >= 1 candidate");
  MixedLayer layer;
  layer.candidates = std::move(candidates);
  layer.t_alpha = t_alpha;
  layer.t_beta = t_beta;
  // alpha initialized to zero: uniform softmax
  layer.alpha = ps.add(name + ".alpha",
                       Mat::Zero(static_cast<Eigen::Index>(layer.candidates.size()), 1));
  layer.beta = penalty_factors(layer.param_counts(), t_beta);
  return layer;
}

inline Eigen::VectorXd mixture_weights(const MixedLayer& layer, const Eigen::VectorXd& alpha) {
  Eigen::ArrayXd logits = alpha.array() / layer.t_alpha;
  logits -= logits.maxCoeff();
  Eigen::ArrayXd e = logits.exp();
  return (e / e.sum()).matrix();
}

// y = sum_j softmax(alpha/T)_j * o_j(x); returns x + y.
inline Var mixed_forward(Tape& t, const std::vector<Var>& pv, const MixedLayer& layer,
                         Var x) {
  Var a = ad::smul(t, pv[layer.alpha], 1.0 / layer.t_alpha);
  Var w = ad::softmax_cols(t, a);
  Var y{};
  for (std::size_t j = 0; j < layer.candidates.size(); ++j) {
    Var oj = layer.candidates[j].forward(t, pv, x);
    Var wj = ad::slice_rows(t, w, static_cast<Eigen::Index>(j), 1);
    Var term = ad::scale_by(t, oj, wj);
    y = y.valid() ? ad::add(t, y, term) : term;
  }
  return ad::add(t, x, y);
}

struct CandidateSpec {
  std::string kind = "stack";  // "stack" | "zero"
  int blocks = 1;              // stack depth for kind=stack
  long dummy_params = 0;       // declared params for kind=zero
};

struct LayerSpec {
  std::vector<CandidateSpec> candidates;
};

struct SearchSpaceSpec {
  int input_dim = 64;
  int width = 32;
  int feature_dim = 32;
  std::vector<LayerSpec> layers;
  double t_alpha = 1.0;
  double t_beta = 2.0;
};

// Table-I-shaped default at toy scale: depth search k in {1..max_blocks}.
inline SearchSpaceSpec default_search_space(int input_dim, int width, int feature_dim,
                                            int num_layers, int max_blocks) {
  SearchSpaceSpec s;
  s.input_dim = input_dim;
  s.width = width;
  s.feature_dim = feature_dim;
  for (int l = 0; l < num_layers; ++l) {
    LayerSpec ls;
    for (int k = 1; k <= max_blocks; ++k)
      ls.candidates.push_back(CandidateSpec{"stack", k, 0});
    s.layers.push_back(ls);
  }
  return s;
}

// Supernet: stem -> mixed layers with residuals -> head.
struct Supernet {
  ParamStore store;
  Linear stem;
  std::vector<MixedLayer> layers;
  Linear head;
  std::vector<int> weight_ids;  // theta
  std::vector<int> alpha_ids;   // architecture variables
  SearchSpaceSpec spec;

  Var forward(Tape& t, const std::vector<Var>& pv, Var x) const {
    Var h = ad::relu(t, stem.forward(t, pv, x));
    for (const auto& layer : layers) h = mixed_forward(t, pv, layer, h);
    return head.forward(t, pv, h);
  }

  // stem + head + all candidate params; alphas are architecture variables,
  // not model weights
  long weight_scalar_count() const { return store.scalar_count(weight_ids); }
};

inline CandidateOp build_candidate(ParamStore& ps, const std::string& name,
                                   const CandidateSpec& cs, int width, RngStream& rng) {
  if (cs.kind == "stack") return make_stacked_residual_op(ps, name, width, cs.blocks, rng);
  if (cs.kind == "zero") return make_zero_op(ps, name, cs.dummy_params);
  throw std::invalid_argument("unknown candidate kind: " + cs.kind);
}

inline Supernet build_supernet(const SearchSpaceSpec& spec, RngStream& rng) {
  Supernet net;
  net.spec = spec;
  net.stem = Linear::create(net.store, "stem", spec.input_dim, spec.width, rng);
  net.weight_ids.push_back(net.stem.w);
  net.weight_ids.push_back(net.stem.b);
  int l = 0;
  for (const auto& ls : spec.layers) {
    std::vector<CandidateOp> cands;
    int j = 0;
    for (const auto& cs : ls.candidates) {
      std::string name = "layer" + std::to_string(l) + ".cand" + std::to_string(j);
      cands.push_back(build_candidate(net.store, name, cs, spec.width, rng));
      ++j;
    }
    MixedLayer layer = finalize_mixed_layer(net.store, "layer" + std::to_string(l),
                                            std::move(cands), spec.t_alpha, spec.t_beta);
    for (const auto& op : layer.candidates)
      for (int id : op.params) net.weight_ids.push_back(id);
    net.alpha_ids.push_back(layer.alpha);
    net.layers.push_back(std::move(layer));
    ++l;
  }
  net.head = Linear::create(net.store, "head", spec.width, spec.feature_dim, rng);
  net.weight_ids.push_back(net.head.w);
  net.weight_ids.push_back(net.head.b);
  return net;
}

}  // namespace rkdsc
