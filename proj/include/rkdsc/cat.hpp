#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "rkdsc/nn.hpp"

namespace rkdsc {

struct CatConfig {
  int embed_dim = 512;
  int num_heads = 8;
  int ffn_hidden = 2048;
  double compression_ratio = 0.8;
  int encoder_blocks = 1;
  int decoder_blocks = 2;
  int snr_embed_hidden = 16;
  int tokens = 1;  // split the feature vector into tokens of embed_dim/tokens

  void validate() const {
    if (embed_dim < 1 || num_heads < 1 || ffn_hidden < 1 || encoder_blocks < 1 ||
        decoder_blocks < 1 || snr_embed_hidden < 1 || tokens < 1)
      throw std::invalid_argument("CatConfig: counts must be positive");
    if (embed_dim % tokens != 0)
      throw std::invalid_argument("CatConfig: embed_dim must be divisible by tokens");
    if ((embed_dim / tokens) % num_heads != 0)
      throw std::invalid_argument("CatConfig: token dim must be divisible by num_heads");
  }
};

// floor(embed_dim * (1 - ratio)), clamped to at least 1.
inline int compressed_dim(int embed_dim, double ratio) {
  if (embed_dim < 1) throw std::invalid_argument("compressed_dim: embed_dim must be >= 1");
  if (!(ratio >= 0.0 && ratio < 1.0))
    throw std::invalid_argument("compressed_dim: ratio must be in [0, 1)");
  const int d = static_cast<int>(std::floor(embed_dim * (1.0 - ratio)));
  return std::max(1, d);
}

// scalar snr -> hidden -> out_dim, sigmoid-bounded in (0, 1).
struct SnrEmbed {
  Linear l1, l2;
  int out_dim = 0;
  std::vector<int> params;

  static SnrEmbed create(ParamStore& ps, const std::string& name, int hidden, int out,
                         RngStream& rng) {
    SnrEmbed e;
    e.out_dim = out;
    if (out == 0) return e;  // degenerate: nothing to fuse
    e.l1 = Linear::create(ps, name + ".l1", 1, hidden, rng);
    e.l2 = Linear::create(ps, name + ".l2", hidden, out, rng);
    e.params = {e.l1.w, e.l1.b, e.l2.w, e.l2.b};
    return e;
  }

  Var forward(Tape& t, const std::vector<Var>& pv, double snr_db) const {
    Var s = t.leaf(Mat::Constant(1, 1, snr_db));
    Var h = ad::relu(t, l1.forward(t, pv, s));
    return ad::sigmoid(t, l2.forward(t, pv, h));
  }

  long param_count() const { return out_dim == 0 ? 0 : l1.param_count() + l2.param_count(); }
  long flops() const { return out_dim == 0 ? 0 : l1.flops() + l2.flops() + l1.out_dim + 4L * out_dim; }
};

struct MultiHeadAttention {
  Linear wq, wk, wv, wo;
  int dim = 0, heads = 0;
  std::vector<int> params;

  static MultiHeadAttention create(ParamStore& ps, const std::string& name, int dim,
                                   int heads, RngStream& rng) {
    MultiHeadAttention a;
    a.dim = dim;
    a.heads = heads;
    a.wq = Linear::create(ps, name + ".wq", dim, dim, rng);
    a.wk = Linear::create(ps, name + ".wk", dim, dim, rng);
    a.wv = Linear::create(ps, name + ".wv", dim, dim, rng);
    a.wo = Linear::create(ps, name + ".wo", dim, dim, rng);
    for (const Linear* l : {&a.wq, &a.wk, &a.wv, &a.wo}) {
      a.params.push_back(l->w);
      a.params.push_back(l->b);
    }
    return a;
  }

  // x: dim x tokens
  Var forward(Tape& t, const std::vector<Var>& pv, Var x) const {
    const int dh = dim / heads;
    Var q = wq.forward(t, pv, x);
    Var k = wk.forward(t, pv, x);
    Var v = wv.forward(t, pv, x);
    std::vector<Var> head_outs;
    for (int h = 0; h < heads; ++h) {
      Var qh = ad::slice_rows(t, q, h * dh, dh);
      Var kh = ad::slice_rows(t, k, h * dh, dh);
      Var vh = ad::slice_rows(t, v, h * dh, dh);
      Var scores = ad::smul(t, ad::matmul_tn(t, kh, qh), 1.0 / std::sqrt(double(dh)));
      Var attn = ad::softmax_cols(t, scores);
      head_outs.push_back(ad::matmul(t, vh, attn));
    }
    Var cat = heads == 1 ? head_outs[0] : ad::concat_rows(t, head_outs);
    return wo.forward(t, pv, cat);
  }

  long param_count() const { return 4L * (static_cast<long>(dim) * dim + dim); }
  long flops(int tokens) const {
    // projections + scores + weighted sum, MAC = 2 FLOPs
    return 4L * tokens * (2L * dim * dim + dim) + 2L * 2L * tokens * tokens * dim +
           5L * tokens * tokens * heads;
  }
};

// One CAT block: pre-norm MHSA with residual, then a down-projecting FFN.
// Non-final blocks concatenate an SNR embedding to restore embed_dim.
struct CatBlock {
  int embed_dim = 0, tokens = 1, out_dim = 0;
  bool is_final = false;
  int ln1_gamma = -1, ln1_beta = -1;  // per-token dim
  int ln2_gamma = -1, ln2_beta = -1;  // flattened embed_dim
  MultiHeadAttention attn;
  Linear ffn1, ffn2;
  SnrEmbed snr;  // unused (out_dim 0 allowed) when final
  std::vector<int> params;

  static CatBlock create(ParamStore& ps, const std::string& name, const CatConfig& cfg,
                         bool is_final, RngStream& rng) {
    cfg.validate();
    CatBlock b;
    b.embed_dim = cfg.embed_dim;
    b.tokens = cfg.tokens;
    b.is_final = is_final;
    b.out_dim = compressed_dim(cfg.embed_dim, cfg.compression_ratio);
    const int d_tok = cfg.embed_dim / cfg.tokens;
    b.ln1_gamma = ps.add(name + ".ln1.g", Mat::Ones(d_tok, 1));
    b.ln1_beta = ps.add(name + ".ln1.b", Mat::Zero(d_tok, 1));
    b.attn = MultiHeadAttention::create(ps, name + ".attn", d_tok, cfg.num_heads, rng);
    b.ln2_gamma = ps.add(name + ".ln2.g", Mat::Ones(cfg.embed_dim, 1));
    b.ln2_beta = ps.add(name + ".ln2.b", Mat::Zero(cfg.embed_dim, 1));
    b.ffn1 = Linear::create(ps, name + ".ffn1", cfg.embed_dim, cfg.ffn_hidden, rng);
    b.ffn2 = Linear::create(ps, name + ".ffn2", cfg.ffn_hidden, b.out_dim, rng);
    if (is_final) {
      // keep the compressed output away from exact zero at init; a dead relu
      // row would otherwise hand the power normalizer a zero block
      Mat& bias = ps.at(b.ffn2.b).value;
      for (Eigen::Index i = 0; i < bias.size(); ++i)
        bias.data()[i] = uniform_real(rng, 0.005, 0.025);
    }
    if (!is_final)
      b.snr = SnrEmbed::create(ps, name + ".snr", cfg.snr_embed_hidden,
                               cfg.embed_dim - b.out_dim, rng);
    b.params = {b.ln1_gamma, b.ln1_beta, b.ln2_gamma, b.ln2_beta};
    for (int id : b.attn.params) b.params.push_back(id);
    for (int id : {b.ffn1.w, b.ffn1.b, b.ffn2.w, b.ffn2.b}) b.params.push_back(id);
    for (int id : b.snr.params) b.params.push_back(id);
    return b;
  }

  // x: embed_dim x 1 -> out_dim x 1 (final) or embed_dim x 1 (non-final)
  Var forward(Tape& t, const std::vector<Var>& pv, Var x, double snr_db) const {
    if (t.val(x).rows() != embed_dim || t.val(x).cols() != 1)
      throw std::invalid_argument("cat_block: input must be embed_dim x 1");
    const int d_tok = embed_dim / tokens;
    Var xt = ad::reshape(t, x, d_tok, tokens);
    Var normed = ad::layernorm_cols(t, xt, pv[ln1_gamma], pv[ln1_beta]);
    Var a = ad::add(t, xt, attn.forward(t, pv, normed));
    Var flat = ad::reshape(t, a, embed_dim, 1);
    Var f = ad::layernorm_cols(t, flat, pv[ln2_gamma], pv[ln2_beta]);
    Var ffn = ffn2.forward(t, pv, ad::relu(t, ffn1.forward(t, pv, f)));
    if (is_final || snr.out_dim == 0) return ffn;
    Var emb = snr.forward(t, pv, snr_db);
    return ad::concat_rows(t, {ffn, emb});
  }

  long param_count() const {
    long n = 2L * (embed_dim / tokens) + 2L * embed_dim;  // layer norms
    n += attn.param_count() + ffn1.param_count() + ffn2.param_count();
    if (!is_final) n += snr.param_count();
    return n;
  }
  long flops() const {
    long n = attn.flops(tokens) + ffn1.flops() + ffn2.flops();
    n += 8L * embed_dim;  // layer norms, residual, activations (approximate)
    if (!is_final) n += snr.flops();
    return n;
  }
};

// f_theta_c: encoder_blocks CAT blocks, the last in final mode.
struct CatEncoder {
  CatConfig cfg;
  std::vector<CatBlock> blocks;
  std::vector<int> params;

  static CatEncoder create(ParamStore& ps, const std::string& name, const CatConfig& cfg,
                           RngStream& rng) {
    CatEncoder e;
    e.cfg = cfg;
    for (int i = 0; i < cfg.encoder_blocks; ++i) {
      const bool final_block = (i == cfg.encoder_blocks - 1);
      e.blocks.push_back(
          CatBlock::create(ps, name + ".block" + std::to_string(i), cfg, final_block, rng));
      for (int id : e.blocks.back().params) e.params.push_back(id);
    }
    return e;
  }

  Var forward(Tape& t, const std::vector<Var>& pv, Var h, double snr_db) const {
    Var x = h;
    for (const auto& b : blocks) x = b.forward(t, pv, x, snr_db);
    return x;
  }

  int output_dim() const { return blocks.back().out_dim; }
  long param_count() const {
    long n = 0;
    for (const auto& b : blocks) n += b.param_count();
    return n;
  }
  long flops() const {
    long n = 0;
    for (const auto& b : blocks) n += b.flops();
    return n;
  }
};

// f_phi_c: an SNR-concat lift from compressed_dim back to embed_dim, then
// decoder_blocks CAT blocks in non-final mode.
struct CatDecoder {
  CatConfig cfg;
  SnrEmbed lift;
  std::vector<CatBlock> blocks;
  std::vector<int> params;
  int in_dim = 0;

  static CatDecoder create(ParamStore& ps, const std::string& name, const CatConfig& cfg,
                           RngStream& rng) {
    CatDecoder d;
    d.cfg = cfg;
    d.in_dim = compressed_dim(cfg.embed_dim, cfg.compression_ratio);
    d.lift = SnrEmbed::create(ps, name + ".lift", cfg.snr_embed_hidden,
                              cfg.embed_dim - d.in_dim, rng);
    for (int id : d.lift.params) d.params.push_back(id);
    for (int i = 0; i < cfg.decoder_blocks; ++i) {
      d.blocks.push_back(
          CatBlock::create(ps, name + ".block" + std::to_string(i), cfg, false, rng));
      for (int id : d.blocks.back().params) d.params.push_back(id);
    }
    return d;
  }

  Var forward(Tape& t, const std::vector<Var>& pv, Var z, double snr_db) const {
    if (t.val(z).rows() != in_dim)
      throw std::invalid_argument("cat_decoder: input must be compressed_dim x 1");
    Var x = z;
    if (lift.out_dim > 0) x = ad::concat_rows(t, {z, lift.forward(t, pv, snr_db)});
    for (const auto& b : blocks) x = b.forward(t, pv, x, snr_db);
    return x;
  }

  long param_count() const {
    long n = lift.param_count();
    for (const auto& b : blocks) n += b.param_count();
    return n;
  }
  long flops() const {
    long n = lift.flops();
    for (const auto& b : blocks) n += b.flops();
    return n;
  }
};

}  // namespace rkdsc
