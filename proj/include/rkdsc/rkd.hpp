#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "rkdsc/cat.hpp"
#include "rkdsc/channel.hpp"
#include "rkdsc/data.hpp"
#include "rkdsc/kdl_darts.hpp"

namespace rkdsc {

// Frozen teacher: a wider, randomly initialized feature extractor with the
// same output dimension as the student.
struct Teacher {
  ParamStore store;
  Linear l1, l2;
  int in_dim = 0, out_dim = 0;

  static Teacher create(int in_dim, int hidden, int out_dim, RngStream& rng) {
    Teacher t;
    t.in_dim = in_dim;
    t.out_dim = out_dim;
    t.l1 = Linear::create(t.store, "teacher.l1", in_dim, hidden, rng);
    t.l2 = Linear::create(t.store, "teacher.l2", hidden, out_dim, rng);
    return t;
  }

  // Evaluation-mode features; no gradient ever flows here.
  Eigen::MatrixXd features(const Eigen::MatrixXd& x) const {
    Eigen::MatrixXd h = (store.at(l1.w).value * x).colwise() +
                        Eigen::VectorXd(store.at(l1.b).value.col(0));
    h = h.cwiseMax(0.0);
    return (store.at(l2.w).value * h).colwise() +
           Eigen::VectorXd(store.at(l2.b).value.col(0));
  }

  std::function<Eigen::MatrixXd(const Eigen::MatrixXd&)> fn() const {
    return [this](const Eigen::MatrixXd& x) { return features(x); };
  }
};

inline Eigen::MatrixXd teacher_features(const Teacher& t, const Batch& b) {
  return t.features(b.inputs);
}

struct StagePlan {
  int epochs = 10;
  LrSpec lr{5e-4, 5e-5};
  int batch_size = 32;
};

struct Stage2Plan {
  int epochs = 10;
  LrSpec lr{5e-4, 1e-5};
  int batch_size = 32;
  SnrRange snr_range{5.0, 20.0};
  double lambda_kd = 1.0 / 3.0;
  double lambda_re = 1.0 / 3.0;
  double lambda_task = 1.0 / 3.0;
};

struct TrainPlan {
  StagePlan stage1;
  Stage2Plan stage2;
  std::uint64_t seed = 0;

  void validate() const {
    if (stage1.epochs < 0 || stage2.epochs < 0)
      throw std::invalid_argument("epochs must be >= 0");
    if (stage2.lambda_kd < 0 || stage2.lambda_re < 0 || stage2.lambda_task < 0)
      throw std::invalid_argument("loss weights must be >= 0");
    stage2.snr_range.validate();
  }
};

// (1/M) sum_k (1/N) ||a_k - b_k||^2 over columns.
inline double kd_loss(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument("kd_loss: dimension mismatch");
  if (a.cols() < 1) throw std::invalid_argument("kd_loss: empty batch");
  return (a - b).squaredNorm() / static_cast<double>(a.size());
}

inline Var kd_loss_var(Tape& t, Var a, Var b) { return ad::mse(t, a, b); }

inline Var joint_loss_var(Tape& t, Var h_tea, Var h, Var h_tilde, Var logits,
                          const std::vector<int>& labels, double lambda_kd,
                          double lambda_re, double lambda_task) {
  if (lambda_kd < 0 || lambda_re < 0 || lambda_task < 0)
    throw std::invalid_argument("joint_loss: negative loss weight");
  Var kd = kd_loss_var(t, h_tea, h_tilde);
  Var re = kd_loss_var(t, h, h_tilde);
  Var task = ad::cross_entropy_logits(t, logits, labels);
  Var total = ad::smul(t, kd, lambda_kd);
  total = ad::add(t, total, ad::smul(t, re, lambda_re));
  return ad::add(t, total, ad::smul(t, task, lambda_task));
}

// The full transmit-side + receive-side system of one pipeline. With
// use_cat = false the semantic features go to the channel directly
// (power-normalized), the direct-transmission baseline.
struct PipelineState {
  ParamStore store;
  DiscreteNet sem_enc;
  bool use_cat = true;
  CatEncoder ch_enc;
  CatDecoder ch_dec;
  Linear dec_l1, dec_l2;  // semantic decoder / task head
  CatConfig cat_cfg;
  int num_classes = 0;
  std::vector<int> sem_enc_ids, ch_enc_ids, ch_dec_ids, sem_dec_ids;

  int feature_dim() const { return sem_enc.feature_dim; }
  int transmitted_dim() const { return use_cat ? ch_enc.output_dim() : sem_enc.feature_dim; }

  std::vector<int> all_trainable() const {
    std::vector<int> ids = sem_enc_ids;
    ids.insert(ids.end(), ch_enc_ids.begin(), ch_enc_ids.end());
    ids.insert(ids.end(), ch_dec_ids.begin(), ch_dec_ids.end());
    ids.insert(ids.end(), sem_dec_ids.begin(), sem_dec_ids.end());
    return ids;
  }
};

inline PipelineState make_pipeline(const SearchSpaceSpec& spec,
                                   const DiscreteArchitecture& arch,
                                   const CatConfig& cat_cfg, int num_classes,
                                   int dec_hidden, bool use_cat, RngStream& rng) {
  if (cat_cfg.embed_dim != spec.feature_dim)
    throw std::invalid_argument("pipeline: cat embed_dim must equal encoder feature_dim");
  PipelineState p;
  p.cat_cfg = cat_cfg;
  p.num_classes = num_classes;
  p.use_cat = use_cat;
  p.sem_enc = build_discrete_net(p.store, spec, arch, rng);
  p.sem_enc_ids = p.sem_enc.param_ids;
  if (use_cat) {
    p.ch_enc = CatEncoder::create(p.store, "chenc", cat_cfg, rng);
    p.ch_dec = CatDecoder::create(p.store, "chdec", cat_cfg, rng);
    p.ch_enc_ids = p.ch_enc.params;
    p.ch_dec_ids = p.ch_dec.params;
  }
  p.dec_l1 = Linear::create(p.store, "semdec.l1", spec.feature_dim, dec_hidden, rng);
  p.dec_l2 = Linear::create(p.store, "semdec.l2", dec_hidden, num_classes, rng);
  p.sem_dec_ids = {p.dec_l1.w, p.dec_l1.b, p.dec_l2.w, p.dec_l2.b};
  return p;
}

struct PipelineForward {
  Var h;        // clean semantic features (N x B)
  Var h_tilde;  // post-channel features (N x B)
  Var logits;   // classes x B
};

// Full differentiable path: encode -> channel-encode -> normalize ->
// channel -> channel-decode -> classify. With bypass_channel the noise/fade
// draw is skipped (power normalization stays, matching the trained path).
inline PipelineForward pipeline_forward(Tape& t, const std::vector<Var>& pv,
                                        const PipelineState& p,
                                        const Eigen::MatrixXd& inputs, double snr_db,
                                        const ChannelConfig& ch_cfg, RngStream& ch_rng,
                                        bool bypass_channel = false) {
  PipelineForward out;
  Var x = t.leaf(inputs);
  out.h = p.sem_enc.forward(t, pv, x);
  const Eigen::Index B = inputs.cols();
  std::vector<Var> cols;
  cols.reserve(static_cast<std::size_t>(B));
  for (Eigen::Index i = 0; i < B; ++i) {
    Var hi = ad::slice_cols(t, out.h, i, 1);
    Var z = p.use_cat ? p.ch_enc.forward(t, pv, hi, snr_db) : hi;
    Var zn = unit_power_normalize(t, z);
    Var zt = zn;
    if (!bypass_channel) {
      const std::size_t nsym = (static_cast<std::size_t>(t.val(zn).rows()) + 1) / 2;
      zt = transmit_through(t, zn, draw_realization(nsym, ch_cfg, snr_db, ch_rng));
    }
    cols.push_back(p.use_cat ? p.ch_dec.forward(t, pv, zt, snr_db) : zt);
  }
  out.h_tilde = B == 1 ? cols[0] : ad::concat_cols(t, cols);
  Var u = ad::relu(t, p.dec_l1.forward(t, pv, out.h_tilde));
  out.logits = p.dec_l2.forward(t, pv, u);
  return out;
}

// Stage 1: feature distillation of the semantic encoder, no channel.
inline std::vector<double> stage1_distill(PipelineState& p, const Teacher& teacher,
                                          const Dataset& data, const TrainPlan& plan) {
  plan.validate();
  if (teacher.out_dim != p.feature_dim())
    throw std::invalid_argument("stage1: teacher_dim must equal encoder feature_dim");
  std::vector<double> epoch_losses;
  if (plan.stage1.epochs == 0) return epoch_losses;
  const std::size_t steps_per_epoch =
      (static_cast<std::size_t>(data.size()) + plan.stage1.batch_size - 1) /
      static_cast<std::size_t>(plan.stage1.batch_size);
  Sgd opt;
  opt.schedule = {plan.stage1.lr.initial, plan.stage1.lr.final_,
                  static_cast<int>(steps_per_epoch) * plan.stage1.epochs};
  RngStream order_rng = derive_stream(plan.seed, 0x57A6E1);
  for (int epoch = 0; epoch < plan.stage1.epochs; ++epoch) {
    auto order = shuffled_order(data.size(), order_rng);
    double sum = 0.0;
    int n = 0;
    for (std::size_t s = 0; s < steps_per_epoch; ++s) {
      Batch b = take_batch(data, order, s * plan.stage1.batch_size,
                           static_cast<std::size_t>(plan.stage1.batch_size));
      Tape t;
      auto pv = bind_params(t, p.store);
      Var x = t.leaf(b.inputs);
      Var h = p.sem_enc.forward(t, pv, x);
      Var tea = t.leaf(teacher.features(b.inputs));
      Var loss = kd_loss_var(t, tea, h);
      const double v = t.val(loss)(0, 0);
      if (!std::isfinite(v)) throw std::runtime_error("non-finite loss in stage1_distill");
      t.backward(loss);
      for (int id : p.sem_enc_ids) p.store.at(id).grad += t.grad(pv[id]);
      opt.step(p.store, p.sem_enc_ids);
      sum += v;
      ++n;
    }
    epoch_losses.push_back(sum / n);
  }
  return epoch_losses;
}

struct Stage2LogRow {
  int epoch = 0;
  double joint = 0.0, kd = 0.0, re = 0.0, task = 0.0;
  double mean_snr_db = 0.0;
};

// Stage 2: joint training of all four parameter sets through the noisy
// channel; SNR sampled once per batch from the training range.
inline std::vector<Stage2LogRow> stage2_joint_train(PipelineState& p, const Teacher& teacher,
                                                    const Dataset& data, const TrainPlan& plan,
                                                    const ChannelConfig& ch_cfg,
                                                    const std::vector<int>* trainable = nullptr) {
  plan.validate();
  std::vector<Stage2LogRow> log;
  if (plan.stage2.epochs == 0) return log;
  const std::vector<int> ids = trainable ? *trainable : p.all_trainable();
  const std::size_t steps_per_epoch =
      (static_cast<std::size_t>(data.size()) + plan.stage2.batch_size - 1) /
      static_cast<std::size_t>(plan.stage2.batch_size);
  Sgd opt;
  opt.schedule = {plan.stage2.lr.initial, plan.stage2.lr.final_,
                  static_cast<int>(steps_per_epoch) * plan.stage2.epochs};
  RngStream order_rng = derive_stream(plan.seed, 0x57A6E2);
  RngStream snr_rng = derive_stream(plan.seed, 0x57A6E3);
  RngStream ch_rng = derive_stream(plan.seed ^ ch_cfg.seed, 0xC4A77E1);
  for (int epoch = 0; epoch < plan.stage2.epochs; ++epoch) {
    auto order = shuffled_order(data.size(), order_rng);
    Stage2LogRow row;
    row.epoch = epoch;
    int n = 0;
    for (std::size_t s = 0; s < steps_per_epoch; ++s) {
      Batch b = take_batch(data, order, s * plan.stage2.batch_size,
                           static_cast<std::size_t>(plan.stage2.batch_size));
      const double snr =
          sample_training_snr(plan.stage2.snr_range.lo, plan.stage2.snr_range.hi, snr_rng);
      Tape t;
      auto pv = bind_params(t, p.store);
      PipelineForward fw = pipeline_forward(t, pv, p, b.inputs, snr, ch_cfg, ch_rng);
      Var tea = t.leaf(teacher.features(b.inputs));
      Var kd = kd_loss_var(t, tea, fw.h_tilde);
      Var re = kd_loss_var(t, fw.h, fw.h_tilde);
      Var task = ad::cross_entropy_logits(t, fw.logits, b.labels);
      Var total = ad::smul(t, kd, plan.stage2.lambda_kd);
      total = ad::add(t, total, ad::smul(t, re, plan.stage2.lambda_re));
      total = ad::add(t, total, ad::smul(t, task, plan.stage2.lambda_task));
      const double v = t.val(total)(0, 0);
      if (!std::isfinite(v)) throw std::runtime_error("non-finite loss in stage2_joint_train");
      t.backward(total);
      for (int id : ids) p.store.at(id).grad += t.grad(pv[id]);
      opt.step(p.store, ids);
      row.joint += v;
      row.kd += t.val(kd)(0, 0);
      row.re += t.val(re)(0, 0);
      row.task += t.val(task)(0, 0);
      row.mean_snr_db += snr;
      ++n;
    }
    row.joint /= n;
    row.kd /= n;
    row.re /= n;
    row.task /= n;
    row.mean_snr_db /= n;
    log.push_back(row);
  }
  return log;
}

}  // namespace rkdsc
