#pragma once

#include <functional>
#include <stdexcept>
#include <vector>

#include "rkdsc/rkd.hpp"

namespace rkdsc {

// Fraction of columns whose argmax score (ties -> lowest index) equals the label.
inline double top1_accuracy(const Eigen::MatrixXd& scores, const std::vector<int>& labels) {
  if (scores.cols() != static_cast<Eigen::Index>(labels.size()))
    throw std::invalid_argument("top1_accuracy: shape mismatch");
  if (labels.empty()) throw std::invalid_argument("top1_accuracy: empty batch");
  int correct = 0;
  for (Eigen::Index c = 0; c < scores.cols(); ++c) {
    int best = 0;
    for (Eigen::Index r = 1; r < scores.rows(); ++r)
      if (scores(r, c) > scores(best, c)) best = static_cast<int>(r);
    if (best == labels[static_cast<std::size_t>(c)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

struct SweepRow {
  double snr_db = 0.0;
  double accuracy = 0.0;
  double kd = 0.0, re = 0.0, task = 0.0;
  long num_eval_samples = 0;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::uint64_t seed = 0;
  ChannelFamily family = ChannelFamily::awgn;
};

struct EvalOutputs {
  double accuracy = 0.0;
  double kd = 0.0, re = 0.0, task = 0.0;
  Eigen::MatrixXd logits;
};

// One pass of the full encode -> channel -> decode -> classify path over a
// dataset (single noise realization per sample).
inline EvalOutputs evaluate_once(const PipelineState& p, const Teacher* teacher,
                                 const Dataset& data, double snr_db,
                                 const ChannelConfig& ch_cfg, RngStream& ch_rng,
                                 bool bypass_channel = false, int chunk = 64) {
  EvalOutputs out;
  out.logits.resize(p.num_classes, data.size());
  double kd_sum = 0.0, re_sum = 0.0, task_sum = 0.0;
  int correct = 0;
  for (Eigen::Index start = 0; start < data.size(); start += chunk) {
    const Eigen::Index n = std::min<Eigen::Index>(chunk, data.size() - start);
    Eigen::MatrixXd x = data.inputs.middleCols(start, n);
    std::vector<int> labels(data.labels.begin() + start, data.labels.begin() + start + n);
    Tape t;
    auto pv = bind_params(t, p.store);
    PipelineForward fw = pipeline_forward(t, pv, p, x, snr_db, ch_cfg, ch_rng, bypass_channel);
    const Eigen::MatrixXd& logits = t.val(fw.logits);
    out.logits.middleCols(start, n) = logits;
    correct += static_cast<int>(std::lround(top1_accuracy(logits, labels) * n));
    if (teacher) kd_sum += kd_loss(teacher->features(x), t.val(fw.h_tilde)) * n;
    re_sum += kd_loss(t.val(fw.h), t.val(fw.h_tilde)) * n;
    Var ce = ad::cross_entropy_logits(t, fw.logits, labels);
    task_sum += t.val(ce)(0, 0) * n;
  }
  const double total = static_cast<double>(data.size());
  out.accuracy = correct / total;
  out.kd = kd_sum / total;
  out.re = re_sum / total;
  out.task = task_sum / total;
  return out;
}

// Sweep protocol: mean accuracy over `trials` noise realizations at
// each requested SNR, rows in request order.
inline SweepResult snr_sweep(const PipelineState& p, const Teacher* teacher,
                             const std::vector<double>& snrs, const Dataset& data,
                             const ChannelConfig& ch_cfg, int trials, std::uint64_t seed) {
  if (snrs.empty()) throw std::invalid_argument("snr_sweep: empty SNR list");
  if (trials < 1) throw std::invalid_argument("snr_sweep: trials must be >= 1");
  SweepResult result;
  result.seed = seed;
  result.family = ch_cfg.family;
  for (std::size_t i = 0; i < snrs.size(); ++i) {
    SweepRow row;
    row.snr_db = snrs[i];
    row.num_eval_samples = static_cast<long>(data.size()) * trials;
    for (int trial = 0; trial < trials; ++trial) {
      RngStream ch_rng = derive_stream(seed, 0x5EE9 + 1000 * i + static_cast<std::size_t>(trial));
      EvalOutputs e = evaluate_once(p, teacher, data, snrs[i], ch_cfg, ch_rng);
      row.accuracy += e.accuracy;
      row.kd += e.kd;
      row.re += e.re;
      row.task += e.task;
    }
    row.accuracy /= trials;
    row.kd /= trials;
    row.re /= trials;
    row.task /= trials;
    result.rows.push_back(row);
  }
  return result;
}

struct CostReport {
  long param_count = 0;
  long flop_estimate = 0;  // per forward of one sample, MAC = 2 FLOPs
};

inline CostReport param_flop_report(const PipelineState& p) {
  CostReport r;
  r.param_count = p.store.scalar_count(p.all_trainable());
  r.flop_estimate = p.sem_enc.flops();
  if (p.use_cat) r.flop_estimate += p.ch_enc.flops() + p.ch_dec.flops();
  r.flop_estimate += p.dec_l1.flops() + p.dec_l2.flops() + p.dec_l1.out_dim;
  return r;
}

struct AblationRow {
  double ratio = 0.0;
  double accuracy = 0.0;
  int transmitted_dim = 0;
};

// Ablation protocol: one system per compression ratio, identical
// configuration otherwise, evaluated at a fixed SNR.
inline std::vector<AblationRow> compression_ablation(
    const std::function<PipelineState(double)>& system_factory,
    const std::vector<double>& ratios, double snr_db, const Dataset& data,
    const ChannelConfig& ch_cfg, int trials, std::uint64_t seed) {
  std::vector<AblationRow> table;
  for (double r : ratios) {
    if (!(r >= 0.0 && r < 1.0))
      throw std::invalid_argument("compression_ablation: ratio must be in [0, 1)");
    PipelineState p = system_factory(r);
    SweepResult sweep = snr_sweep(p, nullptr, {snr_db}, data, ch_cfg, trials, seed);
    AblationRow row;
    row.ratio = r;
    row.accuracy = sweep.rows[0].accuracy;
    row.transmitted_dim = p.transmitted_dim();
    table.push_back(row);
  }
  return table;
}

}  // namespace rkdsc
