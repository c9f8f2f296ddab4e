#pragma once

#include <cmath>
#include <complex>
#include <stdexcept>
#include <vector>

#include "rkdsc/autodiff.hpp"
#include "rkdsc/rng.hpp"

namespace rkdsc {

using ad::Mat;
using ad::Tape;
using ad::Var;

enum class ChannelFamily { awgn, rayleigh };
enum class FadingGranularity { per_block, per_symbol };
enum class Equalization { perfect_csi, none };

struct SnrRange {
  double lo = 5.0;
  double hi = 20.0;

  void validate() const {
    if (!(lo <= hi)) throw std::invalid_argument("snr_db range requires lo <= hi");
  }
};

struct ChannelConfig {
  ChannelFamily family = ChannelFamily::awgn;
  SnrRange snr_db;
  // Ignored (but representable) for AWGN.
  FadingGranularity fading_granularity = FadingGranularity::per_block;
  Equalization equalization = Equalization::perfect_csi;
  std::uint64_t seed = 0;
};

using Cplx = std::complex<double>;

struct SymbolBlock {
  std::vector<Cplx> symbols;
  int source_dim = 0;  // real features packed into this block
};

inline double noise_variance(double snr_db) { return std::pow(10.0, -snr_db / 10.0); }

inline SymbolBlock pack_features(const std::vector<double>& v) {
  for (double x : v)
    if (!std::isfinite(x)) throw std::invalid_argument("non-finite feature in pack");
  SymbolBlock b;
  b.source_dim = static_cast<int>(v.size());
  b.symbols.reserve((v.size() + 1) / 2);
  for (std::size_t i = 0; i < v.size(); i += 2) {
    const double re = v[i];
    const double im = (i + 1 < v.size()) ? v[i + 1] : 0.0;  // zero pad for odd dims
    b.symbols.emplace_back(re, im);
  }
  return b;
}

inline std::vector<double> unpack_features(const SymbolBlock& b, int source_dim) {
  const std::size_t need = (static_cast<std::size_t>(source_dim) + 1) / 2;
  if (source_dim < 0 || need != b.symbols.size())
    throw std::invalid_argument("unpack: source_dim inconsistent with block length");
  std::vector<double> v(static_cast<std::size_t>(source_dim));
  for (std::size_t i = 0; i < v.size(); ++i) {
    const Cplx& s = b.symbols[i / 2];
    v[i] = (i % 2 == 0) ? s.real() : s.imag();
  }
  return v;
}

inline double mean_symbol_power(const SymbolBlock& b) {
  double p = 0.0;
  for (const Cplx& s : b.symbols) p += std::norm(s);
  return p / static_cast<double>(b.symbols.size());
}

inline SymbolBlock normalize_power(const SymbolBlock& b) {
  if (b.symbols.empty()) throw std::invalid_argument("empty block cannot be normalized");
  const double p = mean_symbol_power(b);
  if (p == 0.0) throw std::invalid_argument("zero-power block cannot be normalized");
  const double scale = 1.0 / std::sqrt(p);
  SymbolBlock out = b;
  for (Cplx& s : out.symbols) s *= scale;
  return out;
}

inline double sample_training_snr(double lo, double hi, RngStream& rng) {
  if (!(lo <= hi)) throw std::invalid_argument("snr range requires lo <= hi");
  if (lo == hi) return lo;
  return uniform_real(rng, lo, hi);
}

// One concrete draw of the channel: effective per-symbol gain and additive
// noise such that output = gain * input + noise. With perfect CSI the H
// factor is divided out, leaving gain = 1 and noise = n / H.
struct ChannelRealization {
  std::vector<Cplx> gain;   // size 1 (per_block) or nsym (per_symbol)
  std::vector<Cplx> noise;  // size nsym
  Cplx gain_at(std::size_t i) const { return gain.size() == 1 ? gain[0] : gain[i]; }
};

inline Cplx circular_gaussian(RngStream& rng, double total_variance) {
  const double s = std::sqrt(total_variance / 2.0);
  const double re = gaussian(rng, 0.0, s);
  const double im = gaussian(rng, 0.0, s);
  return Cplx(re, im);
}

inline ChannelRealization draw_realization(std::size_t nsym, const ChannelConfig& cfg,
                                           double snr_db, RngStream& rng) {
  ChannelRealization r;
  const double sigma2 = noise_variance(snr_db);
  std::vector<Cplx> h;
  if (cfg.family == ChannelFamily::rayleigh) {
    const std::size_t nh =
        cfg.fading_granularity == FadingGranularity::per_block ? 1 : nsym;
    h.reserve(nh);
    for (std::size_t i = 0; i < nh; ++i) h.push_back(circular_gaussian(rng, 1.0));
  } else {
    h.push_back(Cplx(1.0, 0.0));
  }
  r.noise.reserve(nsym);
  for (std::size_t i = 0; i < nsym; ++i) r.noise.push_back(circular_gaussian(rng, sigma2));

  const bool equalize = cfg.family == ChannelFamily::rayleigh &&
                        cfg.equalization == Equalization::perfect_csi;
  if (equalize) {
    r.gain.assign(1, Cplx(1.0, 0.0));
    for (std::size_t i = 0; i < nsym; ++i) {
      const Cplx hi = h.size() == 1 ? h[0] : h[i];
      r.noise[i] /= hi;
    }
  } else {
    r.gain = std::move(h);
  }
  return r;
}

inline SymbolBlock apply_realization(const SymbolBlock& b, const ChannelRealization& r) {
  if (r.noise.size() != b.symbols.size())
    throw std::invalid_argument("realization length mismatch");
  SymbolBlock out = b;
  for (std::size_t i = 0; i < out.symbols.size(); ++i)
    out.symbols[i] = r.gain_at(i) * out.symbols[i] + r.noise[i];
  return out;
}

inline SymbolBlock transmit(const SymbolBlock& b, const ChannelConfig& cfg,
                            double snr_db, RngStream& rng) {
  for (const Cplx& s : b.symbols)
    if (!std::isfinite(s.real()) || !std::isfinite(s.imag()))
      throw std::invalid_argument("non-finite channel input");
  return apply_realization(b, draw_realization(b.symbols.size(), cfg, snr_db, rng));
}

// ---- differentiable channel path (real feature vector in/out) ----

// Scale a real feature vector to unit mean per-symbol power, on the tape.
// The zero pad of an odd dimension contributes nothing to the power sum.
inline Var unit_power_normalize(Tape& t, Var z) {
  const Eigen::Index dim = t.val(z).rows();
  if (dim == 0) throw std::invalid_argument("empty block cannot be normalized");
  if (t.val(z).cwiseAbs().maxCoeff() == 0.0)
    throw std::invalid_argument("zero-power block cannot be normalized");
  const double nsym = static_cast<double>((dim + 1) / 2);
  Var p = ad::sum_all(t, ad::cmul(t, z, z));          // total power
  Var mean_p = ad::smul(t, p, 1.0 / nsym);            // per-symbol mean power
  Var inv_scale = ad::pow_scalar(t, mean_p, -0.5);
  return ad::scale_by(t, z, inv_scale);
}

// Apply a fixed channel realization to a real feature vector on the tape.
// Pairs of reals form complex symbols; the realization is constant during
// backward, so the Jacobian per pair is the 2x2 rotation-scale of the gain.
inline Var transmit_through(Tape& t, Var z, const ChannelRealization& r) {
  const Eigen::Index dim = t.val(z).rows();
  if (t.val(z).cols() != 1) throw std::invalid_argument("transmit_through expects a column vector");
  const std::size_t nsym = static_cast<std::size_t>((dim + 1) / 2);
  if (r.noise.size() != nsym) throw std::invalid_argument("realization length mismatch");
  if (!t.val(z).allFinite()) throw std::invalid_argument("non-finite channel input");
  Mat out(dim, 1);
  for (std::size_t i = 0; i < nsym; ++i) {
    const double re = t.val(z)(2 * i, 0);
    const double im = (2 * i + 1 < static_cast<std::size_t>(dim)) ? t.val(z)(2 * i + 1, 0) : 0.0;
    const Cplx y = r.gain_at(i) * Cplx(re, im) + r.noise[i];
    out(2 * i, 0) = y.real();
    if (2 * i + 1 < static_cast<std::size_t>(dim)) out(2 * i + 1, 0) = y.imag();
  }
  return t.make(std::move(out), [z, r, dim, nsym](Tape& t, const Mat& g) {
    Mat gz = Mat::Zero(dim, 1);
    for (std::size_t i = 0; i < nsym; ++i) {
      const Cplx h = r.gain_at(i);
      const double a = h.real(), b = h.imag();
      const double go_re = g(2 * i, 0);
      const double go_im = (2 * i + 1 < static_cast<std::size_t>(dim)) ? g(2 * i + 1, 0) : 0.0;
      gz(2 * i, 0) = a * go_re + b * go_im;
      if (2 * i + 1 < static_cast<std::size_t>(dim))
        gz(2 * i + 1, 0) = -b * go_re + a * go_im;
    }
    t.accumulate(z, gz);
  });
}

}  // namespace rkdsc
