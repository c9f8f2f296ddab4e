#include <catch_amalgamated.hpp>

#include "rkdsc/channel.hpp"

using namespace rkdsc;

TEST_CASE("pack/unpack round trip") {
  std::vector<double> v = {1.0, 2.0, 3.0};
  SymbolBlock b = pack_features(v);
  REQUIRE(b.symbols.size() == 2);
  CHECK(b.symbols[0] == Cplx(1.0, 2.0));
  CHECK(b.symbols[1] == Cplx(3.0, 0.0));
  CHECK(unpack_features(b, 3) == v);

  SymbolBlock empty = pack_features({});
  CHECK(empty.symbols.empty());
  CHECK(unpack_features(empty, 0).empty());

  auto rng = derive_stream(11, 0);
  std::vector<double> big(101);
  for (double& x : big) x = gaussian(rng);
  CHECK(unpack_features(pack_features(big), 101) == big);

  CHECK_THROWS_AS(unpack_features(b, 5), std::invalid_argument);
  CHECK_THROWS_AS(pack_features({1.0, std::nan("")}), std::invalid_argument);
}

TEST_CASE("normalize_power examples") {
  SymbolBlock b;
  b.symbols = {Cplx(1, 0), Cplx(1, 0)};
  SymbolBlock n = normalize_power(b);
  CHECK(std::abs(n.symbols[0] - Cplx(1, 0)) < 1e-12);

  b.symbols = {Cplx(2, 0), Cplx(0, 2)};
  n = normalize_power(b);
  CHECK(std::abs(n.symbols[0] - Cplx(1, 0)) < 1e-12);
  CHECK(std::abs(n.symbols[1] - Cplx(0, 1)) < 1e-12);
  CHECK(std::abs(mean_symbol_power(n) - 1.0) < 1e-9);

  b.symbols = {Cplx(0, 0), Cplx(0, 0)};
  CHECK_THROWS_WITH(normalize_power(b), "zero-power block cannot be normalized");
  b.symbols.clear();
  CHECK_THROWS_AS(normalize_power(b), std::invalid_argument);
}

TEST_CASE("transmit at +200 dB is the identity") {
  auto rng = derive_stream(3, 1);
  std::vector<double> v(16);
  for (double& x : v) x = gaussian(rng);
  SymbolBlock b = normalize_power(pack_features(v));

  ChannelConfig awgn;
  auto crng = derive_stream(3, 2);
  SymbolBlock out = transmit(b, awgn, 200.0, crng);
  for (std::size_t i = 0; i < b.symbols.size(); ++i)
    CHECK(std::abs(out.symbols[i] - b.symbols[i]) < 1e-8);

  ChannelConfig ray;
  ray.family = ChannelFamily::rayleigh;
  ray.equalization = Equalization::perfect_csi;
  crng = derive_stream(3, 3);
  out = transmit(b, ray, 200.0, crng);
  for (std::size_t i = 0; i < b.symbols.size(); ++i)
    CHECK(std::abs(out.symbols[i] - b.symbols[i]) < 1e-6);
}

TEST_CASE("AWGN noise power calibration at 0 dB") {
  const std::size_t n = 500000;
  SymbolBlock b;
  b.symbols.assign(n, Cplx(1.0, 0.0));
  b.source_dim = static_cast<int>(2 * n);
  ChannelConfig cfg;
  auto rng = derive_stream(5, 4);
  SymbolBlock out = transmit(b, cfg, 0.0, rng);
  double p = 0.0;
  for (std::size_t i = 0; i < n; ++i) p += std::norm(out.symbols[i] - b.symbols[i]);
  p /= n;
  CHECK(p > 0.99);
  CHECK(p < 1.01);
}

TEST_CASE("Rayleigh fading moments") {
  auto rng = derive_stream(5, 5);
  const int n = 200000;
  double p2 = 0.0, var_re = 0.0, var_im = 0.0;
  for (int i = 0; i < n; ++i) {
    Cplx h = circular_gaussian(rng, 1.0);
    p2 += std::norm(h);
    var_re += h.real() * h.real();
    var_im += h.imag() * h.imag();
  }
  CHECK(std::abs(p2 / n - 1.0) < 0.02);
  CHECK(std::abs(var_re / n - 0.5) < 0.01);
  CHECK(std::abs(var_im / n - 0.5) < 0.01);
}

TEST_CASE("rayleigh without equalization applies the gain") {
  ChannelConfig cfg;
  cfg.family = ChannelFamily::rayleigh;
  cfg.equalization = Equalization::none;
  auto rng = derive_stream(9, 6);
  ChannelRealization r = draw_realization(4, cfg, 200.0, rng);
  REQUIRE(r.gain.size() == 1);  // per_block default
  SymbolBlock b;
  b.symbols = {Cplx(1, 0), Cplx(0, 1), Cplx(-1, 0), Cplx(0.5, 0.5)};
  SymbolBlock out = apply_realization(b, r);
  for (int i = 0; i < 4; ++i)
    CHECK(std::abs(out.symbols[i] - (r.gain[0] * b.symbols[i] + r.noise[i])) < 1e-12);

  cfg.fading_granularity = FadingGranularity::per_symbol;
  ChannelRealization r2 = draw_realization(4, cfg, 10.0, rng);
  CHECK(r2.gain.size() == 4);
}

TEST_CASE("sample_training_snr") {
  auto rng = derive_stream(2, 7);
  CHECK(sample_training_snr(7.0, 7.0, rng) == 7.0);
  CHECK_THROWS_AS(sample_training_snr(20.0, 5.0, rng), std::invalid_argument);
  double sum = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) sum += sample_training_snr(5.0, 20.0, rng);
  CHECK(std::abs(sum / n - 12.5) < 0.1);
}

TEST_CASE("transmit determinism and input validation") {
  std::vector<double> v = {0.5, -1.0, 2.0, 0.25};
  SymbolBlock b = normalize_power(pack_features(v));
  ChannelConfig cfg;
  cfg.family = ChannelFamily::rayleigh;
  auto r1 = derive_stream(42, 8);
  auto r2 = derive_stream(42, 8);
  SymbolBlock o1 = transmit(b, cfg, 5.0, r1);
  SymbolBlock o2 = transmit(b, cfg, 5.0, r2);
  for (std::size_t i = 0; i < o1.symbols.size(); ++i) CHECK(o1.symbols[i] == o2.symbols[i]);

  b.symbols[0] = Cplx(std::numeric_limits<double>::infinity(), 0);
  CHECK_THROWS_WITH(transmit(b, cfg, 5.0, r1), "non-finite channel input");
}

TEST_CASE("differentiable channel path agrees with the symbol path") {
  auto rng = derive_stream(13, 9);
  Mat z(5, 1);  // odd dim exercises the zero pad
  for (int i = 0; i < 5; ++i) z(i, 0) = gaussian(rng);

  // tape-side normalize matches normalize_power on packed symbols
  Tape t;
  Var zn = unit_power_normalize(t, t.leaf(z));
  std::vector<double> v(z.data(), z.data() + 5);
  SymbolBlock nb = normalize_power(pack_features(v));
  std::vector<double> expect = unpack_features(nb, 5);
  for (int i = 0; i < 5; ++i) CHECK(t.val(zn)(i, 0) == Catch::Approx(expect[i]).epsilon(1e-12));

  ChannelConfig cfg;
  cfg.family = ChannelFamily::rayleigh;
  cfg.equalization = Equalization::none;
  auto crng = derive_stream(13, 10);
  ChannelRealization r = draw_realization(3, cfg, 8.0, crng);
  Var zt = transmit_through(t, zn, r);
  SymbolBlock sb = apply_realization(nb, r);
  std::vector<double> expect2 = unpack_features(sb, 5);
  for (int i = 0; i < 5; ++i) CHECK(t.val(zt)(i, 0) == Catch::Approx(expect2[i]).epsilon(1e-12));
}

TEST_CASE("transmit_through gradient matches finite differences") {
  auto rng = derive_stream(17, 11);
  Mat z(6, 1);
  for (int i = 0; i < 6; ++i) z(i, 0) = gaussian(rng) + 2.0;  // keep power away from 0
  ChannelConfig cfg;
  cfg.family = ChannelFamily::rayleigh;
  cfg.equalization = Equalization::none;
  auto crng = derive_stream(17, 12);
  ChannelRealization r = draw_realization(3, cfg, 6.0, crng);

  auto loss_of = [&](const Mat& in) {
    Tape t;
    Var v = t.leaf(in);
    Var y = transmit_through(t, unit_power_normalize(t, v), r);
    return std::pair<double, Mat>(t.val(ad::sum_all(t, ad::cmul(t, y, y)))(0, 0), Mat());
  };
  Tape t;
  Var v = t.leaf(z);
  Var y = transmit_through(t, unit_power_normalize(t, v), r);
  Var loss = ad::sum_all(t, ad::cmul(t, y, y));
  t.backward(loss);
  const double h = 1e-6;
  for (int i = 0; i < 6; ++i) {
    Mat zp = z, zm = z;
    zp(i, 0) += h;
    zm(i, 0) -= h;
    const double fd = (loss_of(zp).first - loss_of(zm).first) / (2 * h);
    CHECK(std::abs(fd - t.grad(v)(i, 0)) < 1e-5 * std::max(1.0, std::abs(fd)));
  }
}

TEST_CASE("unit_power_normalize rejects degenerate blocks") {
  Tape t;
  CHECK_THROWS_AS(unit_power_normalize(t, t.leaf(Mat::Zero(4, 1))), std::invalid_argument);
  CHECK_THROWS_AS(unit_power_normalize(t, t.leaf(Mat(0, 1))), std::invalid_argument);
}
