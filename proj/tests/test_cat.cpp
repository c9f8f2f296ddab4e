#include <catch_amalgamated.hpp>

#include "rkdsc/cat.hpp"

using namespace rkdsc;

namespace {

CatConfig toy_cfg() {
  CatConfig c;
  c.embed_dim = 8;
  c.num_heads = 2;
  c.ffn_hidden = 12;
  c.compression_ratio = 0.25;  // compressed 6
  c.encoder_blocks = 1;
  c.decoder_blocks = 2;
  c.snr_embed_hidden = 5;
  c.tokens = 2;  // token dim 4, head dim 2
  return c;
}

Mat random_col(int n, RngStream& rng) {
  Mat m(n, 1);
  for (int i = 0; i < n; ++i) m(i, 0) = gaussian(rng);
  return m;
}

}  // namespace

TEST_CASE("compressed_dim matches the published table") {
  CHECK(compressed_dim(512, 0.8) == 102);
  CHECK(compressed_dim(512, 0.2) == 409);
  CHECK(compressed_dim(512, 0.1) == 460);
  CHECK(compressed_dim(512, 0.0) == 512);
  CHECK(compressed_dim(10, 0.95) == 1);  // floor would be 0; clamped
  CHECK_THROWS_AS(compressed_dim(512, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(compressed_dim(512, -0.1), std::invalid_argument);
  CHECK_THROWS_AS(compressed_dim(0, 0.5), std::invalid_argument);
}

TEST_CASE("config validation") {
  CatConfig c = toy_cfg();
  c.tokens = 3;  // 8 % 3 != 0
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = toy_cfg();
  c.num_heads = 3;  // token dim 4 % 3 != 0
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = toy_cfg();
  c.ffn_hidden = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("snr embedding shape, range and distinctness") {
  ParamStore ps;
  auto rng = derive_stream(51, 1);
  SnrEmbed e = SnrEmbed::create(ps, "snr", 5, 3, rng);
  Tape t;
  auto pv = bind_params(t, ps);
  Var v0 = e.forward(t, pv, 0.0);
  Var v20 = e.forward(t, pv, 20.0);
  CHECK(t.val(v0).rows() == 3);
  CHECK(t.val(v0).cols() == 1);
  CHECK(t.val(v0).minCoeff() > 0.0);
  CHECK(t.val(v0).maxCoeff() < 1.0);
  CHECK((t.val(v0) - t.val(v20)).cwiseAbs().maxCoeff() > 0.0);

  SnrEmbed none = SnrEmbed::create(ps, "none", 5, 0, rng);
  CHECK(none.param_count() == 0);
}

TEST_CASE("encoder/decoder shape laws") {
  CatConfig cfg = toy_cfg();
  ParamStore ps;
  auto rng = derive_stream(52, 2);
  CatEncoder enc = CatEncoder::create(ps, "enc", cfg, rng);
  CatDecoder dec = CatDecoder::create(ps, "dec", cfg, rng);
  CHECK(enc.output_dim() == compressed_dim(8, 0.25));

  auto drng = derive_stream(52, 3);
  Tape t;
  auto pv = bind_params(t, ps);
  Var h = t.leaf(random_col(8, drng));
  Var z = enc.forward(t, pv, h, 10.0);
  CHECK(t.val(z).rows() == 6);
  Var back = dec.forward(t, pv, z, 10.0);
  CHECK(t.val(back).rows() == 8);

  // non-final block keeps embed_dim, final block compresses
  CHECK(enc.blocks.back().is_final);
  CHECK(dec.blocks.size() == 2);
  for (const auto& b : dec.blocks) CHECK_FALSE(b.is_final);

  CHECK_THROWS_AS(dec.forward(t, pv, h, 10.0), std::invalid_argument);  // wrong dim
}

TEST_CASE("ratio 0 degenerates to a plain FFN block output") {
  CatConfig cfg = toy_cfg();
  cfg.compression_ratio = 0.0;  // compressed == embed, snr embed length 0
  ParamStore ps;
  auto rng = derive_stream(53, 4);
  CatBlock b = CatBlock::create(ps, "b", cfg, false, rng);
  CHECK(b.out_dim == 8);
  CHECK(b.snr.out_dim == 0);
  Tape t;
  auto pv = bind_params(t, ps);
  auto drng = derive_stream(53, 5);
  Var out = b.forward(t, pv, t.leaf(random_col(8, drng)), 7.0);
  CHECK(t.val(out).rows() == 8);
}

TEST_CASE("parameter counts agree with the store") {
  CatConfig cfg = toy_cfg();
  ParamStore ps;
  auto rng = derive_stream(54, 6);
  CatEncoder enc = CatEncoder::create(ps, "enc", cfg, rng);
  CatDecoder dec = CatDecoder::create(ps, "dec", cfg, rng);
  CHECK(enc.param_count() == ps.scalar_count(enc.params));
  CHECK(dec.param_count() == ps.scalar_count(dec.params));
  CHECK(enc.flops() > 0);
  CHECK(dec.flops() > enc.flops());  // two blocks plus the lift
}

TEST_CASE("SNR conditioning is live through encoder and decoder") {
  CatConfig cfg = toy_cfg();
  cfg.encoder_blocks = 2;  // first encoder block is non-final, so SNR enters
  ParamStore ps;
  auto rng = derive_stream(55, 7);
  CatEncoder enc = CatEncoder::create(ps, "enc", cfg, rng);
  CatDecoder dec = CatDecoder::create(ps, "dec", cfg, rng);
  auto drng = derive_stream(55, 8);
  Mat h = random_col(8, drng);
  Tape t;
  auto pv = bind_params(t, ps);
  Var z0 = enc.forward(t, pv, t.leaf(h), 0.0);
  Var z20 = enc.forward(t, pv, t.leaf(h), 20.0);
  CHECK((t.val(z0) - t.val(z20)).cwiseAbs().maxCoeff() > 0.0);
  Var d0 = dec.forward(t, pv, z0, 0.0);
  Var d20 = dec.forward(t, pv, z0, 20.0);
  CHECK((t.val(d0) - t.val(d20)).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("cat block gradients match finite differences") {
  CatConfig cfg = toy_cfg();
  ParamStore ps;
  auto rng = derive_stream(56, 9);
  CatEncoder enc = CatEncoder::create(ps, "enc", cfg, rng);
  CatDecoder dec = CatDecoder::create(ps, "dec", cfg, rng);
  auto drng = derive_stream(56, 10);
  Mat h = random_col(8, drng);

  auto loss_value = [&]() {
    Tape t;
    auto pv = bind_params(t, ps);
    Var z = enc.forward(t, pv, t.leaf(h), 9.0);
    Var out = dec.forward(t, pv, z, 9.0);
    Var loss = ad::sum_all(t, ad::cmul(t, out, out));
    return t.val(loss)(0, 0);
  };

  Tape t;
  auto pv = bind_params(t, ps);
  Var z = enc.forward(t, pv, t.leaf(h), 9.0);
  Var out = dec.forward(t, pv, z, 9.0);
  Var loss = ad::sum_all(t, ad::cmul(t, out, out));
  t.backward(loss);

  // sample a handful of entries from every parameter tensor
  const double hstep = 1e-6;
  auto srng = derive_stream(56, 11);
  for (int id = 0; id < ps.count(); ++id) {
    Mat& val = ps.at(id).value;
    for (int pick = 0; pick < 2; ++pick) {
      const Eigen::Index i = static_cast<Eigen::Index>(srng() % val.size());
      const double keep = val.data()[i];
      val.data()[i] = keep + hstep;
      const double up = loss_value();
      val.data()[i] = keep - hstep;
      const double dn = loss_value();
      val.data()[i] = keep;
      const double fd = (up - dn) / (2 * hstep);
      const double an = t.grad(pv[id]).data()[i];
      CHECK(std::abs(fd - an) <= 1e-4 * std::max(1.0, std::abs(fd)));
    }
  }
}
