#include <catch_amalgamated.hpp>

#include "rkdsc/config.hpp"

#include <filesystem>

using namespace rkdsc;

TEST_CASE("defaults fill in and the digest is stable") {
  json j = json::object();
  ExperimentConfig a = config_from_json(j);
  ExperimentConfig b = config_from_json(j);
  CHECK(a.digest == b.digest);
  CHECK(a.digest.size() == 16);
  CHECK(a.seed == 1);
  CHECK(a.search.lambda_j == 0.05);
  CHECK(a.plan.stage2.snr_range.lo == 5.0);
  CHECK(a.plan.stage2.snr_range.hi == 20.0);
  CHECK(a.eval.ratios == std::vector<double>{0.8, 0.2, 0.1});
  CHECK(a.cat.embed_dim == a.search_space.feature_dim);
  CHECK(a.channel.family == ChannelFamily::awgn);
}

TEST_CASE("canonical json round trip preserves the digest") {
  json j = {{"seed", 9},
            {"search_space", {{"feature_dim", 16}, {"width", 12}}},
            {"cat", {{"embed_dim", 16}, {"compression_ratio", 0.5}}},
            {"channel", {{"family", "rayleigh"}, {"snr_db", {0.0, 15.0}}}}};
  ExperimentConfig c = config_from_json(j);
  ExperimentConfig c2 = config_from_json(canonical_json(c));
  CHECK(c.digest == c2.digest);
  CHECK(c2.cat.compression_ratio == 0.5);
  CHECK(c2.channel.family == ChannelFamily::rayleigh);
}

TEST_CASE("unknown keys are hard errors") {
  CHECK_THROWS_WITH(config_from_json({{"sede", 1}}),
                    Catch::Matchers::ContainsSubstring("unknown key 'sede'"));
  CHECK_THROWS_WITH(config_from_json({{"search", {{"lambdaj", 0.1}}}}),
                    Catch::Matchers::ContainsSubstring("lambdaj"));
  CHECK_THROWS_WITH(config_from_json({{"cat", {{"head_count", 2}}}}),
                    Catch::Matchers::ContainsSubstring("head_count"));
}

TEST_CASE("dimension mismatch names both fields") {
  json j = {{"search_space", {{"feature_dim", 256}}}, {"cat", {{"embed_dim", 512}}}};
  CHECK_THROWS_WITH(config_from_json(j),
                    Catch::Matchers::ContainsSubstring("cat.embed_dim") &&
                        Catch::Matchers::ContainsSubstring("feature_dim"));
}

TEST_CASE("validation catches bad enum strings and ranges") {
  CHECK_THROWS_AS(config_from_json({{"data", {{"kind", "imagenet"}}}}), std::invalid_argument);
  CHECK_THROWS_AS(config_from_json({{"data", {{"difficulty", "impossible"}}}}),
                  std::invalid_argument);
  CHECK_THROWS_AS(config_from_json({{"channel", {{"family", "rician"}}}}),
                  std::invalid_argument);
  CHECK_THROWS_AS(config_from_json({{"channel", {{"snr_db", {20.0, 5.0}}}}}),
                  std::invalid_argument);
  CHECK_THROWS_AS(config_from_json({{"search", {{"approx_mode", "hessian"}}}}),
                  std::invalid_argument);
  CHECK_THROWS_AS(config_from_json({{"search", {{"k_select", 9}}}}), std::invalid_argument);
  CHECK_THROWS_AS(config_from_json({{"data", {{"kind", "cifar10"}}}}), std::invalid_argument);
  CHECK_THROWS_AS(config_from_json({{"preset", "galaxy"}}), std::invalid_argument);
  CHECK_THROWS_AS(
      config_from_json({{"plan", {{"stage2", {{"lambda_kd", -0.5}}}}}}),
      std::invalid_argument);
}

TEST_CASE("presets map onto toy dimensions") {
  ExperimentConfig toy = config_from_json({{"preset", "toy"}});
  ExperimentConfig c10 = config_from_json({{"preset", "cifar10-like"}});
  ExperimentConfig c100 = config_from_json({{"preset", "cifar100-like"}});
  CHECK(c10.data.num_classes == 10);
  CHECK(c10.cat.compression_ratio == 0.8);
  CHECK(c100.data.num_classes == 20);
  CHECK(c100.cat.compression_ratio == 0.2);
  CHECK(toy.digest != c10.digest);
  CHECK(c10.digest != c100.digest);
}

TEST_CASE("scalar snr_db becomes a degenerate range") {
  ExperimentConfig c = config_from_json({{"channel", {{"snr_db", 10.0}}}});
  CHECK(c.channel.snr_db.lo == 10.0);
  CHECK(c.channel.snr_db.hi == 10.0);
}

TEST_CASE("parse_config reports file and syntax problems") {
  namespace fs = std::filesystem;
  const std::string path = (fs::temp_directory_path() / "rkdsc_cfg_test.json").string();
  write_text_file(path, "{ not json");
  CHECK_THROWS_AS(parse_config(path), std::invalid_argument);
  write_text_file(path, R"({"seed": 4, "out_dir": "runs"})");
  ExperimentConfig c = parse_config(path);
  ExperimentConfig c2 = parse_config(path);
  CHECK(c.seed == 4);
  CHECK(c.digest == c2.digest);
  fs::remove(path);
  CHECK_THROWS_AS(parse_config(path), std::runtime_error);
}

TEST_CASE("seed is threaded into the train plan") {
  ExperimentConfig c = config_from_json({{"seed", 123}});
  CHECK(c.plan.seed == 123);
}
