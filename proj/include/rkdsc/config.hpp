#pragma once

#include <json.hpp>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "rkdsc/cat.hpp"
#include "rkdsc/channel.hpp"
#include "rkdsc/data.hpp"
#include "rkdsc/kdl_darts.hpp"
#include "rkdsc/rkd.hpp"
#include "rkdsc/util.hpp"

namespace rkdsc {

using nlohmann::json;

struct DataSpec {
  std::string kind = "synthetic";  // synthetic | cifar10
  std::string root;                // corpus root for cifar10
  int num_classes = 4;
  int samples_per_class = 120;
  std::vector<int> input_shape = {8, 8, 1};
  std::string difficulty = "easy";
  SplitFractions search_split{0.45, 0.45, 0.10};
  SplitFractions distill_split{0.8, 0.1, 0.1};

  int input_dim() const {
    int d = 1;
    for (int s : input_shape) d *= s;
    return d;
  }
};

struct SearchSpaceCfg {
  int width = 24;
  int num_layers = 3;
  int max_blocks = 3;
  int feature_dim = 24;
  double t_alpha = 1.0;
  double t_beta = 2.0;
};

struct EvalSpec {
  std::vector<double> snrs = {-10, -5, 0, 5, 10, 15, 20, 25};
  int trials = 10;
  std::vector<double> ratios = {0.8, 0.2, 0.1};
  double ablation_snr_db = 10.0;
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::string out_dir = "runs";
  DataSpec data;
  SearchSpaceCfg search_space;
  SearchConfig search;
  CatConfig cat;
  TrainPlan plan;
  ChannelConfig channel;
  EvalSpec eval;
  int teacher_hidden = 96;
  int decoder_hidden = 32;
  std::string digest;  // stable hash of the effective config

  SearchSpaceSpec space_spec(int input_dim) const {
    SearchSpaceSpec s = default_search_space(input_dim, search_space.width,
                                             search_space.feature_dim,
                                             search_space.num_layers,
                                             search_space.max_blocks);
    s.t_alpha = search_space.t_alpha;
    s.t_beta = search_space.t_beta;
    return s;
  }
};

namespace detail {

inline void check_keys(const json& obj, const std::string& where,
                       const std::set<std::string>& allowed) {
  if (!obj.is_object()) throw std::invalid_argument("config: " + where + " must be an object");
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!allowed.count(it.key()))
      throw std::invalid_argument("config: unknown key '" + it.key() + "' in " + where);
}

inline SplitFractions parse_split(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3)
    throw std::invalid_argument("config: " + where + " must be [train, val, test]");
  return SplitFractions{j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline LrSpec parse_lr(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 2)
    throw std::invalid_argument("config: " + where + " must be [initial, final]");
  return LrSpec{j[0].get<double>(), j[1].get<double>()};
}

template <typename T>
void maybe(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

}  // namespace detail

inline json canonical_json(const ExperimentConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["out_dir"] = c.out_dir;
  j["data"] = {{"kind", c.data.kind},
               {"root", c.data.root},
               {"num_classes", c.data.num_classes},
               {"samples_per_class", c.data.samples_per_class},
               {"input_shape", c.data.input_shape},
               {"difficulty", c.data.difficulty},
               {"search_split", {c.data.search_split.train, c.data.search_split.val, c.data.search_split.test}},
               {"distill_split", {c.data.distill_split.train, c.data.distill_split.val, c.data.distill_split.test}}};
  j["search_space"] = {{"width", c.search_space.width},
                       {"num_layers", c.search_space.num_layers},
                       {"max_blocks", c.search_space.max_blocks},
                       {"feature_dim", c.search_space.feature_dim},
                       {"t_alpha", c.search_space.t_alpha},
                       {"t_beta", c.search_space.t_beta}};
  j["search"] = {{"lambda_j", c.search.lambda_j},
                 {"xi", c.search.xi},
                 {"k_select", c.search.k_select},
                 {"epochs", c.search.epochs},
                 {"batch_size", c.search.batch_size},
                 {"lr_alpha", {c.search.lr_alpha.initial, c.search.lr_alpha.final_}},
                 {"lr_theta", {c.search.lr_theta.initial, c.search.lr_theta.final_}},
                 {"weight_decay_alpha", c.search.weight_decay_alpha},
                 {"weight_decay_theta", c.search.weight_decay_theta},
                 {"approx_mode", c.search.approx_mode == ApproxMode::first_order ? "first_order" : "unrolled"},
                 {"lambda_kd", c.search.lambda_kd}};
  j["cat"] = {{"embed_dim", c.cat.embed_dim},
              {"num_heads", c.cat.num_heads},
              {"ffn_hidden", c.cat.ffn_hidden},
              {"compression_ratio", c.cat.compression_ratio},
              {"encoder_blocks", c.cat.encoder_blocks},
              {"decoder_blocks", c.cat.decoder_blocks},
              {"snr_embed_hidden", c.cat.snr_embed_hidden},
              {"tokens", c.cat.tokens}};
  j["plan"] = {{"stage1",
                {{"epochs", c.plan.stage1.epochs},
                 {"lr", {c.plan.stage1.lr.initial, c.plan.stage1.lr.final_}},
                 {"batch_size", c.plan.stage1.batch_size}}},
               {"stage2",
                {{"epochs", c.plan.stage2.epochs},
                 {"lr", {c.plan.stage2.lr.initial, c.plan.stage2.lr.final_}},
                 {"batch_size", c.plan.stage2.batch_size},
                 {"snr_range", {c.plan.stage2.snr_range.lo, c.plan.stage2.snr_range.hi}},
                 {"lambda_kd", c.plan.stage2.lambda_kd},
                 {"lambda_re", c.plan.stage2.lambda_re},
                 {"lambda_task", c.plan.stage2.lambda_task}}}};
  j["channel"] = {{"family", c.channel.family == ChannelFamily::awgn ? "awgn" : "rayleigh"},
                  {"snr_db", {c.channel.snr_db.lo, c.channel.snr_db.hi}},
                  {"fading_granularity",
                   c.channel.fading_granularity == FadingGranularity::per_block ? "per_block" : "per_symbol"},
                  {"equalization",
                   c.channel.equalization == Equalization::perfect_csi ? "perfect_csi" : "none"},
                  {"seed", c.channel.seed}};
  j["eval"] = {{"snrs", c.eval.snrs},
               {"trials", c.eval.trials},
               {"ratios", c.eval.ratios},
               {"ablation_snr_db", c.eval.ablation_snr_db}};
  j["teacher_hidden"] = c.teacher_hidden;
  j["decoder_hidden"] = c.decoder_hidden;
  return j;
}

inline void apply_preset(ExperimentConfig& c, const std::string& preset) {
  if (preset == "toy") return;  // the defaults
  if (preset == "cifar10-like") {
    c.data.num_classes = 10;
    c.data.samples_per_class = 80;
    c.cat.compression_ratio = 0.8;
    return;
  }
  if (preset == "cifar100-like") {
    c.data.num_classes = 20;
    c.data.samples_per_class = 40;
    c.cat.compression_ratio = 0.2;
    return;
  }
  throw std::invalid_argument("config: unknown preset '" + preset + "'");
}

inline ExperimentConfig config_from_json(const json& root) {
  using detail::check_keys;
  using detail::maybe;
  check_keys(root, "top level",
             {"preset", "seed", "out_dir", "data", "search_space", "search", "cat",
              "plan", "channel", "eval", "teacher_hidden", "decoder_hidden"});
  ExperimentConfig c;
  c.cat.num_heads = 4;
  c.cat.compression_ratio = 0.25;
  c.cat.snr_embed_hidden = 16;
  if (root.contains("preset")) apply_preset(c, root.at("preset").get<std::string>());
  maybe(root, "seed", c.seed);
  maybe(root, "out_dir", c.out_dir);
  maybe(root, "teacher_hidden", c.teacher_hidden);
  maybe(root, "decoder_hidden", c.decoder_hidden);

  if (root.contains("data")) {
    const json& d = root.at("data");
    check_keys(d, "data",
               {"kind", "root", "num_classes", "samples_per_class", "input_shape",
                "difficulty", "search_split", "distill_split"});
    maybe(d, "kind", c.data.kind);
    maybe(d, "root", c.data.root);
    maybe(d, "num_classes", c.data.num_classes);
    maybe(d, "samples_per_class", c.data.samples_per_class);
    maybe(d, "input_shape", c.data.input_shape);
    maybe(d, "difficulty", c.data.difficulty);
    if (d.contains("search_split")) c.data.search_split = detail::parse_split(d.at("search_split"), "data.search_split");
    if (d.contains("distill_split")) c.data.distill_split = detail::parse_split(d.at("distill_split"), "data.distill_split");
    if (c.data.kind != "synthetic" && c.data.kind != "cifar10")
      throw std::invalid_argument("config: data.kind must be 'synthetic' or 'cifar10'");
    if (c.data.difficulty != "trivial" && c.data.difficulty != "easy" && c.data.difficulty != "medium")
      throw std::invalid_argument("config: data.difficulty must be trivial|easy|medium");
  }

  if (root.contains("search_space")) {
    const json& s = root.at("search_space");
    check_keys(s, "search_space",
               {"width", "num_layers", "max_blocks", "feature_dim", "t_alpha", "t_beta"});
    maybe(s, "width", c.search_space.width);
    maybe(s, "num_layers", c.search_space.num_layers);
    maybe(s, "max_blocks", c.search_space.max_blocks);
    maybe(s, "feature_dim", c.search_space.feature_dim);
    maybe(s, "t_alpha", c.search_space.t_alpha);
    maybe(s, "t_beta", c.search_space.t_beta);
  }
  // cat dimensions track the encoder feature dimension unless overridden
  c.cat.embed_dim = c.search_space.feature_dim;
  c.cat.ffn_hidden = 2 * c.search_space.feature_dim;

  if (root.contains("search")) {
    const json& s = root.at("search");
    check_keys(s, "search",
               {"lambda_j", "xi", "k_select", "epochs", "batch_size", "lr_alpha",
                "lr_theta", "weight_decay_alpha", "weight_decay_theta", "approx_mode",
                "lambda_kd"});
    maybe(s, "lambda_j", c.search.lambda_j);
    maybe(s, "xi", c.search.xi);
    maybe(s, "k_select", c.search.k_select);
    maybe(s, "epochs", c.search.epochs);
    maybe(s, "batch_size", c.search.batch_size);
    if (s.contains("lr_alpha")) c.search.lr_alpha = detail::parse_lr(s.at("lr_alpha"), "search.lr_alpha");
    if (s.contains("lr_theta")) c.search.lr_theta = detail::parse_lr(s.at("lr_theta"), "search.lr_theta");
    maybe(s, "weight_decay_alpha", c.search.weight_decay_alpha);
    maybe(s, "weight_decay_theta", c.search.weight_decay_theta);
    maybe(s, "lambda_kd", c.search.lambda_kd);
    if (s.contains("approx_mode")) {
      const std::string m = s.at("approx_mode").get<std::string>();
      if (m == "first_order")
        c.search.approx_mode = ApproxMode::first_order;
      else if (m == "unrolled")
        c.search.approx_mode = ApproxMode::unrolled;
      else
        throw std::invalid_argument("config: search.approx_mode must be first_order|unrolled");
    }
  }

  if (root.contains("cat")) {
    const json& s = root.at("cat");
    check_keys(s, "cat",
               {"embed_dim", "num_heads", "ffn_hidden", "compression_ratio",
                "encoder_blocks", "decoder_blocks", "snr_embed_hidden", "tokens"});
    maybe(s, "embed_dim", c.cat.embed_dim);
    maybe(s, "num_heads", c.cat.num_heads);
    maybe(s, "ffn_hidden", c.cat.ffn_hidden);
    maybe(s, "compression_ratio", c.cat.compression_ratio);
    maybe(s, "encoder_blocks", c.cat.encoder_blocks);
    maybe(s, "decoder_blocks", c.cat.decoder_blocks);
    maybe(s, "snr_embed_hidden", c.cat.snr_embed_hidden);
    maybe(s, "tokens", c.cat.tokens);
  }

  if (root.contains("plan")) {
    const json& p = root.at("plan");
    check_keys(p, "plan", {"stage1", "stage2"});
    if (p.contains("stage1")) {
      const json& s = p.at("stage1");
      check_keys(s, "plan.stage1", {"epochs", "lr", "batch_size"});
      maybe(s, "epochs", c.plan.stage1.epochs);
      if (s.contains("lr")) c.plan.stage1.lr = detail::parse_lr(s.at("lr"), "plan.stage1.lr");
      maybe(s, "batch_size", c.plan.stage1.batch_size);
    }
    if (p.contains("stage2")) {
      const json& s = p.at("stage2");
      check_keys(s, "plan.stage2",
                 {"epochs", "lr", "batch_size", "snr_range", "lambda_kd", "lambda_re", "lambda_task"});
      maybe(s, "epochs", c.plan.stage2.epochs);
      if (s.contains("lr")) c.plan.stage2.lr = detail::parse_lr(s.at("lr"), "plan.stage2.lr");
      maybe(s, "batch_size", c.plan.stage2.batch_size);
      if (s.contains("snr_range")) {
        const json& r = s.at("snr_range");
        if (!r.is_array() || r.size() != 2)
          throw std::invalid_argument("config: plan.stage2.snr_range must be [lo, hi]");
        c.plan.stage2.snr_range = SnrRange{r[0].get<double>(), r[1].get<double>()};
      }
      maybe(s, "lambda_kd", c.plan.stage2.lambda_kd);
      maybe(s, "lambda_re", c.plan.stage2.lambda_re);
      maybe(s, "lambda_task", c.plan.stage2.lambda_task);
    }
  }
  c.plan.seed = c.seed;

  if (root.contains("channel")) {
    const json& s = root.at("channel");
    check_keys(s, "channel", {"family", "snr_db", "fading_granularity", "equalization", "seed"});
    if (s.contains("family")) {
      const std::string f = s.at("family").get<std::string>();
      if (f == "awgn")
        c.channel.family = ChannelFamily::awgn;
      else if (f == "rayleigh")
        c.channel.family = ChannelFamily::rayleigh;
      else
        throw std::invalid_argument("config: channel.family must be awgn|rayleigh");
    }
    if (s.contains("snr_db")) {
      const json& r = s.at("snr_db");
      if (r.is_number()) {
        c.channel.snr_db = SnrRange{r.get<double>(), r.get<double>()};
      } else if (r.is_array() && r.size() == 2) {
        c.channel.snr_db = SnrRange{r[0].get<double>(), r[1].get<double>()};
      } else {
        throw std::invalid_argument("config: channel.snr_db must be a scalar or [lo, hi]");
      }
    }
    if (s.contains("fading_granularity")) {
      const std::string f = s.at("fading_granularity").get<std::string>();
      if (f == "per_block")
        c.channel.fading_granularity = FadingGranularity::per_block;
      else if (f == "per_symbol")
        c.channel.fading_granularity = FadingGranularity::per_symbol;
      else
        throw std::invalid_argument("config: channel.fading_granularity must be per_block|per_symbol");
    }
    if (s.contains("equalization")) {
      const std::string e = s.at("equalization").get<std::string>();
      if (e == "perfect_csi")
        c.channel.equalization = Equalization::perfect_csi;
      else if (e == "none")
        c.channel.equalization = Equalization::none;
      else
        throw std::invalid_argument("config: channel.equalization must be perfect_csi|none");
    }
    maybe(s, "seed", c.channel.seed);
  }

  if (root.contains("eval")) {
    const json& s = root.at("eval");
    check_keys(s, "eval", {"snrs", "trials", "ratios", "ablation_snr_db"});
    maybe(s, "snrs", c.eval.snrs);
    maybe(s, "trials", c.eval.trials);
    maybe(s, "ratios", c.eval.ratios);
    maybe(s, "ablation_snr_db", c.eval.ablation_snr_db);
  }

  // cross-field consistency
  c.channel.snr_db.validate();
  c.plan.validate();
  c.cat.validate();
  if (c.cat.embed_dim != c.search_space.feature_dim)
    throw std::invalid_argument(
        "config: cat.embed_dim (" + std::to_string(c.cat.embed_dim) +
        ") must equal search_space.feature_dim (" +
        std::to_string(c.search_space.feature_dim) + ")");
  if (c.search.k_select > c.search_space.max_blocks)
    throw std::invalid_argument("config: search.k_select exceeds candidate count");
  if (c.data.kind == "cifar10" && c.data.root.empty())
    throw std::invalid_argument("config: data.root required for cifar10");

  Fnv1a h;
  h.update(canonical_json(c).dump());
  c.digest = hex64(h.digest());
  return c;
}

inline ExperimentConfig parse_config(const std::string& path) {
  json root;
  try {
    root = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("config parse error in " + path + ": " + e.what());
  }
  return config_from_json(root);
}

}  // namespace rkdsc
