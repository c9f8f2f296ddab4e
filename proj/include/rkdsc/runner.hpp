#pragma once

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "rkdsc/artifacts.hpp"
#include "rkdsc/config.hpp"
#include "rkdsc/eval.hpp"

namespace rkdsc {

namespace fs = std::filesystem;

// Deterministic stream tags, one per purpose.
namespace stream_tag {
constexpr std::uint64_t teacher = 0x7EAC;
constexpr std::uint64_t supernet = 0x50BE;
constexpr std::uint64_t pipeline = 0xB1BE;
constexpr std::uint64_t data = 0xDA7A0;
}  // namespace stream_tag

struct RunPaths {
  std::string dir;
  std::string architecture() const { return dir + "/architecture.txt"; }
  std::string search_log() const { return dir + "/search_log.csv"; }
  std::string ckpt_stage1() const { return dir + "/checkpoint_stage1.bin"; }
  std::string ckpt_stage2() const { return dir + "/checkpoint_stage2.bin"; }
  std::string stage1_log() const { return dir + "/train_log_stage1.csv"; }
  std::string stage2_log() const { return dir + "/train_log_stage2.csv"; }
  std::string sweep_csv() const { return dir + "/sweep.csv"; }
  std::string sweep_svg() const { return dir + "/sweep.svg"; }
  std::string ablation_csv() const { return dir + "/ablation.csv"; }
  std::string ablation_svg() const { return dir + "/ablation.svg"; }
  std::string cost_report() const { return dir + "/cost_report.txt"; }
  std::string manifest() const { return dir + "/manifest.txt"; }
};

class Runner {
 public:
  explicit Runner(ExperimentConfig cfg) : cfg_(std::move(cfg)) {
    paths_.dir = cfg_.out_dir + "/run-" + cfg_.digest + "-s" + std::to_string(cfg_.seed);
    fs::create_directories(paths_.dir);
  }

  const RunPaths& paths() const { return paths_; }
  const ExperimentConfig& config() const { return cfg_; }

  void run(const std::string& command) {
    if (command == "search")
      cmd_search();
    else if (command == "distill")
      cmd_distill();
    else if (command == "train")
      cmd_train();
    else if (command == "eval")
      cmd_eval();
    else if (command == "ablate")
      cmd_ablate();
    else if (command == "all") {
      cmd_search();
      cmd_distill();
      cmd_train();
      cmd_eval();
      cmd_ablate();
    } else {
      throw std::invalid_argument("unknown command: " + command);
    }
  }

  void cmd_search() {
    Dataset ds = base_dataset();
    Splits splits = split(ds, cfg_.data.search_split, cfg_.seed);
    normalize_with_train_stats(splits);
    SearchSpaceSpec spec = cfg_.space_spec(static_cast<int>(ds.dim()));
    Teacher teacher = make_teacher(static_cast<int>(ds.dim()));
    RngStream net_rng = derive_stream(cfg_.seed, stream_tag::supernet);
    const int steps = cfg_.search.epochs *
                      static_cast<int>((splits.train.size() + cfg_.search.batch_size - 1) /
                                       cfg_.search.batch_size);
    SearchState st = make_search_state(spec, ds.num_classes, teacher.fn(), cfg_.search,
                                       std::max(1, steps), net_rng);
    SearchResult result = search(st, splits, cfg_.search, cfg_.seed);
    result.arch.config_digest = cfg_.digest;
    write_text_file(paths_.architecture(), architecture_to_text(result.arch));
    write_text_file(paths_.search_log(), search_log_to_csv(result.log));
    std::cout << "search: wrote " << paths_.architecture() << "\n";
    write_manifest(ds);
  }

  void cmd_distill() {
    DiscreteArchitecture arch = require_architecture();
    Dataset ds = base_dataset();
    Splits splits = split(ds, cfg_.data.distill_split, cfg_.seed);
    normalize_with_train_stats(splits);
    Teacher teacher = make_teacher(static_cast<int>(ds.dim()));
    PipelineState p = build_pipeline(arch, ds);
    std::vector<double> log = stage1_distill(p, teacher, splits.train, cfg_.plan);
    save_checkpoint(paths_.ckpt_stage1(), p.store, cfg_.digest, cfg_.seed);
    write_text_file(paths_.stage1_log(), stage1_log_to_csv(log));
    std::cout << "distill: wrote " << paths_.ckpt_stage1() << "\n";
    write_manifest(ds);
  }

  void cmd_train() {
    DiscreteArchitecture arch = require_architecture();
    Dataset ds = base_dataset();
    Splits splits = split(ds, cfg_.data.distill_split, cfg_.seed);
    normalize_with_train_stats(splits);
    Teacher teacher = make_teacher(static_cast<int>(ds.dim()));
    PipelineState p = build_pipeline(arch, ds);
    if (!fs::exists(paths_.ckpt_stage1()))
      throw std::runtime_error("train requires the stage-1 checkpoint; expected file: " +
                               paths_.ckpt_stage1() + " (run `rkdsc distill` first)");
    load_checkpoint(paths_.ckpt_stage1(), p.store);
    auto log = stage2_joint_train(p, teacher, splits.train, cfg_.plan, cfg_.channel);
    save_checkpoint(paths_.ckpt_stage2(), p.store, cfg_.digest, cfg_.seed);
    write_text_file(paths_.stage2_log(), stage2_log_to_csv(log));
    CostReport cost = param_flop_report(p);
    std::ostringstream cr;
    cr << "rkdsc cost report (MAC = 2 FLOPs convention)\n";
    cr << "param_count " << cost.param_count << "\n";
    cr << "flops_per_forward " << cost.flop_estimate << "\n";
    cr << "transmitted_dim " << p.transmitted_dim() << "\n";
    write_text_file(paths_.cost_report(), cr.str());
    std::cout << "train: wrote " << paths_.ckpt_stage2() << "\n";
    write_manifest(ds);
  }

  void cmd_eval() {
    DiscreteArchitecture arch = require_architecture();
    Dataset ds = base_dataset();
    Splits splits = split(ds, cfg_.data.distill_split, cfg_.seed);
    normalize_with_train_stats(splits);
    Teacher teacher = make_teacher(static_cast<int>(ds.dim()));
    PipelineState p = build_pipeline(arch, ds);
    if (!fs::exists(paths_.ckpt_stage2()))
      throw std::runtime_error("eval requires the stage-2 checkpoint; expected file: " +
                               paths_.ckpt_stage2() + " (run `rkdsc train` first)");
    load_checkpoint(paths_.ckpt_stage2(), p.store);
    SweepResult sweep = snr_sweep(p, &teacher, cfg_.eval.snrs, splits.test, cfg_.channel,
                                  cfg_.eval.trials, cfg_.seed);
    write_text_file(paths_.sweep_csv(), sweep_to_csv(sweep));
    PlotSeries s;
    s.label = cfg_.channel.family == ChannelFamily::awgn ? "AWGN" : "Rayleigh";
    for (const auto& row : sweep.rows) {
      s.x.push_back(row.snr_db);
      s.y.push_back(row.accuracy);
    }
    write_text_file(paths_.sweep_svg(),
                    line_plot_svg("Accuracy vs SNR", "SNR (dB)", "top-1 accuracy", {s}));
    std::cout << "eval: wrote " << paths_.sweep_csv() << "\n";
    write_manifest(ds);
  }

  void cmd_ablate() {
    DiscreteArchitecture arch = require_architecture();
    Dataset ds = base_dataset();
    Splits splits = split(ds, cfg_.data.distill_split, cfg_.seed);
    normalize_with_train_stats(splits);
    Teacher teacher = make_teacher(static_cast<int>(ds.dim()));
    auto factory = [&](double ratio) {
      ExperimentConfig c = cfg_;
      c.cat.compression_ratio = ratio;
      RngStream rng = derive_stream(cfg_.seed, stream_tag::pipeline);
      SearchSpaceSpec spec = c.space_spec(static_cast<int>(ds.dim()));
      PipelineState p = make_pipeline(spec, arch, c.cat, ds.num_classes, c.decoder_hidden,
                                      true, rng);
      stage1_distill(p, teacher, splits.train, c.plan);
      stage2_joint_train(p, teacher, splits.train, c.plan, c.channel);
      return p;
    };
    auto table = compression_ablation(factory, cfg_.eval.ratios, cfg_.eval.ablation_snr_db,
                                      splits.test, cfg_.channel, cfg_.eval.trials, cfg_.seed);
    write_text_file(paths_.ablation_csv(), ablation_to_csv(table));
    PlotSeries s;
    s.label = "accuracy";
    for (const auto& row : table) {
      s.x.push_back(row.ratio);
      s.y.push_back(row.accuracy);
    }
    write_text_file(paths_.ablation_svg(),
                    line_plot_svg("Accuracy vs compression ratio", "compression ratio",
                                  "top-1 accuracy", {s}));
    std::cout << "ablate: wrote " << paths_.ablation_csv() << "\n";
    write_manifest(ds);
  }

  Dataset base_dataset() const {
    if (cfg_.data.kind == "cifar10") return load_small_corpus("cifar10", cfg_.data.root);
    SyntheticSpec spec;
    spec.num_classes = cfg_.data.num_classes;
    spec.samples_per_class = cfg_.data.samples_per_class;
    spec.input_shape = cfg_.data.input_shape;
    if (cfg_.data.difficulty == "trivial")
      spec.difficulty = Difficulty::trivial;
    else if (cfg_.data.difficulty == "medium")
      spec.difficulty = Difficulty::medium;
    else
      spec.difficulty = Difficulty::easy;
    return make_synthetic(spec, splitmix64(cfg_.seed) ^ stream_tag::data);
  }

  Teacher make_teacher(int input_dim) const {
    RngStream rng = derive_stream(cfg_.seed, stream_tag::teacher);
    return Teacher::create(input_dim, cfg_.teacher_hidden, cfg_.search_space.feature_dim, rng);
  }

  PipelineState build_pipeline(const DiscreteArchitecture& arch, const Dataset& ds) const {
    RngStream rng = derive_stream(cfg_.seed, stream_tag::pipeline);
    SearchSpaceSpec spec = cfg_.space_spec(static_cast<int>(ds.dim()));
    return make_pipeline(spec, arch, cfg_.cat, ds.num_classes, cfg_.decoder_hidden, true, rng);
  }

 private:
  DiscreteArchitecture require_architecture() const {
    if (!fs::exists(paths_.architecture()))
      throw std::runtime_error("this command requires an architecture file; expected file: " +
                               paths_.architecture() + " (run `rkdsc search` first)");
    return architecture_from_text(read_text_file(paths_.architecture()));
  }

  void write_manifest(const Dataset& ds) const {
    std::ostringstream os;
    os << "rkdsc run manifest\n";
    os << "config_digest " << cfg_.digest << "\n";
    os << "seed " << cfg_.seed << "\n";
    os << "dataset_digest " << hex64(ds.digest) << "\n";
    os << "artifacts:\n";
    for (const auto& f :
         {paths_.architecture(), paths_.search_log(), paths_.ckpt_stage1(),
          paths_.stage1_log(), paths_.ckpt_stage2(), paths_.stage2_log(),
          paths_.sweep_csv(), paths_.sweep_svg(), paths_.ablation_csv(),
          paths_.ablation_svg(), paths_.cost_report()})
      if (fs::exists(f)) os << "  " << fs::path(f).filename().string() << " " << hex64(file_digest(f)) << "\n";
    write_text_file(paths_.manifest(), os.str());
  }

  ExperimentConfig cfg_;
  RunPaths paths_;
};

}  // namespace rkdsc
