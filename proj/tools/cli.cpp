// Copyright (c) 2026 The pclprompt Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "cli.hpp"

#include "pclprompt/checkpoint.hpp"
#include "pclprompt/config.hpp"
#include "pclprompt/data.hpp"
#include "pclprompt/export.hpp"
#include "pclprompt/training.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

namespace pclprompt::cli {

namespace {

namespace fs = std::filesystem;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string num(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string pct(double v) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(2) << 100.0 * v;
  return s.str();
}

struct Common {
  std::string config_path;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
};

RunConfig load_config(const Common& common) {
  std::string text;
  std::string name = "config";
  if (!common.config_path.empty()) {
    std::ifstream in(common.config_path, std::ios::binary);
    if (!in) throw UsageError("cannot read config " + common.config_path);
    std::ostringstream ss;
    ss << in.rdbuf();
    text = ss.str();
    name = common.config_path;
  }
  auto overrides = common.sets;
  if (common.seed) overrides.push_back("run.seed=" + std::to_string(*common.seed));
  if (common.threads) overrides.push_back("run.threads=" + std::to_string(*common.threads));
  auto result = parse_config(text, name, overrides);
  if (!result.ok()) {
    std::string msg = "invalid configuration:";
    for (const auto& e : result.errors) msg += "\n  " + e.str();
    throw UsageError(msg);
  }
  return *result.config;
}

fs::path output_dir(const RunConfig& cfg) {
  fs::create_directories(cfg.run.output_dir);
  return cfg.run.output_dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

Manifest dataset_manifest(const RunConfig& cfg) {
  return read_manifest((fs::path(cfg.data_dir) / "manifest.tsv").string());
}

std::vector<PointCloud> split_clouds(const RunConfig& cfg, const std::string& split) {
  auto clouds = load_split(cfg.data_dir, dataset_manifest(cfg), split == "all" ? "" : split);
  if (clouds.empty()) throw std::runtime_error("split '" + split + "' of " + cfg.data_dir + " is empty");
  return clouds;
}

Backbone<float> load_backbone(const RunConfig& cfg) {
  Rng rng(0);
  Backbone<float> backbone(cfg.model, rng);
  ParamStore<float> store;
  backbone.register_params(store);
  restore_checkpoint(load_checkpoint(cfg.backbone_path()), CheckpointRole::Backbone, store);
  return backbone;
}

TunedModel<float> load_tuned(const RunConfig& cfg) {
  auto model = TunedModel<float>::create(load_backbone(cfg), cfg.strategy, cfg.head_config(),
                                         cfg.run.seed);
  ParamStore<float> store;
  model.register_tunables(store);
  restore_checkpoint(load_checkpoint(cfg.tunables_path()), CheckpointRole::Tunables, store);
  return model;
}

// Accuracy per sub-mode plus an "all" row.
std::vector<std::tuple<std::string, std::size_t, double>> breakdown(
    const std::vector<int>& predictions, const std::vector<PointCloud>& samples) {
  std::map<std::string, std::pair<std::size_t, std::size_t>> by;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    auto& [hit, n] = by[samples[i].submode];
    hit += predictions[i] == samples[i].label.value_or(-1);
    ++n;
  }
  std::vector<std::tuple<std::string, std::size_t, double>> rows;
  for (const auto& mode : all_submodes()) {
    const auto it = by.find(submode_name(mode));
    if (it == by.end()) continue;
    rows.emplace_back(it->first, it->second.second,
                      static_cast<double>(it->second.first) / it->second.second);
  }
  rows.emplace_back("all", samples.size(), accuracy(predictions, samples));
  return rows;
}

int cmd_gen_data(const RunConfig& cfg, std::ostream& out) {
  const auto manifest = build_dataset(cfg.data, cfg.data_dir);
  std::size_t train = 0;
  for (const auto& r : manifest.rows) train += r.split == "train";
  out << "wrote " << manifest.rows.size() << " clouds (" << train << " train, "
      << manifest.rows.size() - train << " test) to " << cfg.data_dir << "\n";
  return kOk;
}

int cmd_pretrain(const RunConfig& cfg, std::ostream& out) {
  const auto dir = output_dir(cfg);
  std::vector<PointCloud> clouds;
  for (auto& c : split_clouds(cfg, "train")) {
    if (cfg.pretrain_subset == "all" || c.submode == "clean") clouds.push_back(std::move(c));
  }
  Rng rng(mix_seed(cfg.run.seed, 0xbac4b0e));
  Backbone<float> backbone(cfg.model, rng);
  const auto result = pretrain_mae(backbone, clouds, cfg.pretrain_config());

  ParamStore<float> store;
  backbone.register_params(store);
  save_checkpoint(cfg.backbone_path(),
                  make_checkpoint(CheckpointRole::Backbone, store, render_config(cfg)));

  std::string csv = "epoch,loss\n";
  csv += "0," + num(result.initial_loss) + "\n";
  for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) {
    csv += std::to_string(e + 1) + "," + num(result.epoch_loss[e]) + "\n";
  }
  csv += "final," + num(result.final_loss) + "\n";
  write_text(dir / "pretrain_metrics.csv", csv);

  out << "pretrained on " << clouds.size() << " clouds for " << result.epoch_loss.size()
      << " epochs\n"
      << "  reconstruction loss  initial " << num(result.initial_loss) << "  final "
      << num(result.final_loss) << "\n"
      << "  backbone -> " << cfg.backbone_path() << "\n";
  return kOk;
}

int cmd_tune(const RunConfig& cfg, std::ostream& out) {
  const auto dir = output_dir(cfg);
  const auto train = split_clouds(cfg, "train");
  const auto test = split_clouds(cfg, "test");
  auto model = TunedModel<float>::create(load_backbone(cfg), cfg.strategy, cfg.head_config(),
                                         cfg.run.seed);
  const auto metrics = tune(model, train, test, cfg.tune_config());

  ParamStore<float> store;
  model.register_tunables(store);
  save_checkpoint(cfg.tunables_path(),
                  make_checkpoint(CheckpointRole::Tunables, store, render_config(cfg)));

  std::string csv = "epoch,train_loss,train_acc,test_acc\n";
  csv += "0,,," + num(metrics.initial_test_acc) + "\n";
  for (std::size_t e = 0; e < metrics.epochs.size(); ++e) {
    const auto& m = metrics.epochs[e];
    csv += std::to_string(e + 1) + "," + num(m.train_loss) + "," + num(m.train_acc) + "," +
           num(m.test_acc) + "\n";
  }
  write_text(dir / "tune_metrics.csv", csv);

  const auto counts = count_registry(store);
  out << "strategy " << strategy_name(cfg.strategy.kind) << ", seed " << cfg.run.seed << ", "
      << metrics.epochs.size() << " epochs, " << counts.total_trainable
      << " trainable parameters\n"
      << "  epoch  train_loss  train_acc  test_acc\n";
  for (std::size_t e = 0; e < metrics.epochs.size(); ++e) {
    const auto& m = metrics.epochs[e];
    out << std::setw(7) << e + 1 << std::setw(12) << std::fixed << std::setprecision(4)
        << m.train_loss << std::setw(11) << pct(m.train_acc) << std::setw(10) << pct(m.test_acc)
        << "\n";
  }
  out << "  test accuracy by sub-mode:";
  for (const auto& [mode, n, acc] : breakdown(metrics.test_predictions, test)) {
    out << "  " << mode << " " << pct(acc);
  }
  out << "\n  tunables -> " << cfg.tunables_path() << "\n";
  return kOk;
}

int cmd_eval(const RunConfig& cfg, std::ostream& out) {
  const auto dir = output_dir(cfg);
  const auto samples = split_clouds(cfg, cfg.eval.split);
  const auto model = load_tuned(cfg);
  EvalConfig ec{cfg.eval.votes, cfg.eval.augment, cfg.run.seed, cfg.run.threads};
  const auto predictions = predict(model, samples, ec);

  std::string csv = "split,votes,submode,samples,accuracy\n";
  out << "strategy " << strategy_name(cfg.strategy.kind) << ", split " << cfg.eval.split
      << ", votes " << cfg.eval.votes << "\n"
      << "  submode            samples  accuracy\n";
  for (const auto& [mode, n, acc] : breakdown(predictions, samples)) {
    csv += cfg.eval.split + "," + std::to_string(cfg.eval.votes) + "," + mode + "," +
           std::to_string(n) + "," + num(acc) + "\n";
    out << "  " << std::left << std::setw(18) << mode << std::right << std::setw(8) << n
        << std::setw(10) << pct(acc) << "\n";
  }
  write_text(dir / "eval_metrics.csv", csv);
  return kOk;
}

int cmd_few_shot(const RunConfig& cfg, std::ostream& out) {
  const auto dir = output_dir(cfg);
  const auto pool = split_clouds(cfg, "all");
  auto head = cfg.head_config();
  head.classes = cfg.fewshot.n_way;
  const auto result = few_shot_run(load_backbone(cfg), cfg.strategy, head, pool,
                                   cfg.fewshot_config(), cfg.tune_config());

  std::string csv = "episode,accuracy\n";
  for (std::size_t e = 0; e < result.accuracies.size(); ++e) {
    csv += std::to_string(e + 1) + "," + num(result.accuracies[e]) + "\n";
  }
  csv += "mean," + num(result.mean) + "\nstd," + num(result.stddev) + "\n";
  write_text(dir / "fewshot_metrics.csv", csv);

  out << strategy_name(cfg.strategy.kind) << " " << cfg.fewshot.n_way << "-way "
      << cfg.fewshot.m_shot << "-shot, " << result.accuracies.size() << " episodes\n";
  for (std::size_t e = 0; e < result.accuracies.size(); ++e) {
    out << "  episode " << e + 1 << "  " << pct(result.accuracies[e]) << "\n";
  }
  out << "  accuracy " << pct(result.mean) << " ± " << pct(result.stddev) << "\n";
  return kOk;
}

int cmd_count_params(RunConfig cfg, bool paper_scale, std::ostream& out) {
  HeadConfig head = cfg.head_config();
  if (paper_scale) {
    cfg.model = BackboneConfig::paper_scale();
    head = HeadConfig{256, 15};
  }
  std::string csv = "strategy,backbone,prompts,generator,head,total_trainable,total_all,ratio\n";
  out << "model depth " << cfg.model.depth << ", width " << cfg.model.width << ", generator "
      << generator_name(cfg.strategy.generator) << "\n"
      << "  strategy        backbone   prompts  generator     head  trainable      total    ratio\n";
  for (auto kind : {StrategyKind::FullFinetune, StrategyKind::HeadOnly, StrategyKind::VptShallow,
                    StrategyKind::VptDeep, StrategyKind::Idpt}) {
    auto strategy = cfg.strategy;
    strategy.kind = kind;
    if (kind != StrategyKind::Idpt) strategy.insert_layers.clear();
    if (const auto problems = strategy.problems(cfg.model); !problems.empty()) {
      throw UsageError(std::string(strategy_name(kind)) + ": " + problems.front());
    }
    const auto b = count_trainable(strategy, cfg.model, head);
    csv += std::string(strategy_name(kind)) + "," + std::to_string(b.backbone) + "," +
           std::to_string(b.prompts) + "," + std::to_string(b.generator) + "," +
           std::to_string(b.head) + "," + std::to_string(b.total_trainable) + "," +
           std::to_string(b.total_all) + "," + num(b.ratio) + "\n";
    out << "  " << std::left << std::setw(14) << strategy_name(kind) << std::right
        << std::setw(10) << b.backbone << std::setw(10) << b.prompts << std::setw(11)
        << b.generator << std::setw(9) << b.head << std::setw(11) << b.total_trainable
        << std::setw(11) << b.total_all << std::setw(8) << pct(b.ratio) << "%\n";
  }
  write_text(output_dir(cfg) / "count_params.csv", csv);
  return kOk;
}

int cmd_export(const RunConfig& cfg, std::ostream& out) {
  const auto samples = split_clouds(cfg, cfg.export_.split);
  const auto model = load_tuned(cfg);
  const auto path = cfg.export_.path.empty() ? (output_dir(cfg) / "embeddings.csv").string()
                                             : cfg.export_.path;
  std::ofstream file(path, std::ios::binary);
  if (!file) throw std::runtime_error("cannot write " + path);
  write_embeddings_csv(file, model, samples, parse_embedding_tap(cfg.export_.tap));
  if (!file) throw std::runtime_error("error writing " + path);
  out << "exported " << cfg.export_.tap << " tokens of " << samples.size() << " samples to "
      << path << "\n";
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Prompt tuning for point cloud transformers on synthetic shape data"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every command");

  Common common;
  bool paper_scale = false;
  auto add_common = [&common](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "Config file (section.key = value)");
    sub->add_option("--set", common.sets, "Override, e.g. --set strategy.kind=idpt")
        ->allow_extra_args(false);
    sub->add_option("--seed", common.seed, "Shorthand for --set run.seed=S");
    sub->add_option("--threads", common.threads, "Worker threads; 1 is bitwise deterministic")
        ->check(CLI::PositiveNumber);
    return sub;
  };
  auto* gen = add_common(app.add_subcommand("gen-data", "Generate the synthetic dataset"));
  auto* pre = add_common(app.add_subcommand("pretrain", "Masked-autoencoder pretraining"));
  auto* tun = add_common(app.add_subcommand("tune", "Tune a strategy on the frozen backbone"));
  auto* evl = add_common(app.add_subcommand("eval", "Evaluate tuned weights, optionally voting"));
  auto* few = add_common(app.add_subcommand("few-shot", "Episodic n-way m-shot evaluation"));
  auto* cnt = add_common(app.add_subcommand("count-params", "Trainable parameter accounting"));
  cnt->add_flag("--paper-scale", paper_scale, "Use the 12-layer, width-384 accounting model");
  auto* exp = add_common(
      app.add_subcommand("export-embeddings", "Write token embeddings of the last layer as CSV"));

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  }

  try {
    const auto cfg = load_config(common);
    if (gen->parsed()) return cmd_gen_data(cfg, out);
    if (pre->parsed()) return cmd_pretrain(cfg, out);
    if (tun->parsed()) return cmd_tune(cfg, out);
    if (evl->parsed()) return cmd_eval(cfg, out);
    if (few->parsed()) return cmd_few_shot(cfg, out);
    if (cnt->parsed()) return cmd_count_params(cfg, paper_scale, out);
    if (exp->parsed()) return cmd_export(cfg, out);
    return kUsage;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntime;
  }
}

}  // namespace pclprompt::cli
