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

#include "pclprompt/config.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <functional>
#include <map>
#include <sstream>

namespace pclprompt {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::uint64_t to_u64(const std::string& text) {
  std::uint64_t v = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (text.empty() || ec != std::errc() || ptr != end) {
    throw std::invalid_argument("expected a non-negative integer, got '" + text + "'");
  }
  return v;
}

std::size_t to_size(const std::string& text) { return static_cast<std::size_t>(to_u64(text)); }

std::size_t to_size_min(const std::string& text, std::size_t lo) {
  const auto v = to_size(text);
  if (v < lo) throw std::invalid_argument("must be >= " + std::to_string(lo));
  return v;
}

double to_double(const std::string& text) {
  double v = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (text.empty() || ec != std::errc() || ptr != end || !std::isfinite(v)) {
    throw std::invalid_argument("expected a finite number, got '" + text + "'");
  }
  return v;
}

double to_double_in(const std::string& text, double lo, double hi) {
  const double v = to_double(text);
  if (v < lo || v > hi) {
    std::ostringstream os;
    os << "must be in [" << lo << ", " << hi << "]";
    throw std::invalid_argument(os.str());
  }
  return v;
}

std::string fmt(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string fmt(std::uint64_t v) { return std::to_string(v); }

std::string one_of(const std::string& text, std::initializer_list<const char*> allowed) {
  std::string names;
  for (const char* a : allowed) {
    if (text == a) return text;
    names += names.empty() ? a : std::string(", ") + a;
  }
  throw std::invalid_argument("expected one of {" + names + "}, got '" + text + "'");
}

template <typename E, typename Name>
std::string join_names(const std::vector<E>& items, Name name) {
  std::string out;
  for (const auto& i : items) {
    if (!out.empty()) out += ',';
    out += name(i);
  }
  return out;
}

struct Key {
  std::string name;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

const std::vector<Key>& key_table() {
  static const std::vector<Key> table = {
      {"run.seed", [](RunConfig& c, const std::string& v) { c.run.seed = to_u64(v); },
       [](const RunConfig& c) { return fmt(c.run.seed); }},
      {"run.threads", [](RunConfig& c, const std::string& v) { c.run.threads = to_size_min(v, 1); },
       [](const RunConfig& c) { return fmt(c.run.threads); }},
      {"run.output_dir", [](RunConfig& c, const std::string& v) { c.run.output_dir = v; },
       [](const RunConfig& c) { return c.run.output_dir; }},
      {"run.backbone", [](RunConfig& c, const std::string& v) { c.run.backbone = v; },
       [](const RunConfig& c) { return c.run.backbone; }},
      {"run.tunables", [](RunConfig& c, const std::string& v) { c.run.tunables = v; },
       [](const RunConfig& c) { return c.run.tunables; }},

      {"model.depth", [](RunConfig& c, const std::string& v) { c.model.depth = to_size_min(v, 2); },
       [](const RunConfig& c) { return fmt(c.model.depth); }},
      {"model.width", [](RunConfig& c, const std::string& v) { c.model.width = to_size_min(v, 2); },
       [](const RunConfig& c) { return fmt(c.model.width); }},
      {"model.heads", [](RunConfig& c, const std::string& v) { c.model.heads = to_size_min(v, 1); },
       [](const RunConfig& c) { return fmt(c.model.heads); }},
      {"model.ffn_mult",
       [](RunConfig& c, const std::string& v) { c.model.ffn_mult = to_size_min(v, 1); },
       [](const RunConfig& c) { return fmt(c.model.ffn_mult); }},
      {"model.patches",
       [](RunConfig& c, const std::string& v) { c.model.patches = to_size_min(v, 1); },
       [](const RunConfig& c) { return fmt(c.model.patches); }},
      {"model.patch_points",
       [](RunConfig& c, const std::string& v) { c.model.patch_points = to_size_min(v, 1); },
       [](const RunConfig& c) { return fmt(c.model.patch_points); }},

      {"strategy.kind",
       [](RunConfig& c, const std::string& v) { c.strategy.kind = parse_strategy_kind(v); },
       [](const RunConfig& c) { return std::string(strategy_name(c.strategy.kind)); }},
      {"strategy.generator",
       [](RunConfig& c, const std::string& v) { c.strategy.generator = parse_generator_kind(v); },
       [](const RunConfig& c) { return std::string(generator_name(c.strategy.generator)); }},
      {"strategy.prompts",
       [](RunConfig& c, const std::string& v) { c.strategy.prompt_count = to_size_min(v, 1); },
       [](const RunConfig& c) { return fmt(c.strategy.prompt_count); }},
      {"strategy.top_k",
       [](RunConfig& c, const std::string& v) { c.strategy.top_k = to_size_min(v, 1); },
       [](const RunConfig& c) { return fmt(c.strategy.top_k); }},
      {"strategy.insert_layers",
       [](RunConfig& c, const std::string& v) {
         c.strategy.insert_layers.clear();
         if (v == "default") return;
         for (const auto& item : split_list(v)) c.strategy.insert_layers.push_back(to_size(item));
         if (c.strategy.insert_layers.empty()) throw std::invalid_argument("empty layer list");
       },
       [](const RunConfig& c) {
         if (c.strategy.insert_layers.empty()) return std::string("default");
         return join_names(c.strategy.insert_layers, [](std::size_t l) { return fmt(l); });
       }},
      {"strategy.sharing",
       [](RunConfig& c, const std::string& v) { c.strategy.sharing = parse_sharing(v); },
       [](const RunConfig& c) { return std::string(sharing_name(c.strategy.sharing)); }},
      {"strategy.knn_k",
       [](RunConfig& c, const std::string& v) { c.strategy.knn_k = v == "auto" ? 0 : to_size_min(v, 1); },
       [](const RunConfig& c) {
         return c.strategy.knn_k == 0 ? std::string("auto") : fmt(c.strategy.knn_k);
       }},
      {"strategy.head_inputs",
       [](RunConfig& c, const std::string& v) {
         if (v == "default") {
           c.strategy.head_inputs.reset();
         } else {
           c.strategy.head_inputs = parse_head_inputs(v);
         }
       },
       [](const RunConfig& c) {
         return c.strategy.head_inputs ? render_head_inputs(*c.strategy.head_inputs)
                                       : std::string("default");
       }},

      {"head.hidden", [](RunConfig& c, const std::string& v) { c.head.hidden = to_size(v); },
       [](const RunConfig& c) { return fmt(c.head.hidden); }},

      {"data.dir", [](RunConfig& c, const std::string& v) { c.data_dir = v; },
       [](const RunConfig& c) { return c.data_dir; }},
      {"data.classes",
       [](RunConfig& c, const std::string& v) {
         c.data.classes.clear();
         for (const auto& item : split_list(v)) c.data.classes.push_back(parse_shape_kind(item));
       },
       [](const RunConfig& c) { return join_names(c.data.classes, shape_kind_name); }},
      {"data.submodes",
       [](RunConfig& c, const std::string& v) {
         c.data.submodes.clear();
         for (const auto& item : split_list(v)) c.data.submodes.push_back(parse_submode(item));
       },
       [](const RunConfig& c) { return join_names(c.data.submodes, submode_name); }},
      {"data.samples_per_cell",
       [](RunConfig& c, const std::string& v) { c.data.samples_per_cell = to_size_min(v, 1); },
       [](const RunConfig& c) { return fmt(c.data.samples_per_cell); }},
      {"data.points",
       [](RunConfig& c, const std::string& v) { c.data.points = to_size_min(v, 16); },
       [](const RunConfig& c) { return fmt(c.data.points); }},
      {"data.train_fraction",
       [](RunConfig& c, const std::string& v) { c.data.train_fraction = to_double_in(v, 0, 1); },
       [](const RunConfig& c) { return fmt(c.data.train_fraction); }},
      {"data.test_fraction",
       [](RunConfig& c, const std::string& v) { c.data.test_fraction = to_double_in(v, 0, 1); },
       [](const RunConfig& c) { return fmt(c.data.test_fraction); }},
      {"data.seed", [](RunConfig& c, const std::string& v) { c.data.seed = to_u64(v); },
       [](const RunConfig& c) { return fmt(c.data.seed); }},

      {"pretrain.mask_ratio",
       [](RunConfig& c, const std::string& v) { c.pretrain.mask_ratio = to_double_in(v, 0, 1); },
       [](const RunConfig& c) { return fmt(c.pretrain.mask_ratio); }},
      {"pretrain.epochs",
       [](RunConfig& c, const std::string& v) { c.pretrain.epochs = to_size(v); },
       [](const RunConfig& c) { return fmt(c.pretrain.epochs); }},
      {"pretrain.batch",
       [](RunConfig& c, const std::string& v) { c.pretrain.batch = to_size_min(v, 1); },
       [](const RunConfig& c) { return fmt(c.pretrain.batch); }},
      {"pretrain.lr",
       [](RunConfig& c, const std::string& v) { c.pretrain.optim.lr = to_double_in(v, 0, 10); },
       [](const RunConfig& c) { return fmt(c.pretrain.optim.lr); }},
      {"pretrain.min_lr",
       [](RunConfig& c, const std::string& v) { c.pretrain.optim.min_lr = to_double_in(v, 0, 10); },
       [](const RunConfig& c) { return fmt(c.pretrain.optim.min_lr); }},
      {"pretrain.weight_decay",
       [](RunConfig& c, const std::string& v) {
         c.pretrain.optim.weight_decay = to_double_in(v, 0, 1);
       },
       [](const RunConfig& c) { return fmt(c.pretrain.optim.weight_decay); }},
      {"pretrain.subset",
       [](RunConfig& c, const std::string& v) { c.pretrain_subset = one_of(v, {"clean", "all"}); },
       [](const RunConfig& c) { return c.pretrain_subset; }},

      {"tune.epochs", [](RunConfig& c, const std::string& v) { c.tune.epochs = to_size(v); },
       [](const RunConfig& c) { return fmt(c.tune.epochs); }},
      {"tune.batch", [](RunConfig& c, const std::string& v) { c.tune.batch = to_size_min(v, 1); },
       [](const RunConfig& c) { return fmt(c.tune.batch); }},
      {"tune.lr",
       [](RunConfig& c, const std::string& v) { c.tune.optim.lr = to_double_in(v, 0, 10); },
       [](const RunConfig& c) { return fmt(c.tune.optim.lr); }},
      {"tune.min_lr",
       [](RunConfig& c, const std::string& v) { c.tune.optim.min_lr = to_double_in(v, 0, 10); },
       [](const RunConfig& c) { return fmt(c.tune.optim.min_lr); }},
      {"tune.weight_decay",
       [](RunConfig& c, const std::string& v) { c.tune.optim.weight_decay = to_double_in(v, 0, 1); },
       [](const RunConfig& c) { return fmt(c.tune.optim.weight_decay); }},
      {"tune.augment",
       [](RunConfig& c, const std::string& v) { c.tune.augment = parse_augment_list(v); },
       [](const RunConfig& c) { return render_augment_list(c.tune.augment); }},

      {"eval.votes", [](RunConfig& c, const std::string& v) { c.eval.votes = to_size_min(v, 1); },
       [](const RunConfig& c) { return fmt(c.eval.votes); }},
      {"eval.augment",
       [](RunConfig& c, const std::string& v) { c.eval.augment = parse_augment_list(v); },
       [](const RunConfig& c) { return render_augment_list(c.eval.augment); }},
      {"eval.split",
       [](RunConfig& c, const std::string& v) { c.eval.split = one_of(v, {"train", "test", "all"}); },
       [](const RunConfig& c) { return c.eval.split; }},

      {"fewshot.n_way",
       [](RunConfig& c, const std::string& v) { c.fewshot.n_way = to_size_min(v, 1); },
       [](const RunConfig& c) { return fmt(c.fewshot.n_way); }},
      {"fewshot.m_shot",
       [](RunConfig& c, const std::string& v) { c.fewshot.m_shot = to_size_min(v, 1); },
       [](const RunConfig& c) { return fmt(c.fewshot.m_shot); }},
      {"fewshot.queries",
       [](RunConfig& c, const std::string& v) { c.fewshot.queries = to_size_min(v, 1); },
       [](const RunConfig& c) { return fmt(c.fewshot.queries); }},
      {"fewshot.episodes",
       [](RunConfig& c, const std::string& v) { c.fewshot.episodes = to_size_min(v, 1); },
       [](const RunConfig& c) { return fmt(c.fewshot.episodes); }},

      {"export.tap",
       [](RunConfig& c, const std::string& v) { c.export_.tap = one_of(v, {"input_N", "output_N"}); },
       [](const RunConfig& c) { return c.export_.tap; }},
      {"export.split",
       [](RunConfig& c, const std::string& v) {
         c.export_.split = one_of(v, {"train", "test", "all"});
       },
       [](const RunConfig& c) { return c.export_.split; }},
      {"export.path", [](RunConfig& c, const std::string& v) { c.export_.path = v; },
       [](const RunConfig& c) { return c.export_.path; }},
  };
  return table;
}

const Key* find_key(const std::string& name) {
  const std::string canonical = name == "strategy.insert_layer" ? "strategy.insert_layers" : name;
  for (const auto& k : key_table()) {
    if (k.name == canonical) return &k;
  }
  return nullptr;
}

struct Assignment {
  std::string source;
  std::string key;
  std::string value;
};

}  // namespace

TuneConfig RunConfig::tune_config() const {
  TuneConfig t = tune;
  t.seed = run.seed;
  t.threads = run.threads;
  return t;
}

PretrainConfig RunConfig::pretrain_config() const {
  PretrainConfig p = pretrain;
  p.seed = run.seed;
  return p;
}

FewShotConfig RunConfig::fewshot_config() const {
  FewShotConfig f = fewshot;
  f.seed = run.seed;
  return f;
}

HeadConfig RunConfig::head_config() const {
  HeadConfig h = head;
  h.classes = data.classes.size();
  return h;
}

std::string RunConfig::backbone_path() const {
  return run.backbone.empty() ? (std::filesystem::path(run.output_dir) / "backbone.ckpt").string()
                              : run.backbone;
}

std::string RunConfig::tunables_path() const {
  return run.tunables.empty() ? (std::filesystem::path(run.output_dir) / "tunables.ckpt").string()
                              : run.tunables;
}

ConfigResult parse_config(const std::string& text, const std::string& name,
                          const std::vector<std::string>& overrides) {
  ConfigResult result;
  std::vector<Assignment> assignments;
  std::map<std::string, std::string> first_seen;

  std::stringstream in(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const std::string source = name + ":" + std::to_string(number);
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      result.errors.push_back({source, "expected 'section.key = value'"});
      continue;
    }
    Assignment a{source, trim(line.substr(0, eq)), trim(line.substr(eq + 1))};
    const Key* key = find_key(a.key);
    if (!key) {
      result.errors.push_back({source, "unknown key '" + a.key + "'"});
      continue;
    }
    if (auto [it, fresh] = first_seen.emplace(key->name, source); !fresh) {
      result.errors.push_back({source, "'" + a.key + "' already set at " + it->second});
      continue;
    }
    assignments.push_back(std::move(a));
  }
  for (std::size_t i = 0; i < overrides.size(); ++i) {
    const std::string source = "--set " + std::to_string(i + 1);
    const auto eq = overrides[i].find('=');
    if (eq == std::string::npos) {
      result.errors.push_back({source, "expected section.key=value, got '" + overrides[i] + "'"});
      continue;
    }
    Assignment a{source, trim(overrides[i].substr(0, eq)), trim(overrides[i].substr(eq + 1))};
    if (!find_key(a.key)) {
      result.errors.push_back({source, "unknown key '" + a.key + "'"});
      continue;
    }
    assignments.push_back(std::move(a));
  }

  RunConfig config;
  std::map<std::string, std::string> last_source;  // section -> where it was last touched
  for (const auto& a : assignments) {
    try {
      find_key(a.key)->set(config, a.value);
      last_source[a.key.substr(0, a.key.find('.'))] = a.source;
    } catch (const std::exception& e) {
      result.errors.push_back({a.source, a.key + ": " + e.what()});
    }
  }

  auto section_source = [&](const std::string& section) {
    auto it = last_source.find(section);
    return it == last_source.end() ? std::string() : it->second;
  };
  try {
    config.model.validate();
  } catch (const std::exception& e) {
    result.errors.push_back({section_source("model"), e.what()});
  }
  for (const auto& p : config.strategy.problems(config.model)) {
    result.errors.push_back({section_source("strategy"), p});
  }
  for (const auto& p : config.data.problems()) result.errors.push_back({section_source("data"), p});
  if (config.pretrain.optim.min_lr > config.pretrain.optim.lr) {
    result.errors.push_back({section_source("pretrain"), "pretrain.min_lr exceeds pretrain.lr"});
  }
  if (config.tune.optim.min_lr > config.tune.optim.lr) {
    result.errors.push_back({section_source("tune"), "tune.min_lr exceeds tune.lr"});
  }
  if (config.fewshot.n_way > config.data.classes.size()) {
    result.errors.push_back({section_source("fewshot"),
                             "fewshot.n_way exceeds the number of data.classes"});
  }

  if (result.errors.empty()) result.config = std::move(config);
  return result;
}

std::string render_config(const RunConfig& config) {
  std::string out;
  std::string section;
  for (const auto& k : key_table()) {
    const auto this_section = k.name.substr(0, k.name.find('.'));
    if (this_section != section) {
      if (!section.empty()) out += '\n';
      section = this_section;
    }
    out += k.name + " = " + k.get(config) + '\n';
  }
  return out;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& k : key_table()) out.push_back(k.name);
  return out;
}

}  // namespace pclprompt
