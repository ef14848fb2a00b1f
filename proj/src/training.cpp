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

#include "pclprompt/training.hpp"

#include "pclprompt/data.hpp"

#include <chrono>
#include <cmath>
#include <cstring>
#include <numbers>
#include <stdexcept>
#include <thread>

namespace pclprompt {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

template <typename T>
int argmax(std::span<const T> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return static_cast<int>(best);
}

// Runs fn(i) for i in [0, n); workers take interleaved indices, results land
// in per-index slots so the outcome never depends on scheduling.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        ad::NoGradGuard no_grad;
        for (std::size_t i = t; i < n; i += threads) fn(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::size_t batches_per_epoch(std::size_t n, std::size_t batch) { return (n + batch - 1) / batch; }

int label_of(const PointCloud& cloud, std::size_t classes) {
  if (!cloud.label) throw std::invalid_argument("sample without a label");
  const int label = *cloud.label;
  if (label < 0 || static_cast<std::size_t>(label) >= classes) {
    throw std::invalid_argument("label " + std::to_string(label) + " outside head's " +
                                std::to_string(classes) + " classes");
  }
  return label;
}

template <typename T>
std::vector<std::vector<T>> snapshot(const ParamStore<T>& store, ParamGroup group) {
  std::vector<std::vector<T>> out;
  for (const auto& e : store.entries()) {
    if (e.group == group) out.emplace_back(e.tensor.value().begin(), e.tensor.value().end());
  }
  return out;
}

// Name of the first tensor whose bytes differ from the snapshot, or "".
template <typename T>
std::string first_changed(const ParamStore<T>& store, ParamGroup group,
                          const std::vector<std::vector<T>>& before) {
  std::size_t i = 0;
  for (const auto& e : store.entries()) {
    if (e.group != group) continue;
    const auto now = e.tensor.value();
    if (now.size() != before[i].size() ||
        std::memcmp(now.data(), before[i].data(), now.size() * sizeof(T)) != 0) {
      return e.name;
    }
    ++i;
  }
  return "";
}

template <typename T>
std::vector<int> predict_prefixes(const TunedModel<T>& model,
                                  const std::vector<TokenSequence<T>>& prefixes,
                                  std::size_t threads) {
  std::vector<int> out(prefixes.size());
  ad::NoGradGuard no_grad;
  parallel_for(prefixes.size(), threads, [&](std::size_t i) {
    out[i] = argmax(model.head(model.finish(prefixes[i])).value());
  });
  return out;
}

}  // namespace

double cosine_lr(const OptimConfig& cfg, std::size_t step, std::size_t total_steps) {
  if (total_steps <= 1) return cfg.lr;
  const double progress =
      static_cast<double>(std::min(step, total_steps - 1)) / static_cast<double>(total_steps - 1);
  return cfg.min_lr + 0.5 * (cfg.lr - cfg.min_lr) * (1 + std::cos(std::numbers::pi * progress));
}

template <typename T>
AdamW<T>::AdamW(std::vector<Tensor<T>> params, const OptimConfig& cfg, std::size_t total_steps)
    : params_(std::move(params)), cfg_(cfg), total_(total_steps) {
  for (const auto& p : params_) {
    m_.emplace_back(p.numel(), 0.0);
    v_.emplace_back(p.numel(), 0.0);
  }
}

template <typename T>
void AdamW<T>::step() {
  last_lr_ = cosine_lr(cfg_, step_, total_);
  ++step_;
  const double bc1 = 1 - std::pow(cfg_.beta1, static_cast<double>(step_));
  const double bc2 = 1 - std::pow(cfg_.beta2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    auto data = p.data();
    const auto grad = p.grad();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < data.size(); ++j) {
      const double g = grad.empty() ? 0.0 : static_cast<double>(grad[j]);
      m[j] = cfg_.beta1 * m[j] + (1 - cfg_.beta1) * g;
      v[j] = cfg_.beta2 * v[j] + (1 - cfg_.beta2) * g * g;
      const double update = (m[j] / bc1) / (std::sqrt(v[j] / bc2) + cfg_.eps);
      double x = static_cast<double>(data[j]);
      x -= last_lr_ * cfg_.weight_decay * x;
      x -= last_lr_ * update;
      data[j] = static_cast<T>(x);
    }
    p.zero_grad();
  }
}

template <typename T>
TunedModel<T> TunedModel<T>::create(const Backbone<T>& pretrained, const StrategyConfig& strategy,
                                    const HeadConfig& head_cfg, std::uint64_t seed) {
  const auto& bcfg = pretrained.config();
  strategy.validate(bcfg);
  const auto resolved = strategy.resolved(bcfg);
  resolved.validate(bcfg);
  TunedModel model;
  model.backbone = pretrained.clone();
  Rng rng(mix_seed(seed, 0x7d11e));
  model.prompts = PromptModule<T>(resolved, bcfg, rng);
  model.head = ClassifierHead<T>::init(*resolved.head_inputs, bcfg.width, head_cfg, rng);
  ParamStore<T> store;
  model.register_params(store);
  store.set_trainable(ParamGroup::Backbone, !resolved.freezes_backbone());
  store.set_trainable(ParamGroup::Prompt, true);
  store.set_trainable(ParamGroup::Generator, true);
  store.set_trainable(ParamGroup::Head, true);
  return model;
}

template <typename T>
std::size_t TunedModel<T>::frozen_prefix() const {
  if (!strategy().freezes_backbone()) return 0;
  return prompts.first_active_layer() - 1;
}

template <typename T>
TokenSequence<T> TunedModel<T>::prefix(const PointCloud& cloud) const {
  return backbone.encode(backbone.embed_patches(backbone.group(cloud)), frozen_prefix());
}

template <typename T>
TokenSequence<T> TunedModel<T>::finish(const TokenSequence<T>& prefix_seq,
                                       TokenSequence<T>* last_input) const {
  return prompts.run(backbone, prefix_seq, last_input);
}

template <typename T>
void TunedModel<T>::register_params(ParamStore<T>& store) const {
  backbone.register_params(store);
  prompts.register_params(store);
  head.register_params(store);
}

template <typename T>
void TunedModel<T>::register_tunables(ParamStore<T>& store) const {
  if (!strategy().freezes_backbone()) backbone.register_params(store);
  prompts.register_params(store);
  head.register_params(store);
}

double accuracy(const std::vector<int>& predictions, const std::vector<PointCloud>& samples) {
  if (predictions.size() != samples.size()) {
    throw std::invalid_argument("accuracy: prediction count does not match samples");
  }
  if (samples.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    correct += samples[i].label && *samples[i].label == predictions[i];
  }
  return static_cast<double>(correct) / static_cast<double>(samples.size());
}

template <typename T>
std::vector<int> predict(const TunedModel<T>& model, const std::vector<PointCloud>& samples,
                         const EvalConfig& cfg) {
  if (cfg.votes < 1) throw std::invalid_argument("evaluate: votes must be >= 1");
  std::vector<int> out(samples.size());
  ad::NoGradGuard no_grad;
  const bool single = cfg.votes == 1 || cfg.augment.empty();
  parallel_for(samples.size(), cfg.threads, [&](std::size_t i) {
    if (single) {
      out[i] = argmax(model.logits(samples[i]).value());
      return;
    }
    Rng rng(mix_seed(cfg.seed, i));
    std::vector<double> total;
    for (std::size_t v = 0; v < cfg.votes; ++v) {
      const auto logits = model.logits(augment(samples[i], cfg.augment, rng));
      const auto values = logits.value();
      total.resize(values.size(), 0.0);
      for (std::size_t c = 0; c < values.size(); ++c) total[c] += values[c];
    }
    for (auto& t : total) t /= static_cast<double>(cfg.votes);
    out[i] = argmax(std::span<const double>(total));
  });
  return out;
}

template <typename T>
double evaluate(const TunedModel<T>& model, const std::vector<PointCloud>& samples,
                const EvalConfig& cfg) {
  return accuracy(predict(model, samples, cfg), samples);
}

template <typename T>
RunMetrics tune(TunedModel<T>& model, const std::vector<PointCloud>& train,
                const std::vector<PointCloud>& test, const TuneConfig& cfg) {
  if (train.empty()) throw std::invalid_argument("tune: empty training split");
  if (cfg.batch < 1) throw std::invalid_argument("tune: batch must be >= 1");
  const auto start = Clock::now();
  const std::size_t classes = model.head.fc3.out_features();
  std::vector<int> labels;
  for (const auto& s : train) labels.push_back(label_of(s, classes));
  for (const auto& s : test) label_of(s, classes);

  RunMetrics metrics;
  metrics.strategy = strategy_name(model.strategy().kind);
  metrics.seed = cfg.seed;

  ParamStore<T> all;
  model.register_params(all);
  const bool frozen = model.strategy().freezes_backbone();
  const auto before = snapshot(all, ParamGroup::Backbone);

  // A frozen prefix is a pure function of the input, so it is computed once.
  const bool cached = frozen && cfg.augment.empty();
  std::vector<TokenSequence<T>> train_prefix;
  std::vector<TokenSequence<T>> test_prefix(test.size());
  {
    ad::NoGradGuard no_grad;
    if (cached) {
      train_prefix.resize(train.size());
      parallel_for(train.size(), cfg.threads,
                   [&](std::size_t i) { train_prefix[i] = model.prefix(train[i]); });
    }
    if (frozen) {
      parallel_for(test.size(), cfg.threads,
                   [&](std::size_t i) { test_prefix[i] = model.prefix(test[i]); });
    }
  }
  auto test_predictions = [&] {
    if (frozen) return predict_prefixes(model, test_prefix, cfg.threads);
    return predict(model, test, EvalConfig{1, {}, 0, cfg.threads});
  };

  metrics.test_predictions = test_predictions();
  metrics.initial_test_acc = accuracy(metrics.test_predictions, test);

  ParamStore<T> tunables;
  model.register_tunables(tunables);
  const std::size_t per_epoch = batches_per_epoch(train.size(), cfg.batch);
  AdamW<T> optimizer(tunables.trainable(), cfg.optim, cfg.epochs * per_epoch);
  Rng order_rng(mix_seed(cfg.seed, 1));
  Rng augment_rng(mix_seed(cfg.seed, 2));
  std::vector<std::size_t> order(train.size());

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), order_rng);
    double loss_sum = 0;
    std::size_t correct = 0;
    for (std::size_t b = 0; b < per_epoch; ++b) {
      const std::size_t lo = b * cfg.batch;
      const std::size_t hi = std::min(train.size(), lo + cfg.batch);
      const T inv = T(1) / static_cast<T>(hi - lo);
      for (std::size_t j = lo; j < hi; ++j) {
        const std::size_t i = order[j];
        TokenSequence<T> seq;
        if (cached) {
          seq = train_prefix[i];
        } else if (cfg.augment.empty()) {
          seq = model.prefix(train[i]);
        } else {
          seq = model.prefix(augment(train[i], cfg.augment, augment_rng));
        }
        const auto logits = model.head(model.finish(seq));
        const auto loss = ad::cross_entropy_with_logits(logits, static_cast<std::size_t>(labels[i]));
        loss_sum += static_cast<double>(loss.item());
        correct += argmax(logits.value()) == labels[i];
        ad::backward(ad::scale(loss, inv));
      }
      optimizer.step();
    }
    EpochMetrics em;
    em.train_loss = loss_sum / static_cast<double>(train.size());
    em.train_acc = static_cast<double>(correct) / static_cast<double>(train.size());
    metrics.test_predictions = test_predictions();
    em.test_acc = accuracy(metrics.test_predictions, test);
    metrics.epochs.push_back(em);
  }

  if (frozen) {
    const auto changed = first_changed(all, ParamGroup::Backbone, before);
    metrics.frozen_intact = changed.empty();
    if (!changed.empty()) throw std::logic_error("tune: frozen tensor '" + changed + "' changed");
  }
  metrics.wall_seconds = seconds_since(start);
  return metrics;
}

template <typename T>
MaeDecoder<T> MaeDecoder<T>::init(const BackboneConfig& cfg, Rng& rng) {
  MaeDecoder dec;
  std::normal_distribution<double> dist(0.0, 0.02);
  std::vector<T> token(cfg.width);
  for (auto& v : token) v = static_cast<T>(dist(rng));
  dec.mask_token = Tensor<T>::from_vector({1, cfg.width}, std::move(token));
  dec.fc1 = Linear<T>::init(cfg.width, cfg.width, rng);
  dec.fc2 = Linear<T>::init(cfg.width, 3 * cfg.patch_points, rng);
  return dec;
}

template <typename T>
void MaeDecoder<T>::register_params(ParamStore<T>& store) const {
  store.add("mae.mask_token", ParamGroup::Pretrain, mask_token);
  fc1.register_params(store, "mae.decoder.fc1", ParamGroup::Pretrain);
  fc2.register_params(store, "mae.decoder.fc2", ParamGroup::Pretrain);
}

std::vector<std::size_t> mae_mask(std::size_t m, double ratio, Rng& rng) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw std::invalid_argument("mask ratio must be in [0, 1]");
  const auto count = static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(m) - 1e-9));
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = 0; i < count; ++i) {
    std::swap(order[i], order[std::uniform_int_distribution<std::size_t>(i, m - 1)(rng)]);
  }
  order.resize(count);
  std::sort(order.begin(), order.end());
  return order;
}

template <typename T>
Tensor<T> mae_loss(const Backbone<T>& backbone, const MaeDecoder<T>& decoder,
                   const PatchSet& patches, const std::vector<std::size_t>& masked) {
  if (masked.empty()) return Tensor<T>::zeros({1});
  const std::size_t m = patches.m;
  const std::size_t k = patches.k;
  // Row m of `pool` is the mask token; masked patches read it instead of their features.
  const auto pool = ad::concat<T>({backbone.patch_features(patches), decoder.mask_token}, 0);
  std::vector<std::size_t> rows(m);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  for (auto i : masked) rows[i] = m;
  const auto patch_tokens = ad::add(ad::gather(pool, rows), backbone.positional(patches));
  TokenSequence<T> seq;
  seq.tokens = ad::concat<T>({backbone.cls_token(), patch_tokens}, 0);
  seq.roles.assign(1 + m, Role::Patch);
  seq.roles[0] = Role::Cls;
  seq = backbone.encode(seq, backbone.config().depth);

  std::vector<std::size_t> out_rows;
  for (auto i : masked) out_rows.push_back(i + 1);
  const auto decoded = decoder.fc2(ad::gelu(decoder.fc1(ad::gather(seq.tokens, out_rows))));

  Tensor<T> total;
  for (std::size_t j = 0; j < masked.size(); ++j) {
    const auto predicted = ad::reshape(ad::slice(decoded, 0, j, j + 1), {k, 3});
    const auto begin = patches.groups.begin() + static_cast<std::ptrdiff_t>(masked[j] * k * 3);
    const auto target =
        Tensor<T>::from_vector({k, 3}, std::vector<T>(begin, begin + static_cast<std::ptrdiff_t>(k * 3)));
    const auto neg = ad::scale(ad::squared_distance_matrix(predicted, target), T(-1));
    // min = -max(-x) along each side
    const auto to_target = ad::mean_all(ad::max_reduce(neg, 1));
    const auto to_predicted = ad::mean_all(ad::max_reduce(neg, 0));
    const auto cd = ad::scale(ad::add(to_target, to_predicted), T(-1));
    total = j == 0 ? cd : ad::add(total, cd);
  }
  return ad::scale(total, T(1) / static_cast<T>(masked.size()));
}

template <typename T>
PretrainResult pretrain_mae(Backbone<T>& backbone, const std::vector<PointCloud>& clouds,
                            const PretrainConfig& cfg) {
  if (clouds.empty()) throw std::invalid_argument("pretrain: empty dataset");
  if (cfg.batch < 1) throw std::invalid_argument("pretrain: batch must be >= 1");
  const auto start = Clock::now();
  const auto& bcfg = backbone.config();
  PretrainResult result;
  Rng probe(0);
  if (mae_mask(bcfg.patches, cfg.mask_ratio, probe).empty()) {
    result.epoch_loss.assign(cfg.epochs, 0.0);
    result.wall_seconds = seconds_since(start);
    return result;
  }

  std::vector<PatchSet> patches;
  patches.reserve(clouds.size());
  for (const auto& c : clouds) patches.push_back(backbone.group(c));

  Rng init_rng(mix_seed(cfg.seed, 0x3ae));
  const auto decoder = MaeDecoder<T>::init(bcfg, init_rng);
  ParamStore<T> store;
  backbone.register_params(store);
  decoder.register_params(store);
  std::vector<bool> was_trainable;
  for (const auto& e : store.entries()) was_trainable.push_back(e.tensor.requires_grad());
  store.set_trainable(ParamGroup::Backbone, true);
  store.set_trainable(ParamGroup::Pretrain, true);

  Rng eval_rng(mix_seed(cfg.seed, 0xe7a1));
  std::vector<std::vector<std::size_t>> eval_masks;
  for (std::size_t i = 0; i < clouds.size(); ++i) {
    eval_masks.push_back(mae_mask(bcfg.patches, cfg.mask_ratio, eval_rng));
  }
  auto eval_loss = [&] {
    ad::NoGradGuard no_grad;
    double sum = 0;
    for (std::size_t i = 0; i < patches.size(); ++i) {
      sum += static_cast<double>(mae_loss(backbone, decoder, patches[i], eval_masks[i]).item());
    }
    return sum / static_cast<double>(patches.size());
  };
  result.initial_loss = eval_loss();

  const std::size_t per_epoch = batches_per_epoch(clouds.size(), cfg.batch);
  AdamW<T> optimizer(store.trainable(), cfg.optim, cfg.epochs * per_epoch);
  Rng order_rng(mix_seed(cfg.seed, 1));
  Rng mask_rng(mix_seed(cfg.seed, 2));
  std::vector<std::size_t> order(clouds.size());
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), order_rng);
    double sum = 0;
    for (std::size_t b = 0; b < per_epoch; ++b) {
      const std::size_t lo = b * cfg.batch;
      const std::size_t hi = std::min(clouds.size(), lo + cfg.batch);
      const T inv = T(1) / static_cast<T>(hi - lo);
      for (std::size_t j = lo; j < hi; ++j) {
        const auto mask = mae_mask(bcfg.patches, cfg.mask_ratio, mask_rng);
        const auto loss = mae_loss(backbone, decoder, patches[order[j]], mask);
        sum += static_cast<double>(loss.item());
        ad::backward(ad::scale(loss, inv));
      }
      optimizer.step();
    }
    result.epoch_loss.push_back(sum / static_cast<double>(clouds.size()));
  }
  result.final_loss = eval_loss();

  std::size_t i = 0;
  for (const auto& e : store.entries()) {
    auto t = e.tensor;
    t.set_requires_grad(was_trainable[i++]);
  }
  result.wall_seconds = seconds_since(start);
  return result;
}

template <typename T>
FewShotResult few_shot_run(const Backbone<T>& pretrained, const StrategyConfig& strategy,
                           const HeadConfig& head, const std::vector<PointCloud>& pool,
                           const FewShotConfig& cfg, const TuneConfig& tune_cfg) {
  if (cfg.episodes < 1) throw std::invalid_argument("few-shot: episodes must be >= 1");
  std::vector<int> labels;
  for (const auto& c : pool) {
    if (!c.label) throw std::invalid_argument("few-shot: pool sample without a label");
    labels.push_back(*c.label);
  }
  FewShotResult result;
  for (std::size_t e = 0; e < cfg.episodes; ++e) {
    const auto episode = few_shot_split(labels, cfg.n_way, cfg.m_shot, cfg.queries,
                                        mix_seed(cfg.seed, e));
    auto relabel = [&](const std::vector<std::size_t>& rows) {
      std::vector<PointCloud> out;
      for (auto r : rows) {
        PointCloud c = pool[r];
        const auto pos = std::find(episode.classes.begin(), episode.classes.end(), *c.label);
        c.label = static_cast<int>(pos - episode.classes.begin());
        out.push_back(std::move(c));
      }
      return out;
    };
    const auto support = relabel(episode.support);
    const auto query = relabel(episode.query);
    HeadConfig episode_head = head;
    episode_head.classes = cfg.n_way;
    TuneConfig episode_tune = tune_cfg;
    episode_tune.seed = mix_seed(tune_cfg.seed, e);
    auto model = TunedModel<T>::create(pretrained, strategy, episode_head, episode_tune.seed);
    tune(model, support, {}, episode_tune);
    result.accuracies.push_back(evaluate(model, query, EvalConfig{1, {}, 0, tune_cfg.threads}));
  }
  const double n = static_cast<double>(result.accuracies.size());
  for (double a : result.accuracies) result.mean += a / n;
  if (result.accuracies.size() > 1) {
    double ss = 0;
    for (double a : result.accuracies) ss += (a - result.mean) * (a - result.mean);
    result.stddev = std::sqrt(ss / (n - 1));
  }
  return result;
}

template class AdamW<float>;
template class AdamW<double>;
template struct TunedModel<float>;
template struct TunedModel<double>;
template struct MaeDecoder<float>;
template struct MaeDecoder<double>;

#define PCLPROMPT_INSTANTIATE(T)                                                                \
  template std::vector<int> predict<T>(const TunedModel<T>&, const std::vector<PointCloud>&,    \
                                       const EvalConfig&);                                      \
  template double evaluate<T>(const TunedModel<T>&, const std::vector<PointCloud>&,             \
                              const EvalConfig&);                                               \
  template RunMetrics tune<T>(TunedModel<T>&, const std::vector<PointCloud>&,                   \
                              const std::vector<PointCloud>&, const TuneConfig&);               \
  template Tensor<T> mae_loss<T>(const Backbone<T>&, const MaeDecoder<T>&, const PatchSet&,     \
                                 const std::vector<std::size_t>&);                              \
  template PretrainResult pretrain_mae<T>(Backbone<T>&, const std::vector<PointCloud>&,         \
                                          const PretrainConfig&);                               \
  template FewShotResult few_shot_run<T>(const Backbone<T>&, const StrategyConfig&,             \
                                         const HeadConfig&, const std::vector<PointCloud>&,     \
                                         const FewShotConfig&, const TuneConfig&);

PCLPROMPT_INSTANTIATE(float)
PCLPROMPT_INSTANTIATE(double)

#undef PCLPROMPT_INSTANTIATE

}  // namespace pclprompt
