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

// Optimizer, masked-autoencoder pretraining, the tuning loop, voting
// evaluation and few-shot episodes.

#pragma once

#include "pclprompt/backbone.hpp"
#include "pclprompt/head.hpp"
#include "pclprompt/prompting.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace pclprompt {

struct OptimConfig {
  double lr = 1e-3;
  double min_lr = 1e-6;
  double weight_decay = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  bool operator==(const OptimConfig&) const = default;
};

// Cosine decay from cfg.lr at step 0 to cfg.min_lr at step total_steps - 1.
double cosine_lr(const OptimConfig& cfg, std::size_t step, std::size_t total_steps);

// Adam moments with weight decay applied directly to the parameters.
template <typename T>
class AdamW {
 public:
  AdamW(std::vector<Tensor<T>> params, const OptimConfig& cfg, std::size_t total_steps);

  // Consumes the accumulated gradients, then clears them.
  void step();
  std::size_t steps_taken() const { return step_; }
  double last_lr() const { return last_lr_; }

 private:
  std::vector<Tensor<T>> params_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  OptimConfig cfg_;
  std::size_t total_;
  std::size_t step_ = 0;
  double last_lr_ = 0;
};

// Frozen backbone plus the strategy's tunables and head.
template <typename T>
struct TunedModel {
  Backbone<T> backbone;
  PromptModule<T> prompts;
  ClassifierHead<T> head;

  // Clones `pretrained`, initializes tunables from `seed`, sets trainable flags.
  static TunedModel create(const Backbone<T>& pretrained, const StrategyConfig& strategy,
                           const HeadConfig& head_cfg, std::uint64_t seed);

  const StrategyConfig& strategy() const { return prompts.strategy(); }
  // Deepest layer whose output does not depend on tunables.
  std::size_t frozen_prefix() const;
  // Sequence at frozen_prefix(); its values can be cached while the backbone is frozen.
  TokenSequence<T> prefix(const PointCloud& cloud) const;
  TokenSequence<T> finish(const TokenSequence<T>& prefix_seq,
                          TokenSequence<T>* last_input = nullptr) const;
  TokenSequence<T> forward(const PointCloud& cloud) const { return finish(prefix(cloud)); }
  Tensor<T> logits(const PointCloud& cloud) const { return head(forward(cloud)); }

  void register_params(ParamStore<T>& store) const;
  // Prompt, generator and head tensors, plus the backbone when it is trained.
  void register_tunables(ParamStore<T>& store) const;
};

struct TuneConfig {
  std::size_t epochs = 50;
  std::size_t batch = 32;
  OptimConfig optim;
  std::uint64_t seed = 0;
  AugmentSpec augment;  // training-time augmentation
  std::size_t threads = 1;  // evaluation workers
  bool operator==(const TuneConfig&) const = default;
};

struct EpochMetrics {
  double train_loss = 0;
  double train_acc = 0;
  double test_acc = 0;
};

struct RunMetrics {
  std::string strategy;
  std::uint64_t seed = 0;
  double initial_test_acc = 0;
  std::vector<EpochMetrics> epochs;
  std::vector<int> test_predictions;  // after the last epoch
  bool frozen_intact = true;
  double wall_seconds = 0;

  double final_test_acc() const { return epochs.empty() ? initial_test_acc : epochs.back().test_acc; }
};

// Trains exactly the strategy's tunables with cross-entropy. Throws if a
// frozen backbone tensor changed.
template <typename T>
RunMetrics tune(TunedModel<T>& model, const std::vector<PointCloud>& train,
                const std::vector<PointCloud>& test, const TuneConfig& cfg);

struct EvalConfig {
  std::size_t votes = 1;
  AugmentSpec augment;  // per-vote augmentation
  std::uint64_t seed = 0;
  std::size_t threads = 1;
};

// Argmax of logits averaged over `votes` augmented passes per sample.
template <typename T>
std::vector<int> predict(const TunedModel<T>& model, const std::vector<PointCloud>& samples,
                         const EvalConfig& cfg);
template <typename T>
double evaluate(const TunedModel<T>& model, const std::vector<PointCloud>& samples,
                const EvalConfig& cfg);

double accuracy(const std::vector<int>& predictions, const std::vector<PointCloud>& samples);

// Masked-autoencoder pretraining: a learned mask token (plus the patch
// position) replaces masked patches; a two-layer decoder regresses each
// masked patch's k points from its final token.
template <typename T>
struct MaeDecoder {
  Tensor<T> mask_token;  // 1 x d
  Linear<T> fc1;         // d -> d
  Linear<T> fc2;         // d -> 3k

  static MaeDecoder init(const BackboneConfig& cfg, Rng& rng);
  void register_params(ParamStore<T>& store) const;
};

struct PretrainConfig {
  double mask_ratio = 0.6;
  std::size_t epochs = 30;
  std::size_t batch = 8;
  OptimConfig optim;
  std::uint64_t seed = 0;
  bool operator==(const PretrainConfig&) const = default;
};

struct PretrainResult {
  double initial_loss = 0;  // fixed evaluation masks, before any update
  double final_loss = 0;    // same masks, after training
  std::vector<double> epoch_loss;  // mean training loss per epoch
  double wall_seconds = 0;
};

// ceil(ratio * m) distinct patch indices, ascending.
std::vector<std::size_t> mae_mask(std::size_t m, double ratio, Rng& rng);

// Mean Chamfer distance between decoded and true groups over masked patches.
template <typename T>
Tensor<T> mae_loss(const Backbone<T>& backbone, const MaeDecoder<T>& decoder,
                   const PatchSet& patches, const std::vector<std::size_t>& masked);

template <typename T>
PretrainResult pretrain_mae(Backbone<T>& backbone, const std::vector<PointCloud>& clouds,
                            const PretrainConfig& cfg);

struct FewShotConfig {
  std::size_t n_way = 5;
  std::size_t m_shot = 10;
  std::size_t queries = 20;  // per class
  std::size_t episodes = 5;
  std::uint64_t seed = 0;
  bool operator==(const FewShotConfig&) const = default;
};

struct FewShotResult {
  std::vector<double> accuracies;
  double mean = 0;
  double stddev = 0;  // sample standard deviation, 0 for one episode
};

// Tunes a fresh copy of `pretrained` on each episode's supports and scores its queries.
template <typename T>
FewShotResult few_shot_run(const Backbone<T>& pretrained, const StrategyConfig& strategy,
                           const HeadConfig& head, const std::vector<PointCloud>& pool,
                           const FewShotConfig& cfg, const TuneConfig& tune_cfg);

extern template class AdamW<float>;
extern template class AdamW<double>;
extern template struct TunedModel<float>;
extern template struct TunedModel<double>;
extern template struct MaeDecoder<float>;
extern template struct MaeDecoder<double>;

}  // namespace pclprompt
