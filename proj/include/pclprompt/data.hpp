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

// Synthetic shape datasets. Every class has clean samples plus corrupted
// variants (cropped regions, jitter, clutter) of the same base shapes, so each
// class splits into several sub-distributions.

#pragma once

#include "pclprompt/geometry.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace pclprompt {

enum class ShapeKind { Sphere, Cube, Cylinder, Cone, Torus, Plane, Capsule, Cross };
enum class SubMode { Clean, CropMissing, JitterNoise, OutlierClutter };

const char* shape_kind_name(ShapeKind kind);
ShapeKind parse_shape_kind(const std::string& text);
const char* submode_name(SubMode mode);
SubMode parse_submode(const std::string& text);

std::vector<ShapeKind> all_shape_kinds();
std::vector<SubMode> all_submodes();

// M surface samples with randomly drawn proportions, normalized to the unit sphere.
PointCloud generate_shape(ShapeKind kind, std::size_t points, Rng& rng);

struct CorruptionRecord {
  SubMode mode = SubMode::Clean;
  std::vector<bool> removed;             // crop: input points cut away
  std::vector<std::size_t> source;       // output point i came from input point source[i]
  double sigma = 0;                      // jitter standard deviation, pre-normalization
  std::vector<std::size_t> replaced;     // clutter: output indices holding outliers
  NormalizeRecord normalize;             // renormalization applied last
};

// Clean is the identity; the other modes renormalize their output.
PointCloud corrupt(const PointCloud& cloud, SubMode mode, Rng& rng,
                   CorruptionRecord* record = nullptr);

struct DatasetSpec {
  std::vector<ShapeKind> classes = all_shape_kinds();
  std::vector<SubMode> submodes = all_submodes();
  std::size_t samples_per_cell = 40;  // per class and sub-mode
  std::size_t points = 512;
  double train_fraction = 0.8;
  double test_fraction = 0.2;
  std::uint64_t seed = 0;

  std::vector<std::string> problems() const;
  void validate() const;
  bool operator==(const DatasetSpec&) const = default;
};

struct ManifestRow {
  std::string path;  // relative to the dataset directory
  int class_id = 0;
  std::string split;  // "train" or "test"
  SubMode submode = SubMode::Clean;
  std::uint64_t seed = 0;
  std::size_t base_index = 0;  // which base shape of its class
  ShapeKind kind = ShapeKind::Sphere;
};

struct Manifest {
  std::vector<ManifestRow> rows;
};

// Row layout, seeds and split tags, without generating any geometry.
Manifest plan_dataset(const DatasetSpec& spec);
// Geometry of one planned row; identical however rows are scheduled.
PointCloud generate_row(const DatasetSpec& spec, const ManifestRow& row);

// Writes clouds/*.pcld plus manifest.tsv under `dir` and returns the manifest.
Manifest build_dataset(const DatasetSpec& spec, const std::string& dir);

void write_manifest(const Manifest& manifest, const std::string& path);
Manifest read_manifest(const std::string& path);

void write_cloud(const PointCloud& cloud, const std::string& path);
PointCloud read_cloud(const std::string& path);

// Clouds of one split ("" = all rows) with label, shape kind and sub-mode filled in.
std::vector<PointCloud> load_split(const std::string& dir, const Manifest& manifest,
                                   const std::string& split);

struct Episode {
  std::vector<int> classes;          // sampled original labels, episode label = position
  std::vector<std::size_t> support;  // indices into the label list
  std::vector<std::size_t> query;
};

Episode few_shot_split(const std::vector<int>& labels, std::size_t n_way, std::size_t m_shot,
                       std::size_t queries, std::uint64_t seed);
Episode few_shot_split(const Manifest& manifest, std::size_t n_way, std::size_t m_shot,
                       std::size_t queries, std::uint64_t seed);

// Stateless stream derivation: independent generators per (seed, salt).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt);

}  // namespace pclprompt
