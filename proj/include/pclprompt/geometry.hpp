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

#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pclprompt {

using Rng = std::mt19937_64;

struct PointCloud {
  std::vector<float> points;  // M x 3, row-major
  std::optional<int> label;
  std::string shape_kind;  // generator that produced the cloud, if synthetic
  std::string submode = "clean";

  std::size_t size() const { return points.size() / 3; }
  std::array<float, 3> point(std::size_t i) const {
    return {points[3 * i], points[3 * i + 1], points[3 * i + 2]};
  }
};

// Affine map applied by normalize_unit_sphere: p' = (p - offset) * scale.
struct NormalizeRecord {
  std::array<double, 3> offset{};
  double scale = 1.0;
};

// Centers on the centroid and scales the farthest point to norm 1.
NormalizeRecord normalize_unit_sphere(PointCloud& cloud);

// m patches, each with k neighbours listed by ascending distance to the center.
struct PatchSet {
  std::size_t m = 0;
  std::size_t k = 0;
  std::vector<double> centers;               // m x 3
  std::vector<double> groups;                // m x k x 3, center-relative
  std::vector<std::size_t> source_indices;   // m x k
  std::vector<std::size_t> center_indices;   // m
};

std::vector<std::size_t> farthest_point_sample(const PointCloud& cloud, std::size_t m,
                                               std::size_t start = 0);

// Brute-force k nearest rows of `reference` for each row of `queries`, both
// row-major with `dim` columns. Returns Q x k indices ordered by ascending
// distance; equal distances keep the lower reference index first.
template <typename T>
std::vector<std::size_t> knn(std::span<const T> queries, std::span<const T> reference,
                             std::size_t dim, std::size_t k) {
  if (dim == 0 || queries.size() % dim || reference.size() % dim) {
    throw std::invalid_argument("knn: buffers are not multiples of dim");
  }
  const std::size_t q = queries.size() / dim;
  const std::size_t r = reference.size() / dim;
  if (k > r) {
    throw std::invalid_argument("knn: k=" + std::to_string(k) + " exceeds " +
                                std::to_string(r) + " reference points");
  }
  std::vector<std::size_t> out(q * k);
  std::vector<double> dist(r);
  std::vector<std::size_t> order(r);
  for (std::size_t i = 0; i < q; ++i) {
    for (std::size_t j = 0; j < r; ++j) {
      double acc = 0;
      for (std::size_t c = 0; c < dim; ++c) {
        const double diff = static_cast<double>(queries[i * dim + c]) -
                            static_cast<double>(reference[j * dim + c]);
        acc += diff * diff;
      }
      dist[j] = acc;
    }
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                      [&](std::size_t a, std::size_t b) {
                        return dist[a] < dist[b] || (dist[a] == dist[b] && a < b);
                      });
    std::copy_n(order.begin(), k, out.begin() + static_cast<std::ptrdiff_t>(i * k));
  }
  return out;
}

// FPS centers (start index 0) plus kNN groups translated to their centers.
PatchSet group_patches(const PointCloud& cloud, std::size_t m, std::size_t k);

// Symmetric Chamfer distance: mean squared NN distance a->b plus b->a.
double chamfer(std::span<const double> a, std::span<const double> b);

struct AugmentSpec {
  bool scale = false;
  bool translate = false;
  bool rotate_z = false;
  bool rotate_so3 = false;
  bool jitter = false;
  double scale_low = 0.8;
  double scale_high = 1.25;
  double translate_range = 0.1;
  double jitter_sigma = 0.01;
  double jitter_clip = 0.05;

  bool empty() const { return !(scale || translate || rotate_z || rotate_so3 || jitter); }
  bool operator==(const AugmentSpec&) const = default;
};

// Parses a comma list such as "scale,translate"; "none" or "" is empty.
AugmentSpec parse_augment_list(const std::string& text);
std::string render_augment_list(const AugmentSpec& spec);

// Parameters drawn by one augment() call.
struct AugmentRecord {
  double scale = 1.0;
  std::array<double, 3> translation{};
  std::array<double, 9> rotation{1, 0, 0, 0, 1, 0, 0, 0, 1};
};

// Applies rotation, then scale, then translation, then jitter.
PointCloud augment(const PointCloud& cloud, const AugmentSpec& spec, Rng& rng,
                   AugmentRecord* record = nullptr);

}  // namespace pclprompt
