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

#include "pclprompt/geometry.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace pclprompt {

NormalizeRecord normalize_unit_sphere(PointCloud& cloud) {
  const std::size_t n = cloud.size();
  if (n == 0) throw std::invalid_argument("normalize_unit_sphere: empty cloud");
  NormalizeRecord rec;
  for (std::size_t i = 0; i < n; ++i) {
    for (int c = 0; c < 3; ++c) rec.offset[c] += cloud.points[3 * i + c];
  }
  for (auto& o : rec.offset) o /= static_cast<double>(n);
  double far = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double sq = 0;
    for (int c = 0; c < 3; ++c) {
      const double v = cloud.points[3 * i + c] - rec.offset[c];
      sq += v * v;
    }
    far = std::max(far, sq);
  }
  far = std::sqrt(far);
  rec.scale = far > 0 ? 1.0 / far : 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (int c = 0; c < 3; ++c) {
      cloud.points[3 * i + c] =
          static_cast<float>((cloud.points[3 * i + c] - rec.offset[c]) * rec.scale);
    }
  }
  return rec;
}

std::vector<std::size_t> farthest_point_sample(const PointCloud& cloud, std::size_t m,
                                               std::size_t start) {
  const std::size_t n = cloud.size();
  if (m == 0 || m > n) {
    throw std::invalid_argument("farthest_point_sample: m=" + std::to_string(m) +
                                " invalid for " + std::to_string(n) + " points");
  }
  if (start >= n) throw std::invalid_argument("farthest_point_sample: start out of range");
  std::vector<std::size_t> picked{start};
  picked.reserve(m);
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  std::vector<bool> taken(n, false);
  taken[start] = true;
  std::size_t last = start;
  while (picked.size() < m) {
    std::size_t best = 0;
    double best_dist = -1;
    for (std::size_t i = 0; i < n; ++i) {
      double sq = 0;
      for (int c = 0; c < 3; ++c) {
        const double d = static_cast<double>(cloud.points[3 * i + c]) -
                         static_cast<double>(cloud.points[3 * last + c]);
        sq += d * d;
      }
      nearest[i] = std::min(nearest[i], sq);
      if (!taken[i] && nearest[i] > best_dist) {
        best_dist = nearest[i];
        best = i;
      }
    }
    picked.push_back(best);
    taken[best] = true;
    last = best;
  }
  return picked;
}

PatchSet group_patches(const PointCloud& cloud, std::size_t m, std::size_t k) {
  const std::size_t n = cloud.size();
  if (k == 0 || k > n) {
    throw std::invalid_argument("group_patches: k=" + std::to_string(k) + " invalid for " +
                                std::to_string(n) + " points");
  }
  PatchSet ps;
  ps.m = m;
  ps.k = k;
  ps.center_indices = farthest_point_sample(cloud, m, 0);
  std::vector<float> centers(3 * m);
  ps.centers.resize(3 * m);
  for (std::size_t i = 0; i < m; ++i) {
    for (int c = 0; c < 3; ++c) {
      centers[3 * i + c] = cloud.points[3 * ps.center_indices[i] + c];
      ps.centers[3 * i + c] = centers[3 * i + c];
    }
  }
  ps.source_indices = knn<float>(centers, cloud.points, 3, k);
  ps.groups.resize(m * k * 3);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      const std::size_t src = ps.source_indices[i * k + j];
      for (int c = 0; c < 3; ++c) {
        ps.groups[(i * k + j) * 3 + c] =
            static_cast<double>(cloud.points[3 * src + c]) - ps.centers[3 * i + c];
      }
    }
  }
  return ps;
}

double chamfer(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("chamfer: empty point set");
  if (a.size() % 3 || b.size() % 3) throw std::invalid_argument("chamfer: expected xyz rows");
  const std::size_t na = a.size() / 3;
  const std::size_t nb = b.size() / 3;
  auto directed = [](std::span<const double> from, std::size_t nf,
                     std::span<const double> to, std::size_t nt) {
    double total = 0;
    for (std::size_t i = 0; i < nf; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < nt; ++j) {
        double sq = 0;
        for (int c = 0; c < 3; ++c) {
          const double d = from[3 * i + c] - to[3 * j + c];
          sq += d * d;
        }
        best = std::min(best, sq);
      }
      total += best;
    }
    return total / static_cast<double>(nf);
  };
  return directed(a, na, b, nb) + directed(b, nb, a, na);
}

AugmentSpec parse_augment_list(const std::string& text) {
  AugmentSpec spec;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (item.empty() || item == "none") continue;
    if (item == "scale") {
      spec.scale = true;
    } else if (item == "translate") {
      spec.translate = true;
    } else if (item == "rotate_z") {
      spec.rotate_z = true;
    } else if (item == "rotate_so3") {
      spec.rotate_so3 = true;
    } else if (item == "jitter") {
      spec.jitter = true;
    } else {
      throw std::invalid_argument("unknown augmentation '" + item + "'");
    }
  }
  return spec;
}

std::string render_augment_list(const AugmentSpec& spec) {
  std::string out;
  auto push = [&](bool on, const char* name) {
    if (!on) return;
    if (!out.empty()) out += ',';
    out += name;
  };
  push(spec.scale, "scale");
  push(spec.translate, "translate");
  push(spec.rotate_z, "rotate_z");
  push(spec.rotate_so3, "rotate_so3");
  push(spec.jitter, "jitter");
  return out.empty() ? "none" : out;
}

namespace {

std::array<double, 9> compose(const std::array<double, 9>& a, const std::array<double, 9>& b) {
  std::array<double, 9> out{};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      for (int k = 0; k < 3; ++k) out[3 * i + j] += a[3 * i + k] * b[3 * k + j];
    }
  }
  return out;
}

}  // namespace

PointCloud augment(const PointCloud& cloud, const AugmentSpec& spec, Rng& rng,
                   AugmentRecord* record) {
  AugmentRecord rec;
  PointCloud out = cloud;
  if (spec.empty()) {
    if (record) *record = rec;
    return out;
  }
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  if (spec.rotate_so3) {
    // Uniform rotation from a normalized Gaussian quaternion.
    std::normal_distribution<double> gauss(0.0, 1.0);
    double q[4];
    double norm = 0;
    do {
      norm = 0;
      for (double& v : q) {
        v = gauss(rng);
        norm += v * v;
      }
    } while (norm < 1e-12);
    norm = std::sqrt(norm);
    for (double& v : q) v /= norm;
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    rec.rotation = {1 - 2 * (y * y + z * z), 2 * (x * y - z * w),     2 * (x * z + y * w),
                    2 * (x * y + z * w),     1 - 2 * (x * x + z * z), 2 * (y * z - x * w),
                    2 * (x * z - y * w),     2 * (y * z + x * w),     1 - 2 * (x * x + y * y)};
  }
  if (spec.rotate_z) {
    const double theta = 2 * std::numbers::pi * unit(rng);
    const double c = std::cos(theta);
    const double s = std::sin(theta);
    rec.rotation = compose({c, -s, 0, s, c, 0, 0, 0, 1}, rec.rotation);
  }
  if (spec.scale) {
    rec.scale = spec.scale_low + (spec.scale_high - spec.scale_low) * unit(rng);
  }
  if (spec.translate) {
    for (auto& t : rec.translation) {
      t = -spec.translate_range + 2 * spec.translate_range * unit(rng);
    }
  }
  std::normal_distribution<double> noise(0.0, spec.jitter_sigma);
  const auto& r = rec.rotation;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double p[3] = {cloud.points[3 * i], cloud.points[3 * i + 1], cloud.points[3 * i + 2]};
    for (int row = 0; row < 3; ++row) {
      double v = r[3 * row] * p[0] + r[3 * row + 1] * p[1] + r[3 * row + 2] * p[2];
      v = v * rec.scale + rec.translation[row];
      if (spec.jitter) {
        v += std::clamp(noise(rng), -spec.jitter_clip, spec.jitter_clip);
      }
      out.points[3 * i + row] = static_cast<float>(v);
    }
  }
  if (record) *record = rec;
  return out;
}

}  // namespace pclprompt
