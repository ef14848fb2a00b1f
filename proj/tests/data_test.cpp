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

#include "testkit.hpp"

#include "pclprompt/binary_io.hpp"
#include "pclprompt/data.hpp"

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <map>
#include <set>

namespace pclprompt {
namespace {

double norm_of(const PointCloud& c, std::size_t i) {
  const auto p = c.point(i);
  return std::sqrt(double(p[0]) * p[0] + double(p[1]) * p[1] + double(p[2]) * p[2]);
}

// Smallest eigenvalue of the point covariance.
double flatness(const PointCloud& c) {
  Eigen::MatrixXd pts(c.size(), 3);
  for (std::size_t i = 0; i < c.size(); ++i) {
    for (int k = 0; k < 3; ++k) pts(i, k) = c.points[3 * i + k];
  }
  const Eigen::MatrixXd centered = pts.rowwise() - pts.colwise().mean();
  const Eigen::Matrix3d cov = centered.transpose() * centered / double(c.size());
  return Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d>(cov).eigenvalues()(0);
}

// Undo the renormalization recorded by a corruption.
std::array<double, 3> unnormalized(const PointCloud& c, std::size_t i, const NormalizeRecord& rec) {
  const auto p = c.point(i);
  return {p[0] / rec.scale + rec.offset[0], p[1] / rec.scale + rec.offset[1], p[2] / rec.scale + rec.offset[2]};
}

DatasetSpec small_spec() {
  DatasetSpec spec;
  spec.classes = {ShapeKind::Sphere, ShapeKind::Cube, ShapeKind::Torus};
  spec.samples_per_cell = 5;
  spec.points = 64;
  spec.seed = 17;
  return spec;
}

TEST(Shapes, SphereIsCenteredWithEqualNorms) {
  Rng rng(70);
  for (int trial = 0; trial < 10; ++trial) {
    const auto c = generate_shape(ShapeKind::Sphere, 200 + trial, rng);
    for (std::size_t i = 0; i < c.size(); ++i) EXPECT_NEAR(norm_of(c, i), 1.0, 1e-5);
  }
}

TEST(Shapes, PlaneIsCoplanar) {
  Rng rng(71);
  for (int trial = 0; trial < 10; ++trial) {
    EXPECT_LT(flatness(generate_shape(ShapeKind::Plane, 256, rng)), 1e-10);
    EXPECT_GT(flatness(generate_shape(ShapeKind::Cube, 256, rng)), 1e-3);
  }
}

TEST(Shapes, EveryKindIsUnitNormalized) {
  Rng rng(72);
  for (auto kind : all_shape_kinds()) {
    const auto c = generate_shape(kind, 300, rng);
    ASSERT_EQ(c.size(), 300u);
    EXPECT_EQ(c.shape_kind, shape_kind_name(kind));
    double rmax = 0;
    for (std::size_t i = 0; i < c.size(); ++i) rmax = std::max(rmax, norm_of(c, i));
    EXPECT_NEAR(rmax, 1.0, 1e-5) << shape_kind_name(kind);
    EXPECT_EQ(parse_shape_kind(shape_kind_name(kind)), kind);
  }
  EXPECT_THROW(parse_shape_kind("blob"), std::invalid_argument);
}

TEST(Corruption, CropRemovesFortyToSixtyPercent) {
  Rng rng(73);
  for (int trial = 0; trial < 30; ++trial) {
    const auto base = generate_shape(all_shape_kinds()[trial % 8], 200, rng);
    CorruptionRecord rec;
    const auto out = corrupt(base, SubMode::CropMissing, rng, &rec);
    EXPECT_EQ(out.size(), base.size());
    EXPECT_EQ(out.submode, "crop_missing");
    const auto removed = std::count(rec.removed.begin(), rec.removed.end(), true);
    EXPECT_GE(removed, 80);
    EXPECT_LE(removed, 120);
    for (std::size_t i = 0; i < out.size(); ++i) {
      ASSERT_FALSE(rec.removed[rec.source[i]]);
      const auto q = unnormalized(out, i, rec.normalize);
      const auto p = base.point(rec.source[i]);
      for (int k = 0; k < 3; ++k) EXPECT_NEAR(q[k], p[k], 1e-5);
    }
  }
}

TEST(Corruption, JitterStaysWithinItsSigma) {
  Rng rng(74);
  for (int trial = 0; trial < 10; ++trial) {
    const auto base = generate_shape(ShapeKind::Cube, 500, rng);
    CorruptionRecord rec;
    const auto out = corrupt(base, SubMode::JitterNoise, rng, &rec);
    EXPECT_GE(rec.sigma, 0.08);
    EXPECT_LE(rec.sigma, 0.15);
    double sq = 0;
    for (std::size_t i = 0; i < out.size(); ++i) {
      const auto q = unnormalized(out, i, rec.normalize);
      const auto p = base.point(i);
      for (int k = 0; k < 3; ++k) sq += (q[k] - p[k]) * (q[k] - p[k]);
    }
    EXPECT_NEAR(std::sqrt(sq / (3.0 * out.size())), rec.sigma, 0.25 * rec.sigma);
  }
}

TEST(Corruption, ClutterReplacesThirtyToFortyFivePercent) {
  Rng rng(75);
  for (int trial = 0; trial < 10; ++trial) {
    const auto base = generate_shape(ShapeKind::Torus, 300, rng);
    CorruptionRecord rec;
    const auto out = corrupt(base, SubMode::OutlierClutter, rng, &rec);
    EXPECT_GE(rec.replaced.size(), 90u);
    EXPECT_LE(rec.replaced.size(), 135u);
    const std::set<std::size_t> replaced(rec.replaced.begin(), rec.replaced.end());
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (replaced.count(i)) continue;
      const auto q = unnormalized(out, i, rec.normalize);
      const auto p = base.point(i);
      for (int k = 0; k < 3; ++k) EXPECT_NEAR(q[k], p[k], 1e-5);
    }
  }
}

TEST(Corruption, CleanIsIdentity) {
  Rng rng(76);
  const auto base = generate_shape(ShapeKind::Cone, 100, rng);
  EXPECT_EQ(corrupt(base, SubMode::Clean, rng).points, base.points);
  for (auto m : all_submodes()) EXPECT_EQ(parse_submode(submode_name(m)), m);
}

TEST(Dataset, PlanIsStratifiedBySharedBaseShapes) {
  const auto spec = small_spec();
  const auto manifest = plan_dataset(spec);
  ASSERT_EQ(manifest.rows.size(), 3u * 4 * 5);
  std::map<std::tuple<int, SubMode, std::string>, int> cells;
  std::map<std::pair<int, std::size_t>, std::set<std::string>> base_splits;
  for (const auto& r : manifest.rows) {
    ++cells[{r.class_id, r.submode, r.split}];
    base_splits[{r.class_id, r.base_index}].insert(r.split);
  }
  for (int c = 0; c < 3; ++c) {
    for (auto m : all_submodes()) {
      EXPECT_EQ((cells[{c, m, "train"}]), 4);
      EXPECT_EQ((cells[{c, m, "test"}]), 1);
    }
  }
  for (const auto& [base, splits] : base_splits) EXPECT_EQ(splits.size(), 1u);
}

TEST(Dataset, BuildIsByteDeterministicAndLoadable) {
  const auto spec = small_spec();
  testkit::TempDir a("data_a"), b("data_b");
  const auto ma = build_dataset(spec, a.path());
  build_dataset(spec, b.path());
  EXPECT_EQ(testkit::read_text(a.file("manifest.tsv")), testkit::read_text(b.file("manifest.tsv")));
  for (const auto& r : ma.rows) {
    ASSERT_EQ(testkit::read_text(a.file(r.path)), testkit::read_text(b.file(r.path))) << r.path;
  }
  const auto read = read_manifest(a.file("manifest.tsv"));
  ASSERT_EQ(read.rows.size(), ma.rows.size());
  for (std::size_t i = 0; i < ma.rows.size(); ++i) {
    EXPECT_EQ(read.rows[i].path, ma.rows[i].path);
    EXPECT_EQ(read.rows[i].seed, ma.rows[i].seed);
    EXPECT_EQ(read.rows[i].submode, ma.rows[i].submode);
    EXPECT_EQ(read.rows[i].base_index, ma.rows[i].base_index);
  }
  const auto test = load_split(a.path(), read, "test");
  EXPECT_EQ(test.size(), 12u);
  for (const auto& c : test) {
    ASSERT_TRUE(c.label.has_value());
    EXPECT_EQ(c.size(), spec.points);
  }
  const auto row = ma.rows[7];
  EXPECT_EQ(read_cloud(a.file(row.path)).points, generate_row(spec, row).points);
}

TEST(Dataset, DifferentSeedChangesClouds) {
  auto spec = small_spec();
  const auto row = plan_dataset(spec).rows[0];
  const auto before = generate_row(spec, row);
  spec.seed = 18;
  EXPECT_NE(generate_row(spec, plan_dataset(spec).rows[0]).points, before.points);
}

TEST(Dataset, SpecValidation) {
  auto spec = small_spec();
  spec.classes = {ShapeKind::Cube};
  spec.train_fraction = 0.5;
  spec.points = 4;
  EXPECT_EQ(spec.problems().size(), 3u);
  EXPECT_THROW(plan_dataset(spec), std::invalid_argument);
}

TEST(Dataset, CloudFileRejectsDamage) {
  testkit::TempDir dir("cloud");
  Rng rng(77);
  const auto cloud = generate_shape(ShapeKind::Capsule, 32, rng);
  write_cloud(cloud, dir.file("c.pcld"));
  EXPECT_EQ(read_cloud(dir.file("c.pcld")).points, cloud.points);
  auto bytes = io::read_file(dir.file("c.pcld"));
  bytes[0] = 'X';
  io::write_file(dir.file("bad.pcld"), bytes);
  EXPECT_THROW(read_cloud(dir.file("bad.pcld")), io::FormatError);
  bytes = io::read_file(dir.file("c.pcld"));
  bytes.resize(bytes.size() - 2);
  io::write_file(dir.file("short.pcld"), bytes);
  EXPECT_THROW(read_cloud(dir.file("short.pcld")), io::FormatError);
}

TEST(FewShotSplit, SupportAndQueryAreDisjoint) {
  std::vector<int> labels;
  for (int c = 0; c < 8; ++c) {
    for (int i = 0; i < 30; ++i) labels.push_back(c);
  }
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto ep = few_shot_split(labels, 5, 10, 20, seed);
    EXPECT_EQ(ep.classes.size(), 5u);
    EXPECT_EQ(std::set<int>(ep.classes.begin(), ep.classes.end()).size(), 5u);
    EXPECT_EQ(ep.support.size(), 50u);
    EXPECT_EQ(ep.query.size(), 100u);
    std::set<std::size_t> s(ep.support.begin(), ep.support.end());
    for (auto q : ep.query) EXPECT_FALSE(s.count(q));
    for (std::size_t i = 0; i < ep.support.size(); ++i) EXPECT_EQ(labels[ep.support[i]], ep.classes[i / 10]);
    const auto again = few_shot_split(labels, 5, 10, 20, seed);
    EXPECT_EQ(again.support, ep.support);
    EXPECT_EQ(again.query, ep.query);
  }
  EXPECT_THROW(few_shot_split(labels, 9, 10, 20, 0), std::invalid_argument);
  EXPECT_THROW(few_shot_split(labels, 5, 20, 20, 0), std::invalid_argument);
}

TEST(Seeds, MixSeedSeparatesSalts) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t s = 0; s < 10; ++s) {
    for (std::uint64_t salt = 0; salt < 100; ++salt) seen.insert(mix_seed(s, salt));
  }
  EXPECT_EQ(seen.size(), 1000u);
}

}  // namespace
}  // namespace pclprompt
