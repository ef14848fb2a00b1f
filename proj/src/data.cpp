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

#include "pclprompt/data.hpp"

#include "pclprompt/binary_io.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

namespace pclprompt {

namespace {

constexpr double kPi = std::numbers::pi;

using Vec3 = std::array<double, 3>;

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

Vec3 unit_vector(Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  for (;;) {
    Vec3 v{n(rng), n(rng), n(rng)};
    const double len = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    if (len > 1e-12) return {v[0] / len, v[1] / len, v[2] / len};
  }
}

// Index drawn proportionally to `weights`.
std::size_t pick(Rng& rng, std::initializer_list<double> weights) {
  double total = 0;
  for (double w : weights) total += w;
  double u = uniform(rng, 0.0, total);
  std::size_t i = 0;
  for (double w : weights) {
    if (u < w) return i;
    u -= w;
    ++i;
  }
  return weights.size() - 1;
}

// A point on the surface of the axis-aligned box with the given half extents.
Vec3 box_surface(Rng& rng, const Vec3& h) {
  const std::size_t axis = pick(rng, {h[1] * h[2], h[0] * h[2], h[0] * h[1]});
  Vec3 p{uniform(rng, -h[0], h[0]), uniform(rng, -h[1], h[1]), uniform(rng, -h[2], h[2])};
  p[axis] = uniform(rng, 0.0, 1.0) < 0.5 ? -h[axis] : h[axis];
  return p;
}

// Shape parameters are drawn once; `sample` then draws single surface points.
struct Surface {
  ShapeKind kind;
  bool symmetric = true;  // invariant under p -> -p
  Vec3 box{};
  Vec3 arm_a{};
  Vec3 arm_b{};
  double radius = 0;
  double half_height = 0;
  double major = 0;
  double minor = 0;

  Vec3 sample(Rng& rng) const {
    switch (kind) {
      case ShapeKind::Sphere: return unit_vector(rng);
      case ShapeKind::Cube: return box_surface(rng, box);
      case ShapeKind::Plane:
        return {uniform(rng, -box[0], box[0]), uniform(rng, -box[1], box[1]), 0.0};
      case ShapeKind::Cross:
        return pick(rng, {box_area(arm_a), box_area(arm_b)}) == 0 ? box_surface(rng, arm_a)
                                                                   : box_surface(rng, arm_b);
      case ShapeKind::Cylinder: {
        const double side = 4 * kPi * radius * half_height;
        const double cap = kPi * radius * radius;
        const double theta = uniform(rng, 0.0, 2 * kPi);
        if (pick(rng, {side, 2 * cap}) == 0) {
          return {radius * std::cos(theta), radius * std::sin(theta),
                  uniform(rng, -half_height, half_height)};
        }
        const double rho = radius * std::sqrt(uniform(rng, 0.0, 1.0));
        const double z = uniform(rng, 0.0, 1.0) < 0.5 ? -half_height : half_height;
        return {rho * std::cos(theta), rho * std::sin(theta), z};
      }
      case ShapeKind::Capsule: {
        const double side = 4 * kPi * radius * half_height;
        const double caps = 4 * kPi * radius * radius;
        if (pick(rng, {side, caps}) == 0) {
          const double theta = uniform(rng, 0.0, 2 * kPi);
          return {radius * std::cos(theta), radius * std::sin(theta),
                  uniform(rng, -half_height, half_height)};
        }
        const Vec3 d = unit_vector(rng);
        const double shift = d[2] >= 0 ? half_height : -half_height;
        return {radius * d[0], radius * d[1], shift + radius * d[2]};
      }
      case ShapeKind::Torus: {
        const double u = uniform(rng, 0.0, 2 * kPi);
        double v = 0;
        // area element is proportional to major + minor*cos(v)
        do {
          v = uniform(rng, 0.0, 2 * kPi);
        } while (uniform(rng, 0.0, major + minor) > major + minor * std::cos(v));
        const double ring = major + minor * std::cos(v);
        return {ring * std::cos(u), ring * std::sin(u), minor * std::sin(v)};
      }
      case ShapeKind::Cone: {
        const double slant = std::sqrt(radius * radius + half_height * half_height);
        const double lateral = kPi * radius * slant;
        const double base = kPi * radius * radius;
        const double theta = uniform(rng, 0.0, 2 * kPi);
        if (pick(rng, {lateral, base}) == 0) {
          const double s = std::sqrt(uniform(rng, 0.0, 1.0));  // distance from apex, fraction
          return {radius * s * std::cos(theta), radius * s * std::sin(theta),
                  half_height * (1 - s)};
        }
        const double rho = radius * std::sqrt(uniform(rng, 0.0, 1.0));
        return {rho * std::cos(theta), rho * std::sin(theta), 0.0};
      }
    }
    return {};
  }

  static double box_area(const Vec3& h) {
    return h[0] * h[1] + h[0] * h[2] + h[1] * h[2];
  }
};

Surface draw_surface(ShapeKind kind, Rng& rng) {
  Surface s;
  s.kind = kind;
  switch (kind) {
    case ShapeKind::Sphere: break;
    case ShapeKind::Cube:
      s.box = {uniform(rng, 0.7, 1.3), uniform(rng, 0.7, 1.3), uniform(rng, 0.7, 1.3)};
      break;
    case ShapeKind::Plane: s.box = {uniform(rng, 0.6, 1.0), uniform(rng, 0.6, 1.0), 0.0}; break;
    case ShapeKind::Cross: {
      const double length = uniform(rng, 0.8, 1.0);
      const double arm = uniform(rng, 0.15, 0.25);
      const double depth = uniform(rng, 0.15, 0.3);
      s.arm_a = {length, arm, depth};
      s.arm_b = {arm, length, depth};
      break;
    }
    case ShapeKind::Cylinder:
      s.radius = uniform(rng, 0.4, 0.7);
      s.half_height = uniform(rng, 0.6, 1.0);
      break;
    case ShapeKind::Capsule:
      s.radius = uniform(rng, 0.25, 0.4);
      s.half_height = uniform(rng, 0.5, 0.8);
      break;
    case ShapeKind::Torus:
      s.major = uniform(rng, 0.6, 0.8);
      s.minor = uniform(rng, 0.15, 0.3);
      break;
    case ShapeKind::Cone:
      s.symmetric = false;
      s.radius = uniform(rng, 0.5, 0.8);
      s.half_height = uniform(rng, 1.0, 1.5);  // full height for cones
      break;
  }
  return s;
}

void set_point(PointCloud& cloud, std::size_t i, const Vec3& p) {
  for (int c = 0; c < 3; ++c) cloud.points[3 * i + c] = static_cast<float>(p[c]);
}

}  // namespace

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  // splitmix64 finalizer over the combined word
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

const char* shape_kind_name(ShapeKind kind) {
  switch (kind) {
    case ShapeKind::Sphere: return "sphere";
    case ShapeKind::Cube: return "cube";
    case ShapeKind::Cylinder: return "cylinder";
    case ShapeKind::Cone: return "cone";
    case ShapeKind::Torus: return "torus";
    case ShapeKind::Plane: return "plane";
    case ShapeKind::Capsule: return "capsule";
    case ShapeKind::Cross: return "cross";
  }
  return "?";
}

ShapeKind parse_shape_kind(const std::string& text) {
  for (auto k : all_shape_kinds()) {
    if (text == shape_kind_name(k)) return k;
  }
  throw std::invalid_argument("unknown shape kind '" + text + "'");
}

const char* submode_name(SubMode mode) {
  switch (mode) {
    case SubMode::Clean: return "clean";
    case SubMode::CropMissing: return "crop_missing";
    case SubMode::JitterNoise: return "jitter_noise";
    case SubMode::OutlierClutter: return "outlier_clutter";
  }
  return "?";
}

SubMode parse_submode(const std::string& text) {
  for (auto m : all_submodes()) {
    if (text == submode_name(m)) return m;
  }
  throw std::invalid_argument("unknown sub-mode '" + text + "'");
}

std::vector<ShapeKind> all_shape_kinds() {
  return {ShapeKind::Sphere, ShapeKind::Cube,  ShapeKind::Cylinder, ShapeKind::Cone,
          ShapeKind::Torus,  ShapeKind::Plane, ShapeKind::Capsule,  ShapeKind::Cross};
}

std::vector<SubMode> all_submodes() {
  return {SubMode::Clean, SubMode::CropMissing, SubMode::JitterNoise, SubMode::OutlierClutter};
}

PointCloud generate_shape(ShapeKind kind, std::size_t points, Rng& rng) {
  if (points < 16) throw std::invalid_argument("generate_shape: need at least 16 points");
  const Surface surface = draw_surface(kind, rng);
  PointCloud cloud;
  cloud.points.resize(3 * points);
  cloud.shape_kind = shape_kind_name(kind);
  if (surface.symmetric) {
    // Mirrored pairs put the centroid exactly on the symmetry center.
    for (std::size_t i = 0; i + 1 < points; i += 2) {
      const Vec3 p = surface.sample(rng);
      set_point(cloud, i, p);
      set_point(cloud, i + 1, {-p[0], -p[1], -p[2]});
    }
    if (points % 2 && kind == ShapeKind::Sphere) {
      // three points 120 degrees apart on a great circle also sum to zero
      const Vec3 p = surface.sample(rng);
      const Vec3 a = unit_vector(rng);
      Vec3 q{p[1] * a[2] - p[2] * a[1], p[2] * a[0] - p[0] * a[2], p[0] * a[1] - p[1] * a[0]};
      const double qn = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2]);
      for (auto& v : q) v /= qn;
      const double s = std::sqrt(3.0) / 2;
      set_point(cloud, points - 3, p);
      set_point(cloud, points - 2, {-0.5 * p[0] + s * q[0], -0.5 * p[1] + s * q[1], -0.5 * p[2] + s * q[2]});
      set_point(cloud, points - 1, {-0.5 * p[0] - s * q[0], -0.5 * p[1] - s * q[1], -0.5 * p[2] - s * q[2]});
    } else if (points % 2) {
      set_point(cloud, points - 1, surface.sample(rng));
    }
  } else {
    for (std::size_t i = 0; i < points; ++i) set_point(cloud, i, surface.sample(rng));
  }
  normalize_unit_sphere(cloud);
  return cloud;
}

PointCloud corrupt(const PointCloud& cloud, SubMode mode, Rng& rng, CorruptionRecord* record) {
  CorruptionRecord rec;
  rec.mode = mode;
  const std::size_t n = cloud.size();
  PointCloud out = cloud;
  out.submode = submode_name(mode);
  rec.source.resize(n);
  std::iota(rec.source.begin(), rec.source.end(), std::size_t{0});
  switch (mode) {
    case SubMode::Clean:
      if (record) *record = std::move(rec);
      return out;
    case SubMode::CropMissing: {
      const double fraction = uniform(rng, 0.4, 0.6);
      const auto cut = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n)));
      std::vector<double> key(n);
      if (uniform(rng, 0.0, 1.0) < 0.5) {
        // half-space: drop the points furthest along a random direction
        const Vec3 dir = unit_vector(rng);
        for (std::size_t i = 0; i < n; ++i) {
          const auto p = cloud.point(i);
          key[i] = -(p[0] * dir[0] + p[1] * dir[1] + p[2] * dir[2]);
        }
      } else {
        // ball: drop the points nearest a random cloud point
        const auto c = cloud.point(std::uniform_int_distribution<std::size_t>(0, n - 1)(rng));
        for (std::size_t i = 0; i < n; ++i) {
          const auto p = cloud.point(i);
          key[i] = (p[0] - c[0]) * (p[0] - c[0]) + (p[1] - c[1]) * (p[1] - c[1]) +
                   (p[2] - c[2]) * (p[2] - c[2]);
        }
      }
      std::vector<std::size_t> order(n);
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return key[a] < key[b]; });
      rec.removed.assign(n, false);
      for (std::size_t i = 0; i < cut; ++i) rec.removed[order[i]] = true;
      std::vector<std::size_t> kept;
      for (std::size_t i = 0; i < n; ++i) {
        if (!rec.removed[i]) kept.push_back(i);
      }
      std::uniform_int_distribution<std::size_t> draw(0, kept.size() - 1);
      rec.source = kept;
      while (rec.source.size() < n) rec.source.push_back(kept[draw(rng)]);
      for (std::size_t i = 0; i < n; ++i) {
        for (int c = 0; c < 3; ++c) out.points[3 * i + c] = cloud.points[3 * rec.source[i] + c];
      }
      break;
    }
    case SubMode::JitterNoise: {
      rec.sigma = uniform(rng, 0.08, 0.15);
      std::normal_distribution<double> noise(0.0, rec.sigma);
      for (auto& v : out.points) v = static_cast<float>(v + noise(rng));
      break;
    }
    case SubMode::OutlierClutter: {
      const double fraction = uniform(rng, 0.3, 0.45);
      const auto count = static_cast<std::size_t>(std::lround(fraction * static_cast<double>(n)));
      std::vector<std::size_t> order(n);
      std::iota(order.begin(), order.end(), std::size_t{0});
      for (std::size_t i = 0; i < count; ++i) {
        std::swap(order[i], order[std::uniform_int_distribution<std::size_t>(i, n - 1)(rng)]);
      }
      rec.replaced.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(count));
      std::sort(rec.replaced.begin(), rec.replaced.end());
      for (auto i : rec.replaced) {
        Vec3 p;
        do {
          p = {uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1)};
        } while (p[0] * p[0] + p[1] * p[1] + p[2] * p[2] > 1.0);
        set_point(out, i, p);
      }
      break;
    }
  }
  rec.normalize = normalize_unit_sphere(out);
  if (record) *record = std::move(rec);
  return out;
}

std::vector<std::string> DatasetSpec::problems() const {
  std::vector<std::string> out;
  if (classes.size() < 2) out.push_back("data.classes needs at least 2 shape kinds");
  if (std::set<ShapeKind>(classes.begin(), classes.end()).size() != classes.size()) {
    out.push_back("data.classes lists a shape kind twice");
  }
  if (submodes.empty()) out.push_back("data.submodes must not be empty");
  if (std::set<SubMode>(submodes.begin(), submodes.end()).size() != submodes.size()) {
    out.push_back("data.submodes lists a sub-mode twice");
  }
  if (samples_per_cell < 1) out.push_back("data.samples_per_cell must be >= 1");
  if (points < 16) out.push_back("data.points must be >= 16");
  if (train_fraction < 0 || test_fraction < 0 ||
      std::abs(train_fraction + test_fraction - 1.0) > 1e-9) {
    out.push_back("data.train_fraction + data.test_fraction must equal 1");
  }
  return out;
}

void DatasetSpec::validate() const {
  const auto issues = problems();
  if (issues.empty()) return;
  std::string msg = "invalid dataset spec:";
  for (const auto& p : issues) msg += "\n  " + p;
  throw std::invalid_argument(msg);
}

Manifest plan_dataset(const DatasetSpec& spec) {
  spec.validate();
  const std::size_t per_class = spec.samples_per_cell;
  const auto test_bases = static_cast<std::size_t>(
      std::lround(spec.test_fraction * static_cast<double>(per_class)));
  Manifest manifest;
  for (std::size_t c = 0; c < spec.classes.size(); ++c) {
    // Base shapes, not rows, are split so a shape never sits on both sides.
    std::vector<std::size_t> bases(per_class);
    std::iota(bases.begin(), bases.end(), std::size_t{0});
    Rng split_rng(mix_seed(spec.seed, 0x5b117000ULL + c));
    std::shuffle(bases.begin(), bases.end(), split_rng);
    std::vector<bool> is_test(per_class, false);
    for (std::size_t i = 0; i < test_bases; ++i) is_test[bases[i]] = true;
    for (std::size_t b = 0; b < per_class; ++b) {
      for (auto mode : spec.submodes) {
        ManifestRow row;
        const std::size_t index = manifest.rows.size();
        row.class_id = static_cast<int>(c);
        row.kind = spec.classes[c];
        row.base_index = b;
        row.submode = mode;
        row.split = is_test[b] ? "test" : "train";
        row.seed = mix_seed(spec.seed, index);
        std::ostringstream name;
        name << "clouds/" << std::setfill('0') << std::setw(5) << index << '_'
             << shape_kind_name(row.kind) << '_' << submode_name(mode) << ".pcld";
        row.path = name.str();
        manifest.rows.push_back(std::move(row));
      }
    }
  }
  return manifest;
}

PointCloud generate_row(const DatasetSpec& spec, const ManifestRow& row) {
  Rng base_rng(mix_seed(spec.seed ^ 0xba5e0000ULL,
                        (static_cast<std::uint64_t>(row.class_id) << 32) | row.base_index));
  const PointCloud base = generate_shape(row.kind, spec.points, base_rng);
  Rng corrupt_rng(row.seed);
  PointCloud cloud = corrupt(base, row.submode, corrupt_rng);
  cloud.label = row.class_id;
  return cloud;
}

Manifest build_dataset(const DatasetSpec& spec, const std::string& dir) {
  const Manifest manifest = plan_dataset(spec);
  std::error_code ec;
  std::filesystem::create_directories(std::filesystem::path(dir) / "clouds", ec);
  if (ec) throw std::runtime_error("cannot create " + dir + "/clouds: " + ec.message());
  for (const auto& row : manifest.rows) {
    write_cloud(generate_row(spec, row), (std::filesystem::path(dir) / row.path).string());
  }
  write_manifest(manifest, (std::filesystem::path(dir) / "manifest.tsv").string());
  return manifest;
}

void write_manifest(const Manifest& manifest, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "path\tclass_id\tsplit\tsubmode\tseed\tshape\tbase\n";
  for (const auto& r : manifest.rows) {
    out << r.path << '\t' << r.class_id << '\t' << r.split << '\t' << submode_name(r.submode)
        << '\t' << r.seed << '\t' << shape_kind_name(r.kind) << '\t' << r.base_index << '\n';
  }
  if (!out) throw std::runtime_error("error writing " + path);
}

Manifest read_manifest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("path\tclass_id\tsplit\tsubmode\tseed", 0) != 0) {
    throw std::runtime_error(path + ": missing manifest header");
  }
  Manifest manifest;
  std::size_t number = 1;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, '\t')) fields.push_back(f);
    const auto where = path + ":" + std::to_string(number);
    if (fields.size() < 5) throw std::runtime_error(where + ": expected at least 5 fields");
    ManifestRow r;
    try {
      r.path = fields[0];
      r.class_id = std::stoi(fields[1]);
      r.split = fields[2];
      r.submode = parse_submode(fields[3]);
      r.seed = std::stoull(fields[4]);
      if (fields.size() > 5) r.kind = parse_shape_kind(fields[5]);
      if (fields.size() > 6) r.base_index = std::stoull(fields[6]);
    } catch (const std::exception& e) {
      throw std::runtime_error(where + ": " + e.what());
    }
    manifest.rows.push_back(std::move(r));
  }
  return manifest;
}

void write_cloud(const PointCloud& cloud, const std::string& path) {
  std::vector<unsigned char> bytes;
  bytes.reserve(12 + 4 * cloud.points.size());
  io::put_bytes(bytes, "PCLD", 4);
  io::put<std::uint32_t>(bytes, 1);
  io::put<std::uint32_t>(bytes, static_cast<std::uint32_t>(cloud.size()));
  for (float v : cloud.points) io::put(bytes, v);
  io::write_file(path, bytes);
}

PointCloud read_cloud(const std::string& path) {
  const auto bytes = io::read_file(path);
  io::Reader in(bytes, path);
  if (in.get_string(4) != "PCLD") throw io::FormatError(path + ": bad magic, expected PCLD");
  const auto version = in.get<std::uint32_t>();
  if (version != 1) {
    throw io::FormatError(path + ": unsupported version " + std::to_string(version));
  }
  const auto count = in.get<std::uint32_t>();
  if (count == 0) throw io::FormatError(path + ": empty cloud");
  PointCloud cloud;
  cloud.points.resize(3 * static_cast<std::size_t>(count));
  for (auto& v : cloud.points) {
    v = in.get<float>();
    if (!std::isfinite(v)) throw io::FormatError(path + ": non-finite coordinate");
  }
  if (in.remaining()) throw io::FormatError(path + ": trailing bytes");
  return cloud;
}

std::vector<PointCloud> load_split(const std::string& dir, const Manifest& manifest,
                                   const std::string& split) {
  std::vector<PointCloud> out;
  for (const auto& row : manifest.rows) {
    if (!split.empty() && row.split != split) continue;
    PointCloud cloud = read_cloud((std::filesystem::path(dir) / row.path).string());
    cloud.label = row.class_id;
    cloud.submode = submode_name(row.submode);
    cloud.shape_kind = shape_kind_name(row.kind);
    out.push_back(std::move(cloud));
  }
  return out;
}

Episode few_shot_split(const std::vector<int>& labels, std::size_t n_way, std::size_t m_shot,
                       std::size_t queries, std::uint64_t seed) {
  if (n_way < 1 || m_shot < 1) throw std::invalid_argument("few-shot: n_way and m_shot must be >= 1");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  if (by_class.size() < n_way) {
    throw std::invalid_argument("few-shot: " + std::to_string(n_way) + "-way episode needs " +
                                std::to_string(n_way) + " classes, dataset has " +
                                std::to_string(by_class.size()));
  }
  for (const auto& [label, rows] : by_class) {
    if (rows.size() < m_shot + queries) {
      throw std::invalid_argument("few-shot: class " + std::to_string(label) + " has " +
                                  std::to_string(rows.size()) + " samples, episode needs " +
                                  std::to_string(m_shot + queries));
    }
  }
  Rng rng(seed);
  std::vector<int> classes;
  for (const auto& entry : by_class) classes.push_back(entry.first);
  std::shuffle(classes.begin(), classes.end(), rng);
  classes.resize(n_way);
  Episode ep;
  ep.classes = classes;
  for (int label : classes) {
    auto rows = by_class[label];
    std::shuffle(rows.begin(), rows.end(), rng);
    ep.support.insert(ep.support.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(m_shot));
    ep.query.insert(ep.query.end(), rows.begin() + static_cast<std::ptrdiff_t>(m_shot),
                    rows.begin() + static_cast<std::ptrdiff_t>(m_shot + queries));
  }
  return ep;
}

Episode few_shot_split(const Manifest& manifest, std::size_t n_way, std::size_t m_shot,
                       std::size_t queries, std::uint64_t seed) {
  std::vector<int> labels;
  labels.reserve(manifest.rows.size());
  for (const auto& r : manifest.rows) labels.push_back(r.class_id);
  return few_shot_split(labels, n_way, m_shot, queries, seed);
}

}  // namespace pclprompt
