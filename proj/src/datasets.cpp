#include "deepmot/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "deepmot/common.hpp"
#include "deepmot/rng.hpp"

namespace deepmot {

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  fields.push_back(cur);
  return fields;
}

double parse_number(const std::string& s, const std::string& path, std::size_t line_no) {
  try {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    while (used < s.size() && std::isspace(static_cast<unsigned char>(s[used]))) ++used;
    if (used != s.size())
      detail::fail_runtime(detail::cat(path, ":", line_no, ": non-numeric field '", s, "'"));
    return v;
  } catch (const std::invalid_argument&) {
    detail::fail_runtime(detail::cat(path, ":", line_no, ": non-numeric field '", s, "'"));
  } catch (const std::out_of_range&) {
    detail::fail_runtime(detail::cat(path, ":", line_no, ": number out of range '", s, "'"));
  }
}

std::string format_exact(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

TrackFile load_motchallenge(const std::string& path, MotKind kind, FrameDims dims) {
  std::ifstream is(path);
  if (!is) detail::fail_runtime(detail::cat("cannot open ", path));
  TrackFile tf;
  tf.dims = dims;
  std::string line;
  std::size_t line_no = 0;
  double max_right = 1.0, max_bottom = 1.0;
  std::vector<std::set<std::int64_t>> seen_ids;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto fields = split_csv(line);
    if (fields.size() < 7 || fields.size() > 10)
      detail::fail_runtime(detail::cat(path, ":", line_no, ": expected 7-10 fields, got ",
                                       fields.size()));
    std::vector<double> v(fields.size());
    for (std::size_t i = 0; i < fields.size(); ++i)
      v[i] = parse_number(fields[i], path, line_no);
    const long frame = static_cast<long>(v[0]);
    if (frame < 1)
      detail::fail_runtime(detail::cat(path, ":", line_no, ": frame index must be >= 1"));
    const auto id = static_cast<std::int64_t>(v[1]);
    Box box{v[2], v[3], v[4], v[5]};
    const double conf = v[6];
    // 8/9 columns carry a class id after conf; 10 columns are the x,y,z layout.
    const bool has_class = fields.size() == 8 || fields.size() == 9;
    if (kind == MotKind::gt) {
      if (conf != 1.0) continue;
      if (has_class && v[7] != 1.0) continue;
    }
    const auto f = static_cast<std::size_t>(frame);
    tf.ensure_frames(f);
    if (seen_ids.size() < f) seen_ids.resize(f);
    if (id >= 0 && !seen_ids[f - 1].insert(id).second)
      detail::fail_runtime(detail::cat(path, ":", line_no, ": duplicate id ", id,
                                       " in frame ", frame));
    tf.frame(f).push_back({id, box});
    max_right = std::max(max_right, box.right());
    max_bottom = std::max(max_bottom, box.bottom());
  }
  if (tf.dims.width <= 0.0) tf.dims.width = std::ceil(max_right);
  if (tf.dims.height <= 0.0) tf.dims.height = std::ceil(max_bottom);
  return tf;
}

void save_motchallenge(const TrackFile& tf, const std::string& path) {
  std::ofstream os(path);
  if (!os) detail::fail_runtime(detail::cat("cannot open ", path, " for writing"));
  for (std::size_t f = 1; f <= tf.frame_count(); ++f) {
    for (const auto& tb : tf.frame(f)) {
      os << f << ',' << tb.id << ',' << format_exact(tb.box.left) << ','
         << format_exact(tb.box.top) << ',' << format_exact(tb.box.width) << ','
         << format_exact(tb.box.height) << ",1,1,1\n";
    }
  }
  if (!os) detail::fail_runtime(detail::cat("write failed for ", path));
}

Tensor augment_distance_matrix(const Tensor& d, double u) {
  Tensor out = d;
  for (std::size_t i = 0; i < out.size(); ++i)
    if (out[i] > u) out[i] = 1.0;
  return out;
}

namespace {

// Label threshold: exactly the augmented (=1.0) entries are infeasible.
double label_tau() { return std::nextafter(1.0, 0.0); }

struct SceneObject {
  Box box;
  double vx, vy;
};

Box random_box(Rng& rng, const SyntheticSceneConfig& cfg) {
  // Draw order: width, height, left, top.
  const double w = rng.uniform(cfg.min_box_w, cfg.max_box_w);
  const double h = rng.uniform(cfg.min_box_h, cfg.max_box_h);
  const double l = rng.uniform(0.0, std::max(0.0, cfg.dims.width - w));
  const double t = rng.uniform(0.0, std::max(0.0, cfg.dims.height - h));
  return {l, t, w, h};
}

Box perturb_detection(Rng& rng, const Box& b, double scale_min, double scale_max,
                      double offset_max) {
  // Draw order: scale, x offset, y offset. Scaling preserves the centre;
  // written corner-relative so a unit scale with zero offsets is exact.
  const double s = rng.uniform(scale_min, scale_max);
  const double ox = b.width * rng.uniform(-offset_max, offset_max);
  const double oy = b.height * rng.uniform(-offset_max, offset_max);
  const double w = b.width * s, h = b.height * s;
  return {b.left + (b.width - w) / 2.0 + ox, b.top + (b.height - h) / 2.0 + oy, w, h};
}

}  // namespace

std::vector<MatrixPair> gen_matrix_pairs(std::size_t count, std::size_t min_size,
                                         std::size_t max_size, PairMode mode,
                                         std::uint64_t seed) {
  detail::check(count >= 1, "gen_matrix_pairs: count must be >= 1");
  detail::check(min_size >= 1 && min_size <= max_size,
                "gen_matrix_pairs: degenerate size range");
  Rng rng(seed);
  SyntheticSceneConfig box_cfg;  // frame/box geometry for tracking-like mode
  std::vector<MatrixPair> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    PairMode pick = mode;
    if (mode == PairMode::mixed)
      pick = (i % 2 == 0) ? PairMode::uniform : PairMode::tracking_like;
    Tensor d;
    if (pick == PairMode::uniform) {
      const auto n = static_cast<std::size_t>(rng.integer(
          static_cast<long long>(min_size), static_cast<long long>(max_size)));
      const auto m = static_cast<std::size_t>(rng.integer(
          static_cast<long long>(min_size), static_cast<long long>(max_size)));
      d = Tensor(n, m);
      for (std::size_t j = 0; j < d.size(); ++j) d[j] = rng.uniform();
    } else {
      // Noisy single-frame scene: detections of ground-truth boxes with the
      // paper's perturbation ranges, occasional drops and clutter tracks.
      while (true) {
        const auto m = static_cast<std::size_t>(rng.integer(
            static_cast<long long>(min_size), static_cast<long long>(max_size)));
        std::vector<Box> objects;
        objects.reserve(m);
        for (std::size_t j = 0; j < m; ++j) objects.push_back(random_box(rng, box_cfg));
        std::vector<Box> tracks;
        for (const Box& b : objects) {
          if (rng.bernoulli(0.1)) continue;  // dropped detection
          tracks.push_back(perturb_detection(rng, b, 0.8, 1.2, 0.25));
        }
        const auto extra = static_cast<std::size_t>(rng.integer(0, 2));
        for (std::size_t j = 0; j < extra; ++j)
          tracks.push_back(random_box(rng, box_cfg));
        if (tracks.size() < min_size || tracks.size() > max_size) continue;
        d = distance_matrix(tracks, objects, box_cfg.dims);
        break;
      }
    }
    const double u = rng.uniform();
    Tensor aug = augment_distance_matrix(d, u);
    MatrixPair pair;
    pair.a_star = solve_thresholded(aug, label_tau()).matrix();
    pair.d = std::move(aug);
    out.push_back(std::move(pair));
  }
  return out;
}

Scene gen_synthetic_sequence(const SyntheticSceneConfig& cfg) {
  detail::check(cfg.dims.width > 0 && cfg.dims.height > 0,
                "scene: frame dims must be positive");
  detail::check(cfg.min_objects >= 1 && cfg.min_objects <= cfg.max_objects,
                "scene: object count range ill-ordered");
  detail::check(cfg.min_velocity <= cfg.max_velocity &&
                    cfg.min_box_w <= cfg.max_box_w && cfg.min_box_h <= cfg.max_box_h &&
                    cfg.det_scale_min <= cfg.det_scale_max,
                "scene: range ill-ordered");
  detail::check(cfg.drop_prob >= 0.0 && cfg.drop_prob <= 1.0,
                "scene: drop probability outside [0,1]");
  detail::check(cfg.det_offset_max >= 0.0 && cfg.clutter_rate >= 0.0 &&
                    cfg.length >= 1,
                "scene: invalid config");

  Rng rng(cfg.seed);
  // Draw order per object at setup: box (w, h, l, t), angle, speed.
  // Per frame: emit gt; per object detection: drop, then (scale, ox, oy) if
  // kept; clutter: one Bernoulli for the fractional part, then (w, h, l, t)
  // per clutter box; finally per object advance: jitter x, jitter y.
  const auto n_objects = static_cast<std::size_t>(rng.integer(
      static_cast<long long>(cfg.min_objects), static_cast<long long>(cfg.max_objects)));
  std::vector<SceneObject> objects(n_objects);
  for (auto& obj : objects) {
    obj.box = random_box(rng, cfg);
    const double angle = rng.uniform(0.0, 2.0 * 3.141592653589793);
    const double speed = rng.uniform(cfg.min_velocity, cfg.max_velocity);
    obj.vx = std::cos(angle) * speed;
    obj.vy = std::sin(angle) * speed;
  }

  Scene scene;
  scene.gt.dims = cfg.dims;
  scene.detections.dims = cfg.dims;
  scene.gt.ensure_frames(cfg.length);
  scene.detections.ensure_frames(cfg.length);

  for (std::size_t f = 1; f <= cfg.length; ++f) {
    for (std::size_t i = 0; i < objects.size(); ++i)
      scene.gt.frame(f).push_back({static_cast<std::int64_t>(i + 1), objects[i].box});
    for (const auto& obj : objects) {
      if (rng.bernoulli(cfg.drop_prob)) continue;
      Box det = perturb_detection(rng, obj.box, cfg.det_scale_min,
                                  cfg.det_scale_max, cfg.det_offset_max);
      scene.detections.frame(f).push_back({-1, det});
    }
    std::size_t clutter = static_cast<std::size_t>(std::floor(cfg.clutter_rate));
    if (rng.bernoulli(cfg.clutter_rate - std::floor(cfg.clutter_rate))) ++clutter;
    for (std::size_t j = 0; j < clutter; ++j)
      scene.detections.frame(f).push_back({-1, random_box(rng, cfg)});
    for (auto& obj : objects) {
      obj.box.left += obj.vx + rng.uniform(-cfg.position_jitter, cfg.position_jitter);
      obj.box.top += obj.vy + rng.uniform(-cfg.position_jitter, cfg.position_jitter);
      obj.box.left = std::clamp(obj.box.left, 0.0, cfg.dims.width - obj.box.width);
      obj.box.top = std::clamp(obj.box.top, 0.0, cfg.dims.height - obj.box.height);
    }
  }
  return scene;
}

void save_pairs(const std::string& path, const std::vector<MatrixPair>& pairs) {
  std::ofstream os(path);
  if (!os) detail::fail_runtime(detail::cat("cannot open ", path, " for writing"));
  for (const auto& p : pairs) {
    const std::size_t n = p.d.rows(), m = p.d.cols();
    detail::check(p.a_star.rows() == n && p.a_star.cols() == m,
                  "save_pairs: matrix/label shape mismatch");
    os << n << ' ' << m << '\n';
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < m; ++c)
        os << (c ? " " : "") << format_exact(p.d.at(r, c));
      os << '\n';
    }
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < m; ++c)
        os << (c ? " " : "") << static_cast<int>(p.a_star.at(r, c));
      os << '\n';
    }
    os << '\n';
  }
  if (!os) detail::fail_runtime(detail::cat("write failed for ", path));
}

std::vector<MatrixPair> load_pairs(const std::string& path) {
  std::ifstream is(path);
  if (!is) detail::fail_runtime(detail::cat("cannot open ", path));
  std::vector<MatrixPair> out;
  std::string line;
  std::size_t record = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    ++record;
    std::istringstream header(line);
    long long n = 0, m = 0;
    if (!(header >> n >> m) || n < 1 || m < 1)
      detail::fail_runtime(detail::cat(path, ": record ", record, ": bad header '",
                                       line, "'"));
    MatrixPair p;
    p.d = Tensor(static_cast<std::size_t>(n), static_cast<std::size_t>(m));
    p.a_star = Tensor(static_cast<std::size_t>(n), static_cast<std::size_t>(m));
    for (long long r = 0; r < n; ++r) {
      if (!std::getline(is, line))
        detail::fail_runtime(detail::cat(path, ": record ", record,
                                         ": missing distance row ", r + 1));
      std::istringstream row(line);
      for (long long c = 0; c < m; ++c)
        if (!(row >> p.d.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c))))
          detail::fail_runtime(detail::cat(path, ": record ", record,
                                           ": short distance row ", r + 1));
    }
    for (long long r = 0; r < n; ++r) {
      if (!std::getline(is, line))
        detail::fail_runtime(detail::cat(path, ": record ", record,
                                         ": missing label row ", r + 1));
      std::istringstream row(line);
      for (long long c = 0; c < m; ++c) {
        int bit = 0;
        if (!(row >> bit) || (bit != 0 && bit != 1))
          detail::fail_runtime(detail::cat(path, ": record ", record,
                                           ": bad label row ", r + 1));
        p.a_star.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = bit;
      }
    }
    if (!is_valid_assignment(p.a_star))
      detail::fail_runtime(detail::cat(path, ": record ", record,
                                       ": label violates assignment constraints"));
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace deepmot
