#include "stal/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <tuple>
#include <utility>

#include "stal/checkpoint.hpp"

namespace stal::data {
namespace {

// Pixel-space box of an actor at frame t. Growth adds one pixel per side
// every grow_every frames; motion shifts whole pixels, so rendering and
// ground truth stay exactly aligned.
struct ActorTrack {
  int x = 0, y = 0;  // top-left at t = 0
  int w = 0, h = 0;
  int vx = 0;
  int grow_every = 0;
  double color[3] = {0, 0, 0};
  std::vector<int> actions;
};

struct PixelBox {
  int x1, y1, x2, y2;  // half-open
};

PixelBox track_box(const ActorTrack& a, int t) {
  const int g = a.grow_every > 0 ? t / a.grow_every : 0;
  return {a.x + a.vx * t - g, a.y - g, a.x + a.vx * t + a.w + g, a.y + a.h + g};
}

PixelBox track_hull(const ActorTrack& a, int frames) {
  PixelBox hull = track_box(a, 0);
  for (int t = 1; t < frames; ++t) {
    const PixelBox b = track_box(a, t);
    hull.x1 = std::min(hull.x1, b.x1);
    hull.y1 = std::min(hull.y1, b.y1);
    hull.x2 = std::max(hull.x2, b.x2);
    hull.y2 = std::max(hull.y2, b.y2);
  }
  return hull;
}

bool hulls_overlap(const PixelBox& a, const PixelBox& b) {
  // one-pixel gap so no actor ever occludes another
  return a.x1 < b.x2 + 1 && b.x1 < a.x2 + 1 && a.y1 < b.y2 + 1 && b.y1 < a.y2 + 1;
}

std::string format_video_id(const std::string& split, int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d", index);
  return split + buf;
}

std::string format_fixed6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

[[noreturn]] void csv_error(int line_no, const std::string& what) {
  throw std::runtime_error("csv line " + std::to_string(line_no) + ": " + what);
}

double parse_double(const std::string& field, int line_no, const char* what) {
  double value = 0.0;
  const char* begin = field.data();
  const char* end = begin + field.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end) {
    csv_error(line_no, std::string("bad ") + what + " \"" + field + "\"");
  }
  return value;
}

int parse_int(const std::string& field, int line_no, const char* what) {
  int value = 0;
  const char* begin = field.data();
  const char* end = begin + field.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end) {
    csv_error(line_no, std::string("bad ") + what + " \"" + field + "\"");
  }
  return value;
}

long long micro_units(double v) { return std::llround(v * 1e6); }

}  // namespace

std::vector<ClipSample> generate_synthetic(const SynthConfig& config) {
  if (config.num_clips < 0 || config.frames <= 0 || config.size <= 0) {
    throw std::invalid_argument("synthetic config: extents must be positive");
  }
  if (config.min_actors < 1 || config.max_actors < config.min_actors) {
    throw std::invalid_argument("synthetic config: bad actor range");
  }
  const int t_total = config.frames;
  const int hw = config.size;
  const std::uint64_t split_seed = mix_seed(config.seed, hash_name(config.split));

  std::vector<ClipSample> samples;
  samples.reserve(config.num_clips);
  for (int clip_idx = 0; clip_idx < config.num_clips; ++clip_idx) {
    Rng rng(mix_seed(split_seed, static_cast<std::uint64_t>(clip_idx)));
    ClipSample sample;
    sample.video_id = format_video_id(config.split, clip_idx);
    sample.timestamp = 900;

    const int want =
        config.min_actors + rng.uniform_int(config.max_actors - config.min_actors + 1);
    std::vector<ActorTrack> actors;
    std::vector<PixelBox> hulls;
    for (int k = 0; k < want; ++k) {
      // Each actor lives in its own horizontal band so trajectory hulls can
      // never collide; sizes and speeds are scaled so every band fits its
      // actor's whole trajectory.
      const int band_y1 = k * hw / want;
      const int band_y2 = (k + 1) * hw / want;
      bool placed = false;
      for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
        ActorTrack a;
        // Long-tailed variant mix: leftward motion is deliberately rare, the
        // way real action vocabularies are imbalanced. Horizontal flips are
        // what level it back out during training.
        static constexpr int kVariantWeights[6] = {24, 30, 5, 21, 15, 5};
        int pick = rng.uniform_int(100);
        int variant = 0;
        while (pick >= kVariantWeights[variant]) pick -= kVariantWeights[variant++];
        const bool expands = variant == 3 || variant == 4 || variant == 5;
        const int direction = (variant == 1 || variant == 4)   ? 1
                              : (variant == 2 || variant == 5) ? -1
                                                               : 0;
        a.vx = direction * (expands ? 1 : 1 + rng.uniform_int(2));
        a.grow_every = expands ? 5 + rng.uniform_int(2) : 0;
        // Size ranges stretch to whatever the band leaves after travel and
        // growth, so every split mixes small and large actors instead of one
        // narrow scale.
        const int g_max = a.grow_every > 0 ? (t_total - 1) / a.grow_every : 0;
        const int travel = (a.vx < 0 ? -a.vx : a.vx) * (t_total - 1);
        const int w_cap = std::min(28, hw - 2 - travel - 2 * g_max);
        const int h_cap = std::min(24, band_y2 - band_y1 - 2 - 2 * g_max);
        if (w_cap < 8 || h_cap < 8) continue;
        a.w = 8 + rng.uniform_int(w_cap - 8 + 1);
        a.h = 8 + rng.uniform_int(h_cap - 8 + 1);
        for (double& c : a.color) c = rng.uniform(0.5, 1.0);
        if (direction == 0 && !expands) {
          a.actions = {kActionStatic};
        } else {
          if (direction > 0) a.actions.push_back(kActionMoveRight);
          if (direction < 0) a.actions.push_back(kActionMoveLeft);
          if (expands) a.actions.push_back(kActionExpand);
        }

        // Hull with the origin at (0,0) gives the valid placement range.
        const PixelBox rel = track_hull(a, t_total);
        const int x_lo = 1 - rel.x1, x_hi = hw - 1 - rel.x2;
        const int y_lo = band_y1 + 1 - rel.y1, y_hi = band_y2 - 1 - rel.y2;
        if (x_hi < x_lo || y_hi < y_lo) continue;
        a.x = x_lo + rng.uniform_int(x_hi - x_lo + 1);
        a.y = y_lo + rng.uniform_int(y_hi - y_lo + 1);
        const PixelBox hull = track_hull(a, t_total);
        bool clear = true;
        for (const PixelBox& other : hulls) {
          if (hulls_overlap(hull, other)) {
            clear = false;
            break;
          }
        }
        if (!clear) continue;
        hulls.push_back(hull);
        actors.push_back(std::move(a));
        placed = true;
      }
      if (!placed) {
        throw std::runtime_error("infeasible actor placement in clip " +
                                 sample.video_id + " after 100 attempts");
      }
    }

    // Static textured background, dim enough never to collide with actors.
    Tensor background({hw, hw, 3});
    for (std::int64_t i = 0; i < background.size(); ++i) {
      background[i] = rng.uniform(0.0, 0.3);
    }

    sample.clip = Tensor({t_total, hw, hw, 3});
    for (int t = 0; t < t_total; ++t) {
      double* frame = sample.clip.data() + static_cast<size_t>(t) * hw * hw * 3;
      std::copy(background.data(), background.data() + background.size(), frame);
      for (const ActorTrack& a : actors) {
        const PixelBox b = track_box(a, t);
        for (int y = b.y1; y < b.y2; ++y) {
          double* row = frame + (static_cast<size_t>(y) * hw + b.x1) * 3;
          for (int x = b.x1; x < b.x2; ++x) {
            *row++ = a.color[0];
            *row++ = a.color[1];
            *row++ = a.color[2];
          }
        }
      }
    }

    const int tc = t_total / 2;
    for (size_t k = 0; k < actors.size(); ++k) {
      const PixelBox b = track_box(actors[k], tc);
      Annotation ann;
      ann.box = {static_cast<double>(b.x1) / hw, static_cast<double>(b.y1) / hw,
                 static_cast<double>(b.x2) / hw, static_cast<double>(b.y2) / hw};
      ann.actions = actors[k].actions;
      ann.person_id = static_cast<int>(k);
      sample.boxes.push_back(std::move(ann));
    }
    samples.push_back(std::move(sample));
  }
  return samples;
}

std::vector<GroundTruthBox> parse_groundtruth_csv(std::istream& in) {
  std::vector<GroundTruthBox> merged;
  // key: video, timestamp, box in micro-units
  std::map<std::tuple<std::string, int, long long, long long, long long, long long>,
           size_t>
      index;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> f = split_fields(line);
    if (f.size() != 7 && f.size() != 8) {
      csv_error(line_no, "expected 7 or 8 fields, got " + std::to_string(f.size()));
    }
    if (f[0].empty()) csv_error(line_no, "empty video_id");
    const int timestamp = parse_int(f[1], line_no, "timestamp");
    const geom::Box box{parse_double(f[2], line_no, "x1"),
                        parse_double(f[3], line_no, "y1"),
                        parse_double(f[4], line_no, "x2"),
                        parse_double(f[5], line_no, "y2")};
    if (box.x1 > box.x2) csv_error(line_no, "x1 > x2");
    if (box.y1 > box.y2) csv_error(line_no, "y1 > y2");
    const int action = parse_int(f[6], line_no, "action_id");
    if (action < 0) csv_error(line_no, "negative action_id");
    const int person = f.size() == 8 ? parse_int(f[7], line_no, "person_id") : -1;

    const auto key = std::make_tuple(f[0], timestamp, micro_units(box.x1),
                                     micro_units(box.y1), micro_units(box.x2),
                                     micro_units(box.y2));
    auto it = index.find(key);
    if (it == index.end()) {
      GroundTruthBox row;
      row.video_id = f[0];
      row.timestamp = timestamp;
      row.annotation.box = box;
      row.annotation.actions = {action};
      row.annotation.person_id = person;
      index.emplace(key, merged.size());
      merged.push_back(std::move(row));
    } else {
      std::vector<int>& actions = merged[it->second].annotation.actions;
      if (std::find(actions.begin(), actions.end(), action) == actions.end()) {
        actions.push_back(action);
        std::sort(actions.begin(), actions.end());
      }
      if (merged[it->second].annotation.person_id < 0) {
        merged[it->second].annotation.person_id = person;
      }
    }
  }
  return merged;
}

std::vector<GroundTruthBox> load_groundtruth_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return parse_groundtruth_csv(in);
}

void write_groundtruth_csv(std::ostream& out, const std::vector<ClipSample>& samples) {
  for (const ClipSample& s : samples) {
    for (const Annotation& ann : s.boxes) {
      for (int action : ann.actions) {
        out << s.video_id << ',' << s.timestamp << ',' << format_fixed6(ann.box.x1)
            << ',' << format_fixed6(ann.box.y1) << ',' << format_fixed6(ann.box.x2)
            << ',' << format_fixed6(ann.box.y2) << ',' << action;
        if (ann.person_id >= 0) out << ',' << ann.person_id;
        out << '\n';
      }
    }
  }
}

void write_detections_csv(std::ostream& out, std::vector<DetectionRow> rows) {
  std::stable_sort(rows.begin(), rows.end(),
                   [](const DetectionRow& a, const DetectionRow& b) {
                     if (a.video_id != b.video_id) return a.video_id < b.video_id;
                     if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
                     return a.score > b.score;
                   });
  for (const DetectionRow& r : rows) {
    out << r.video_id << ',' << r.timestamp << ',' << format_fixed6(r.box.x1) << ','
        << format_fixed6(r.box.y1) << ',' << format_fixed6(r.box.x2) << ','
        << format_fixed6(r.box.y2) << ',' << r.action_id << ','
        << format_fixed6(r.score) << '\n';
  }
}

std::vector<DetectionRow> parse_detections_csv(std::istream& in) {
  std::vector<DetectionRow> rows;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> f = split_fields(line);
    if (f.size() != 8) {
      csv_error(line_no, "expected 8 fields, got " + std::to_string(f.size()));
    }
    if (f[0].empty()) csv_error(line_no, "empty video_id");
    DetectionRow r;
    r.video_id = f[0];
    r.timestamp = parse_int(f[1], line_no, "timestamp");
    r.box = {parse_double(f[2], line_no, "x1"), parse_double(f[3], line_no, "y1"),
             parse_double(f[4], line_no, "x2"), parse_double(f[5], line_no, "y2")};
    r.action_id = parse_int(f[6], line_no, "action_id");
    if (r.action_id < 0) csv_error(line_no, "negative action_id");
    r.score = parse_double(f[7], line_no, "score");
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<DetectionRow> load_detections_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return parse_detections_csv(in);
}

void save_detections_csv(const std::string& path, std::vector<DetectionRow> rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  write_detections_csv(out, std::move(rows));
  if (!out) throw std::runtime_error("failed writing " + path);
}

void save_dataset(const std::string& dir, const std::string& split,
                  const std::vector<ClipSample>& samples) {
  std::vector<nn::NamedTensor> tensors;
  tensors.reserve(samples.size());
  for (const ClipSample& s : samples) {
    tensors.push_back({s.video_id + "/" + std::to_string(s.timestamp), s.clip});
  }
  nn::save_container(dir + "/" + split + ".stlc", tensors);
  std::ofstream gt(dir + "/" + split + "_gt.csv");
  if (!gt) throw std::runtime_error("cannot open " + dir + "/" + split + "_gt.csv");
  write_groundtruth_csv(gt, samples);
  if (!gt) throw std::runtime_error("failed writing " + dir + "/" + split + "_gt.csv");
}

std::vector<ClipSample> load_dataset(const std::string& dir, const std::string& split) {
  const std::vector<nn::NamedTensor> tensors =
      nn::load_container(dir + "/" + split + ".stlc");
  std::vector<GroundTruthBox> gt = load_groundtruth_csv(dir + "/" + split + "_gt.csv");

  std::vector<ClipSample> samples;
  samples.reserve(tensors.size());
  for (const nn::NamedTensor& t : tensors) {
    const size_t slash = t.name.rfind('/');
    if (slash == std::string::npos) {
      throw std::runtime_error("dataset entry \"" + t.name +
                               "\" is not <video_id>/<timestamp>");
    }
    if (t.value.rank() != 4) {
      throw std::runtime_error("dataset entry \"" + t.name + "\" has rank " +
                               std::to_string(t.value.rank()) + ", expected 4");
    }
    ClipSample s;
    s.video_id = t.name.substr(0, slash);
    const std::string ts = t.name.substr(slash + 1);
    auto [ptr, ec] = std::from_chars(ts.data(), ts.data() + ts.size(), s.timestamp);
    if (ec != std::errc() || ptr != ts.data() + ts.size()) {
      throw std::runtime_error("dataset entry \"" + t.name + "\" has a bad timestamp");
    }
    s.clip = t.value;
    samples.push_back(std::move(s));
  }
  std::map<std::pair<std::string, int>, size_t> by_frame;
  for (size_t i = 0; i < samples.size(); ++i) {
    by_frame[{samples[i].video_id, samples[i].timestamp}] = i;
  }
  for (GroundTruthBox& row : gt) {
    auto it = by_frame.find({row.video_id, row.timestamp});
    if (it == by_frame.end()) {
      throw std::runtime_error("ground truth for unknown clip " + row.video_id + "/" +
                               std::to_string(row.timestamp));
    }
    samples[it->second].boxes.push_back(std::move(row.annotation));
  }
  return samples;
}

ClipSample augment_sample(const ClipSample& sample, const AugmentConfig& config,
                          Rng& rng) {
  const Tensor& clip = sample.clip;
  if (clip.rank() != 4) {
    throw std::invalid_argument("augment expects a (T,H,W,C) clip");
  }
  const int t = clip.dim(0), h = clip.dim(1), w = clip.dim(2), c = clip.dim(3);
  ClipSample out = sample;

  if (rng.bernoulli(config.flip_prob)) {
    Tensor flipped({t, h, w, c});
    for (int ti = 0; ti < t; ++ti) {
      for (int y = 0; y < h; ++y) {
        const double* src = clip.data() + (static_cast<size_t>(ti) * h + y) * w * c;
        double* dst = flipped.data() + (static_cast<size_t>(ti) * h + y) * w * c;
        for (int x = 0; x < w; ++x) {
          const double* px = src + static_cast<size_t>(w - 1 - x) * c;
          for (int ch = 0; ch < c; ++ch) dst[static_cast<size_t>(x) * c + ch] = px[ch];
        }
      }
    }
    out.clip = std::move(flipped);
    for (Annotation& ann : out.boxes) {
      ann.box = geom::flip_horizontal(ann.box);
      for (int& a : ann.actions) {
        if (a == kActionMoveRight) {
          a = kActionMoveLeft;
        } else if (a == kActionMoveLeft) {
          a = kActionMoveRight;
        }
      }
      std::sort(ann.actions.begin(), ann.actions.end());
    }
  }

  for (int attempt = 0; attempt < config.crop_retries; ++attempt) {
    const double side = rng.uniform(config.min_crop_scale, 1.0);
    const double x0 = rng.uniform(0.0, 1.0 - side);
    const double y0 = rng.uniform(0.0, 1.0 - side);
    const geom::Box window{x0, y0, x0 + side, y0 + side};

    std::vector<Annotation> kept;
    for (const Annotation& ann : out.boxes) {
      if (auto moved = geom::crop_transform(ann.box, window)) {
        Annotation copy = ann;
        copy.box = *moved;
        kept.push_back(std::move(copy));
      }
    }
    if (kept.empty()) continue;  // crop lost every box; retry

    Tensor cropped({t, h, w, c});
    std::vector<int> src_x(static_cast<size_t>(w));
    for (int x = 0; x < w; ++x) {
      const double v = x0 + (x + 0.5) / w * side;
      src_x[static_cast<size_t>(x)] =
          std::clamp(static_cast<int>(std::floor(v * w)), 0, w - 1);
    }
    for (int ti = 0; ti < t; ++ti) {
      for (int y = 0; y < h; ++y) {
        const double v = y0 + (y + 0.5) / h * side;
        const int sy = std::clamp(static_cast<int>(std::floor(v * h)), 0, h - 1);
        const double* src = out.clip.data() + (static_cast<size_t>(ti) * h + sy) * w * c;
        double* dst = cropped.data() + (static_cast<size_t>(ti) * h + y) * w * c;
        for (int x = 0; x < w; ++x) {
          const double* px = src + static_cast<size_t>(src_x[static_cast<size_t>(x)]) * c;
          for (int ch = 0; ch < c; ++ch) dst[static_cast<size_t>(x) * c + ch] = px[ch];
        }
      }
    }
    out.clip = std::move(cropped);
    out.boxes = std::move(kept);
    break;
  }
  return out;
}

}  // namespace stal::data
