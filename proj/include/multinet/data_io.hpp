// Data plumbing: netpbm image I/O, KITTI label parsing and formatting, the
// synthetic street-scene generator, dataset directory layout, overlays.
//
// Everything here is deterministic; the generator derives one RNG stream per
// (seed, index) so samples can be produced in any order or in parallel.
#pragma once

#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "multinet/common.hpp"
#include "multinet/det_decoder.hpp"
#include "multinet/rng.hpp"
#include "multinet/tensor.hpp"

namespace multinet {

struct Sample {
  int width = 0, height = 0;
  std::vector<float> image;   // CHW, 3 planes, values in [0, 1]
  std::vector<uint8_t> mask;  // H*W class ids
  std::vector<BoundingBox> boxes;
  std::vector<Rect> dont_care;
  int scene_class = 0;
  std::string id;
};

// ---------------------------------------------------------------------------
// netpbm (binary PPM / PGM)

struct ImageU8 {
  int width = 0, height = 0, channels = 1;
  std::vector<uint8_t> pixels;  // interleaved rows
};

namespace detail {

inline int pnm_token(std::istream& in, const std::string& path) {
  // Whitespace-and-comment tolerant integer field.
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (std::isspace(c)) {
      c = in.get();
    } else {
      break;
    }
  }
  check_data(c != EOF, path + ": truncated header");
  std::string tok;
  while (c != EOF && !std::isspace(c)) {
    tok.push_back(static_cast<char>(c));
    c = in.get();
  }
  try {
    return std::stoi(tok);
  } catch (const std::exception&) {
    throw data_error(path + ": bad header field '" + tok + "'");
  }
}

inline ImageU8 read_pnm(const std::string& path, const char* magic, int channels) {
  std::ifstream in(path, std::ios::binary);
  check_data(in.good(), path + ": cannot open");
  char m0 = 0, m1 = 0;
  in.get(m0);
  in.get(m1);
  check_data(m0 == magic[0] && m1 == magic[1],
             path + ": bad magic '" + std::string{m0, m1} + "', expected " + magic);
  ImageU8 img;
  img.channels = channels;
  img.width = pnm_token(in, path);
  img.height = pnm_token(in, path);
  const int maxval = pnm_token(in, path);
  check_data(img.width > 0 && img.height > 0 && img.width <= 1 << 15 && img.height <= 1 << 15,
             path + ": dimensions " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                 " out of range");
  check_data(maxval == 255, path + ": maxval " + std::to_string(maxval) + " unsupported, need 255");
  const size_t count = static_cast<size_t>(img.width) * img.height * channels;
  img.pixels.resize(count);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(count));
  check_data(static_cast<size_t>(in.gcount()) == count,
             path + ": truncated payload, got " + std::to_string(in.gcount()) + " of " + std::to_string(count) +
                 " bytes");
  return img;
}

inline void write_pnm(const std::string& path, const ImageU8& img, const char* magic, int channels) {
  check_arg(img.channels == channels, path + ": image has " + std::to_string(img.channels) + " channels");
  check_arg(img.pixels.size() == static_cast<size_t>(img.width) * img.height * channels,
            path + ": pixel buffer does not match dimensions");
  std::ofstream out(path, std::ios::binary);
  check_data(out.good(), path + ": cannot open for writing");
  out << magic << "\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  check_data(out.good(), path + ": write failed");
}

}  // namespace detail

inline ImageU8 read_ppm(const std::string& path) { return detail::read_pnm(path, "P6", 3); }
inline ImageU8 read_pgm(const std::string& path) { return detail::read_pnm(path, "P5", 1); }
inline void write_ppm(const std::string& path, const ImageU8& img) { detail::write_pnm(path, img, "P6", 3); }
inline void write_pgm(const std::string& path, const ImageU8& img) { detail::write_pnm(path, img, "P5", 1); }

// Interleaved 8-bit RGB -> planar [0,1] floats and back.
inline std::vector<float> image_to_float(const ImageU8& img) {
  check_arg(img.channels == 3, "image_to_float: RGB image required");
  const size_t hw = static_cast<size_t>(img.width) * img.height;
  std::vector<float> out(3 * hw);
  for (size_t p = 0; p < hw; ++p)
    for (int c = 0; c < 3; ++c) out[c * hw + p] = img.pixels[p * 3 + c] / 255.0f;
  return out;
}

inline ImageU8 float_to_image(int width, int height, const std::vector<float>& chw) {
  const size_t hw = static_cast<size_t>(width) * height;
  check_arg(chw.size() == 3 * hw, "float_to_image: buffer does not match dimensions");
  ImageU8 img{width, height, 3, std::vector<uint8_t>(3 * hw)};
  for (size_t p = 0; p < hw; ++p)
    for (int c = 0; c < 3; ++c) {
      float v = chw[c * hw + p];
      v = v < 0 ? 0 : (v > 1 ? 1 : v);
      img.pixels[p * 3 + c] = static_cast<uint8_t>(v * 255.0f + 0.5f);
    }
  return img;
}

// ---------------------------------------------------------------------------
// KITTI labels

struct KittiObjectRecord {
  std::string type;
  double truncated = 0;
  int occluded = 0;
  double alpha = 0;
  double left = 0, top = 0, right = 0, bottom = 0;
  double dim_h = 0, dim_w = 0, dim_l = 0;
  double loc_x = 0, loc_y = 0, loc_z = 0;
  double rot_y = 0;
  double score = 0;
  bool has_score = false;

  double height() const { return bottom - top; }
};

struct KittiParseResult {
  std::vector<KittiObjectRecord> records;
  std::vector<std::string> warnings;  // lenient-mode skipped lines
};

// 15 whitespace-separated fields per line (plus an optional trailing score).
// strict: any malformed line throws; lenient: the line is skipped and noted.
inline KittiParseResult parse_kitti_labels(const std::string& text, bool strict = true) {
  KittiParseResult result;
  std::istringstream lines(text);
  std::string line;
  int line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream f(line);
    std::vector<std::string> fields;
    std::string tok;
    while (f >> tok) fields.push_back(tok);
    auto fail = [&](const std::string& why) {
      const std::string msg = "label line " + std::to_string(line_no) + ": " + why;
      if (strict) throw data_error(msg);
      result.warnings.push_back(msg);
    };
    if (fields.size() != 15 && fields.size() != 16) {
      fail("expected 15 fields, got " + std::to_string(fields.size()));
      continue;
    }
    KittiObjectRecord r;
    r.type = fields[0];
    try {
      double num[15];
      for (size_t i = 1; i < fields.size(); ++i) num[i - 1] = std::stod(fields[i]);
      r.truncated = num[0];
      r.occluded = static_cast<int>(num[1]);
      r.alpha = num[2];
      r.left = num[3];
      r.top = num[4];
      r.right = num[5];
      r.bottom = num[6];
      r.dim_h = num[7];
      r.dim_w = num[8];
      r.dim_l = num[9];
      r.loc_x = num[10];
      r.loc_y = num[11];
      r.loc_z = num[12];
      r.rot_y = num[13];
      if (fields.size() == 16) {
        r.score = num[14];
        r.has_score = true;
      }
    } catch (const std::exception&) {
      fail("unparseable number");
      continue;
    }
    result.records.push_back(std::move(r));
  }
  return result;
}

// Splits records into training boxes of the configured class and don't-care
// regions; every other type is ignored.
inline void records_to_boxes(const std::vector<KittiObjectRecord>& records, std::vector<BoundingBox>& boxes,
                             std::vector<Rect>& dont_care, const std::string& class_name = "Car") {
  for (const auto& r : records) {
    if (r.type == "DontCare") {
      dont_care.push_back({r.left, r.top, r.right, r.bottom});
    } else if (r.type == class_name) {
      boxes.push_back({(r.left + r.right) / 2, (r.top + r.bottom) / 2, r.right - r.left, r.bottom - r.top,
                       r.has_score ? r.score : 1.0, -1});
    }
  }
}

namespace detail {

inline std::string fmt2(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace detail

// Ground-truth style line (no score) for dataset labels.
inline std::string format_kitti_gt_line(const BoundingBox& b, const std::string& type = "Car") {
  const Rect r = b.rect();
  return type + " 0.00 0 -10 " + detail::fmt2(r.x0) + " " + detail::fmt2(r.y0) + " " + detail::fmt2(r.x1) + " " +
         detail::fmt2(r.y1) + " -1 -1 -1 -1000 -1000 -1000 -10";
}

inline std::string format_kitti_dont_care_line(const Rect& r) {
  return "DontCare -1 -1 -10 " + detail::fmt2(r.x0) + " " + detail::fmt2(r.y0) + " " + detail::fmt2(r.x1) + " " +
         detail::fmt2(r.y1) + " -1 -1 -1 -1000 -1000 -1000 -10";
}

// Detection-result line with trailing confidence.
inline std::string format_kitti_det_line(const BoundingBox& b, const std::string& type = "Car") {
  char score[48];
  std::snprintf(score, sizeof score, "%.6f", b.confidence);
  return format_kitti_gt_line(b, type) + " " + score;
}

// ---------------------------------------------------------------------------
// Synthetic street scenes

struct SynthConfig {
  int width = 256, height = 128;
  int max_vehicles = 4;
  double dont_care_prob = 0.25;
};

namespace detail {

// Road half-width at a given row of the trapezoid.
struct Trapezoid {
  double y_top, cx, half_top, half_bottom, y_bottom;

  double half_at(double y) const {
    const double t = (y - y_top) / (y_bottom - y_top);
    return half_top + (half_bottom - half_top) * t;
  }
  bool inside(double x, double y) const {
    if (y < y_top || y >= y_bottom) return false;
    const double half = half_at(y);
    return x >= cx - half && x < cx + half;
  }
  // A box is inside iff its corners are inside at both horizontal edges.
  bool contains_box(const Rect& r) const {
    if (r.y0 < y_top || r.y1 > y_bottom) return false;
    for (double y : {r.y0, r.y1}) {
      const double half = half_at(std::min(y, y_bottom - 1e-9));
      if (r.x0 < cx - half || r.x1 > cx + half) return false;
    }
    return true;
  }
};

inline void fill_rect(Sample& s, const Rect& r, const float rgb[3], Rng& noise) {
  const size_t hw = static_cast<size_t>(s.width) * s.height;
  const int x0 = std::max(0, static_cast<int>(std::floor(r.x0)));
  const int y0 = std::max(0, static_cast<int>(std::floor(r.y0)));
  const int x1 = std::min(s.width, static_cast<int>(std::ceil(r.x1)));
  const int y1 = std::min(s.height, static_cast<int>(std::ceil(r.y1)));
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) {
      const float n = static_cast<float>((noise.uniform() - 0.5) * 0.06);
      for (int c = 0; c < 3; ++c) {
        float v = rgb[c] + n;
        s.image[c * hw + static_cast<size_t>(y) * s.width + x] = v < 0 ? 0 : (v > 1 ? 1 : v);
      }
    }
}

}  // namespace detail

// Fully determined by (seed, index): textured background, road trapezoid in
// the lower half (mask 1 inside, vehicles included), 0..max_vehicles vehicle
// rectangles entirely on the road, scene class 1 iff the road's top edge is
// at least half the image wide, and an occasional don't-care strip along the
// top border holding an unlabeled distractor.
inline Sample generate_synthetic_sample(uint64_t seed, int index, const SynthConfig& cfg = {}) {
  check_arg(cfg.width % 32 == 0 && cfg.height % 32 == 0,
            "synthetic: dims " + std::to_string(cfg.width) + "x" + std::to_string(cfg.height) +
                " must be multiples of 32");
  check_arg(cfg.max_vehicles >= 0, "synthetic: max_vehicles must be >= 0");
  Rng rng = Rng(seed).split("synth").split(static_cast<uint64_t>(index));

  Sample s;
  s.width = cfg.width;
  s.height = cfg.height;
  const size_t hw = static_cast<size_t>(cfg.width) * cfg.height;
  s.image.assign(3 * hw, 0.0f);
  s.mask.assign(hw, 0);
  {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%06d", index);
    s.id = buf;
  }

  // Background: per-sample base color plus shared per-pixel noise.
  Rng bg = rng.split("background");
  float base[3];
  for (float& b : base) b = static_cast<float>(0.35 + 0.25 * bg.uniform());
  for (size_t p = 0; p < hw; ++p) {
    const float n = static_cast<float>((bg.uniform() - 0.5) * 0.16);
    for (int c = 0; c < 3; ++c) {
      float v = base[c] + n;
      s.image[c * hw + p] = v < 0 ? 0 : (v > 1 ? 1 : v);
    }
  }

  // Road trapezoid.
  Rng road_rng = rng.split("road");
  const double W = cfg.width, H = cfg.height;
  detail::Trapezoid road{};
  road.y_top = H * (0.45 + 0.10 * road_rng.uniform());
  road.y_bottom = H;
  const double top_w = W * (0.25 + 0.65 * road_rng.uniform());
  const double bottom_w = W * (0.70 + 0.30 * road_rng.uniform());
  road.half_top = top_w / 2;
  road.half_bottom = bottom_w / 2;
  road.cx = W * (0.40 + 0.20 * road_rng.uniform());
  s.scene_class = top_w >= W / 2 ? 1 : 0;

  const float road_base = static_cast<float>(0.18 + 0.10 * road_rng.uniform());
  for (int y = 0; y < cfg.height; ++y)
    for (int x = 0; x < cfg.width; ++x)
      if (road.inside(x + 0.5, y + 0.5)) {
        s.mask[static_cast<size_t>(y) * cfg.width + x] = 1;
        const float n = static_cast<float>((road_rng.uniform() - 0.5) * 0.05);
        for (int c = 0; c < 3; ++c) s.image[c * hw + static_cast<size_t>(y) * cfg.width + x] = road_base + n;
      }

  // Vehicles: rejection-sampled fully onto the road, limited mutual overlap.
  Rng veh_rng = rng.split("vehicles");
  const int wanted = static_cast<int>(veh_rng.uniform_int(static_cast<uint64_t>(cfg.max_vehicles) + 1));
  for (int v = 0; v < wanted; ++v) {
    for (int attempt = 0; attempt < 40; ++attempt) {
      const double bw = 12 + veh_rng.uniform() * 36;
      const double bh = 12 + veh_rng.uniform() * 36;
      const double bx = bw / 2 + veh_rng.uniform() * (W - bw);
      const double by = road.y_top + bh / 2 + veh_rng.uniform() * std::max(0.0, H - road.y_top - bh);
      BoundingBox box{bx, by, bw, bh, 1.0, -1};
      if (!road.contains_box(box.rect())) continue;
      bool crowded = false;
      for (const auto& other : s.boxes)
        if (box_iou(box, other) > 0.3) {
          crowded = true;
          break;
        }
      if (crowded) continue;
      float rgb[3];
      const int hot = static_cast<int>(veh_rng.uniform_int(3));
      for (int c = 0; c < 3; ++c)
        rgb[c] = static_cast<float>(c == hot ? 0.65 + 0.30 * veh_rng.uniform() : 0.05 + 0.25 * veh_rng.uniform());
      detail::fill_rect(s, box.rect(), rgb, veh_rng);
      s.boxes.push_back(box);
      break;
    }
  }

  // Don't-care strip: unlabeled distractor along the top border.
  Rng dc_rng = rng.split("dont_care");
  if (dc_rng.bernoulli(cfg.dont_care_prob)) {
    const double strip_h = 16;
    s.dont_care.push_back({0, 0, W, strip_h});
    const double dw = 12 + dc_rng.uniform() * 28;
    const double dh = 8 + dc_rng.uniform() * (strip_h - 8);
    const double dx = dw / 2 + dc_rng.uniform() * (W - dw);
    const double dy = dh / 2 + dc_rng.uniform() * (strip_h - dh);
    float rgb[3];
    const int hot = static_cast<int>(dc_rng.uniform_int(3));
    for (int c = 0; c < 3; ++c)
      rgb[c] = static_cast<float>(c == hot ? 0.65 + 0.30 * dc_rng.uniform() : 0.05 + 0.25 * dc_rng.uniform());
    detail::fill_rect(s, Rect{dx - dw / 2, dy - dh / 2, dx + dw / 2, dy + dh / 2}, rgb, dc_rng);
  }
  return s;
}

// Samples are a pure function of (seed, index), so generation parallelizes
// over indices without affecting the result. MULTINET_THREADS caps workers.
inline std::vector<Sample> generate_synthetic(int count, uint64_t seed, const SynthConfig& cfg = {}) {
  check_arg(count >= 0, "synthetic: count must be >= 0");
  std::vector<Sample> out(static_cast<size_t>(count));
  const int workers = std::min(max_threads(), std::max(count, 1));
  if (workers <= 1 || count < 4) {
    for (int i = 0; i < count; ++i) out[static_cast<size_t>(i)] = generate_synthetic_sample(seed, i, cfg);
    return out;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(workers));
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1))
        out[static_cast<size_t>(i)] = generate_synthetic_sample(seed, i, cfg);
    });
  for (auto& t : pool) t.join();
  return out;
}

// ---------------------------------------------------------------------------
// Dataset directory layout:
//   images/ID.ppm  masks/ID.pgm  labels/ID.txt  scenes.txt  train.txt  val.txt

inline void save_dataset(const std::string& dir, const std::vector<Sample>& samples, double train_fraction = 0.8) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "images");
  fs::create_directories(fs::path(dir) / "masks");
  fs::create_directories(fs::path(dir) / "labels");
  std::ofstream scenes((fs::path(dir) / "scenes.txt").string());
  std::ofstream train((fs::path(dir) / "train.txt").string());
  std::ofstream val((fs::path(dir) / "val.txt").string());
  check_data(scenes.good() && train.good() && val.good(), dir + ": cannot write split files");
  const size_t n_train = static_cast<size_t>(samples.size() * train_fraction);
  for (size_t i = 0; i < samples.size(); ++i) {
    const Sample& s = samples[i];
    write_ppm((fs::path(dir) / "images" / (s.id + ".ppm")).string(), float_to_image(s.width, s.height, s.image));
    ImageU8 m{s.width, s.height, 1, std::vector<uint8_t>(s.mask.size())};
    for (size_t p = 0; p < s.mask.size(); ++p) m.pixels[p] = s.mask[p] ? 255 : 0;
    write_pgm((fs::path(dir) / "masks" / (s.id + ".pgm")).string(), m);
    std::ofstream labels((fs::path(dir) / "labels" / (s.id + ".txt")).string());
    for (const auto& b : s.boxes) labels << format_kitti_gt_line(b) << "\n";
    for (const auto& r : s.dont_care) labels << format_kitti_dont_care_line(r) << "\n";
    scenes << s.id << " " << s.scene_class << "\n";
    (i < n_train ? train : val) << s.id << "\n";
  }
}

inline std::vector<std::string> read_id_list(const std::string& path) {
  std::ifstream in(path);
  check_data(in.good(), path + ": cannot open");
  std::vector<std::string> ids;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (!line.empty()) ids.push_back(line);
  }
  return ids;
}

// split: "train", "val" or "all".
inline std::vector<Sample> load_dataset(const std::string& dir, const std::string& split,
                                        bool strict_labels = true) {
  namespace fs = std::filesystem;
  check_arg(split == "train" || split == "val" || split == "all", "load_dataset: unknown split '" + split + "'");
  std::vector<std::string> ids;
  if (split == "all") {
    ids = read_id_list((fs::path(dir) / "train.txt").string());
    for (auto& id : read_id_list((fs::path(dir) / "val.txt").string())) ids.push_back(id);
  } else {
    ids = read_id_list((fs::path(dir) / (split + ".txt")).string());
  }
  check_data(!ids.empty(), dir + ": split '" + split + "' is empty");

  std::map<std::string, int> scene_of;
  {
    std::ifstream scenes((fs::path(dir) / "scenes.txt").string());
    check_data(scenes.good(), dir + "/scenes.txt: cannot open");
    std::string id;
    int cls;
    while (scenes >> id >> cls) scene_of[id] = cls;
  }

  std::vector<Sample> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    Sample s;
    s.id = id;
    ImageU8 img = read_ppm((fs::path(dir) / "images" / (id + ".ppm")).string());
    s.width = img.width;
    s.height = img.height;
    s.image = image_to_float(img);
    ImageU8 m = read_pgm((fs::path(dir) / "masks" / (id + ".pgm")).string());
    check_data(m.width == s.width && m.height == s.height, id + ": mask dims do not match image");
    s.mask.resize(m.pixels.size());
    for (size_t p = 0; p < m.pixels.size(); ++p) s.mask[p] = m.pixels[p] >= 128 ? 1 : 0;
    const std::string label_path = (fs::path(dir) / "labels" / (id + ".txt")).string();
    std::ifstream lf(label_path);
    check_data(lf.good(), label_path + ": cannot open");
    std::stringstream text;
    text << lf.rdbuf();
    auto parsed = parse_kitti_labels(text.str(), strict_labels);
    records_to_boxes(parsed.records, s.boxes, s.dont_care);
    auto it = scene_of.find(id);
    check_data(it != scene_of.end(), id + ": missing from scenes.txt");
    s.scene_class = it->second;
    out.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Overlays

// Red-blue confidence rendering: road-probability red, background blue,
// blended over a dimmed image.
inline ImageU8 render_seg_overlay(int width, int height, const std::vector<float>& image,
                                  const std::vector<float>& probability) {
  const size_t hw = static_cast<size_t>(width) * height;
  check_arg(image.size() == 3 * hw && probability.size() == hw, "render_seg_overlay: buffer sizes do not match");
  std::vector<float> out(3 * hw);
  for (size_t p = 0; p < hw; ++p) {
    const float prob = probability[p];
    out[0 * hw + p] = 0.4f * image[0 * hw + p] + 0.6f * prob;
    out[1 * hw + p] = 0.4f * image[1 * hw + p];
    out[2 * hw + p] = 0.4f * image[2 * hw + p] + 0.6f * (1.0f - prob);
  }
  return float_to_image(width, height, out);
}

// Green ground-truth-style rectangles, two-pixel borders.
inline ImageU8 render_box_overlay(int width, int height, const std::vector<float>& image,
                                  const std::vector<BoundingBox>& boxes) {
  const size_t hw = static_cast<size_t>(width) * height;
  check_arg(image.size() == 3 * hw, "render_box_overlay: buffer size does not match");
  std::vector<float> out = image;
  auto paint = [&](int x, int y) {
    if (x < 0 || x >= width || y < 0 || y >= height) return;
    const size_t p = static_cast<size_t>(y) * width + x;
    out[0 * hw + p] = 0.0f;
    out[1 * hw + p] = 1.0f;
    out[2 * hw + p] = 0.0f;
  };
  for (const auto& b : boxes) {
    const Rect r = b.rect();
    const int x0 = static_cast<int>(std::lround(r.x0)), x1 = static_cast<int>(std::lround(r.x1));
    const int y0 = static_cast<int>(std::lround(r.y0)), y1 = static_cast<int>(std::lround(r.y1));
    for (int t = 0; t < 2; ++t) {
      for (int x = x0; x <= x1; ++x) {
        paint(x, y0 + t);
        paint(x, y1 - t);
      }
      for (int y = y0; y <= y1; ++y) {
        paint(x0 + t, y);
        paint(x1 - t, y);
      }
    }
  }
  return float_to_image(width, height, out);
}

// ---------------------------------------------------------------------------
// Batch assembly

template <typename T>
Tensor<T> samples_to_batch(const std::vector<const Sample*>& samples) {
  check_arg(!samples.empty(), "samples_to_batch: empty batch");
  const int w = samples[0]->width, h = samples[0]->height;
  Tensor<T> batch({static_cast<int>(samples.size()), 3, h, w});
  const size_t hw = static_cast<size_t>(w) * h;
  for (size_t i = 0; i < samples.size(); ++i) {
    const Sample& s = *samples[i];
    check_arg(s.width == w && s.height == h, "samples_to_batch: mixed dimensions in batch");
    check_arg(s.image.size() == 3 * hw, "samples_to_batch: sample '" + s.id + "' has a malformed image buffer");
    for (size_t e = 0; e < 3 * hw; ++e) batch.data()[i * 3 * hw + e] = static_cast<T>(s.image[e]);
  }
  return batch;
}

inline std::vector<int> batch_mask_targets(const std::vector<const Sample*>& samples) {
  std::vector<int> out;
  for (const Sample* s : samples)
    for (uint8_t v : s->mask) out.push_back(v);
  return out;
}

inline std::vector<int> batch_scene_labels(const std::vector<const Sample*>& samples) {
  std::vector<int> out;
  out.reserve(samples.size());
  for (const Sample* s : samples) out.push_back(s->scene_class);
  return out;
}

inline std::vector<CellGrid> batch_cell_labels(const std::vector<const Sample*>& samples) {
  std::vector<CellGrid> out;
  out.reserve(samples.size());
  for (const Sample* s : samples)
    out.push_back(assign_cells(s->boxes, s->dont_care, GridGeometry::for_image(s->width, s->height)));
  return out;
}

}  // namespace multinet
