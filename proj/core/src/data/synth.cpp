#include "a3s/data/synth.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>

#include "a3s/data/charset.hpp"
#include "a3s/errors.hpp"
#include "a3s/geometry/polygon.hpp"

namespace a3s {
namespace {

constexpr double kMaxTilt = 0.25;          // radians
constexpr double kMaxBend = 0.20;          // control-point offset as a fraction of word length
constexpr double kSplatStep = 0.25;        // canvas sampling step, pixels
constexpr double kBoldShift = 0.45;        // extra stroke width, glyph pixels
constexpr int kAdvanceCols = kGlyphWidth + 1;

struct Placement {
  BezierRegion region;
  double glyph_px = 1.0;
  double margin = 0.0;
  double canvas_w = 0.0;
  double canvas_h = 0.0;
};

bool canvas_ink(const std::string& word, const Placement& p, double u, double v) {
  const double gy = (v - p.margin) / p.glyph_px;
  const int row = static_cast<int>(std::floor(gy));
  if (row < 0 || row >= kGlyphHeight) return false;
  const double gx = (u - p.margin) / p.glyph_px;
  for (double shift : {0.0, kBoldShift}) {
    const int col = static_cast<int>(std::floor(gx - shift));
    if (col < 0) continue;
    const int k = col / kAdvanceCols;
    const int c = col % kAdvanceCols;
    if (k >= static_cast<int>(word.size()) || c >= kGlyphWidth) continue;
    if (glyph_bit(glyph_for(word[static_cast<std::size_t>(k)]), c, row)) return true;
  }
  return false;
}

Placement propose(const std::string& word, ImageSize size, Rng& rng) {
  Placement p;
  p.glyph_px = rng.uniform(1.3, 1.7);
  p.margin = 0.5 * p.glyph_px;
  const double n = static_cast<double>(word.size());
  p.canvas_w = (n * kAdvanceCols - 1) * p.glyph_px + 2 * p.margin;
  p.canvas_h = kGlyphHeight * p.glyph_px + 2 * p.margin;

  const double tilt = rng.uniform(-kMaxTilt, kMaxTilt);
  const Point dir{std::cos(tilt), std::sin(tilt)};
  const Point down{-dir.y, dir.x};
  const Point centre{rng.uniform(0.0, size.width), rng.uniform(0.0, size.height)};
  const double bend1 = rng.uniform(-kMaxBend, kMaxBend) * p.canvas_w;
  const double bend2 = rng.uniform(-kMaxBend, kMaxBend) * p.canvas_w;

  const Point b0{centre.x - dir.x * p.canvas_w / 2, centre.y - dir.y * p.canvas_w / 2};
  CubicCurve mid{};
  mid[0] = b0;
  mid[1] = {b0.x + dir.x * p.canvas_w / 3 + down.x * bend1, b0.y + dir.y * p.canvas_w / 3 + down.y * bend1};
  mid[2] = {b0.x + dir.x * 2 * p.canvas_w / 3 + down.x * bend2,
            b0.y + dir.y * 2 * p.canvas_w / 3 + down.y * bend2};
  mid[3] = {b0.x + dir.x * p.canvas_w, b0.y + dir.y * p.canvas_w};
  const double half = p.canvas_h / 2;
  for (int k = 0; k < 4; ++k) {
    p.region.top[k] = {mid[k].x - down.x * half, mid[k].y - down.y * half};
    p.region.bottom[k] = {mid[k].x + down.x * half, mid[k].y + down.y * half};
  }
  return p;
}

bool in_bounds(const Polygon& poly, ImageSize size) {
  for (const auto& q : poly)
    if (q.x < 1.0 || q.y < 1.0 || q.x > size.width - 2.0 || q.y > size.height - 2.0) return false;
  return true;
}

void stamp(GrayImage& img, const std::string& word, const Placement& p, std::uint8_t intensity) {
  for (double v = kSplatStep / 2; v < p.canvas_h; v += kSplatStep) {
    const double s = v / p.canvas_h;
    for (double u = kSplatStep / 2; u < p.canvas_w; u += kSplatStep) {
      if (!canvas_ink(word, p, u, v)) continue;
      const double t = u / p.canvas_w;
      const Point top = bezier_point(p.region.top, t);
      const Point bot = bezier_point(p.region.bottom, t);
      const int x = static_cast<int>(std::lround((1 - s) * top.x + s * bot.x));
      const int y = static_cast<int>(std::lround((1 - s) * top.y + s * bot.y));
      if (x >= 0 && y >= 0 && x < img.width && y < img.height) img.at(x, y) = intensity;
    }
  }
}

nlohmann::json to_json(const SceneSample& s) {
  nlohmann::json inst = nlohmann::json::array();
  for (const auto& t : s.instances) {
    const auto flat = t.region.flatten();
    inst.push_back({{"control_points", std::vector<double>(flat.begin(), flat.end())}, {"text", t.text}});
  }
  return {{"id", s.id}, {"instances", inst}};
}

}  // namespace

SceneSample render_scene(const Lexicon& lexicon, ImageSize size, Rng& rng, std::string id,
                         std::vector<std::string>* warnings) {
  if (size.height < 64 || size.width < 64) throw ConfigError("image size must be at least 64x64");
  SceneSample scene;
  scene.id = std::move(id);
  scene.image = {size.width, size.height, std::vector<std::uint8_t>(static_cast<std::size_t>(size.width) * size.height)};
  for (auto& px : scene.image.pixels) px = static_cast<std::uint8_t>(rng.uniform_int(0, 60));

  const int count = rng.uniform_int(1, kMaxInstancesPerImage);
  std::vector<Polygon> placed;
  for (int k = 0; k < count; ++k) {
    const std::string& word = lexicon[static_cast<std::size_t>(rng.bounded(lexicon.size()))];
    bool ok = false;
    for (int attempt = 0; attempt < kMaxPlacementAttempts && !ok; ++attempt) {
      const Placement p = propose(word, size, rng);
      const Polygon poly = region_to_polygon(p.region, kRegionPolygonSamples);
      if (!in_bounds(poly, size)) continue;
      bool clash = false;
      for (const auto& other : placed)
        if (polygon_iou(poly, other) > kMaxInstanceOverlapIou) clash = true;
      if (clash) continue;
      const auto intensity = static_cast<std::uint8_t>(rng.uniform_int(180, 255));
      stamp(scene.image, word, p, intensity);
      placed.push_back(poly);
      scene.instances.push_back({p.region, word});
      ok = true;
    }
    if (!ok && warnings)
      warnings->push_back(scene.id + ": could not place '" + word + "' after " +
                          std::to_string(kMaxPlacementAttempts) + " attempts, skipped");
  }
  return scene;
}

std::string sample_id(std::uint64_t seed, std::size_t index) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "s%llu_%05zu", static_cast<unsigned long long>(seed), index);
  return buf;
}

DatasetManifest generate_dataset(const std::filesystem::path& out_dir, const Lexicon& lexicon,
                                 std::size_t n_images, ImageSize size, std::uint64_t seed) {
  if (n_images < 1) throw ConfigError("n_images must be at least 1");
  DatasetManifest manifest;
  manifest.dir = out_dir;
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "images", ec);
  if (ec) throw IoError("cannot create " + (out_dir / "images").string() + ": " + ec.message());
  std::ofstream ann(out_dir / "annotations.jsonl", std::ios::trunc);
  if (!ann) throw IoError("cannot write " + (out_dir / "annotations.jsonl").string());
  for (std::size_t i = 0; i < n_images; ++i) {
    Rng rng = Rng::substream(seed, i);
    SceneSample s = render_scene(lexicon, size, rng, sample_id(seed, i), &manifest.warnings);
    write_png_gray(out_dir / "images" / (s.id + ".png"), s.image);
    ann << to_json(s).dump() << '\n';
    manifest.ids.push_back(s.id);
    manifest.n_instances += s.instances.size();
  }
  if (!ann) throw IoError("write failed for " + (out_dir / "annotations.jsonl").string());
  return manifest;
}

std::vector<SceneSample> load_dataset(const std::filesystem::path& dir, const Lexicon* lexicon) {
  const auto ann_path = dir / "annotations.jsonl";
  std::ifstream in(ann_path);
  if (!in) throw IoError("cannot open " + ann_path.string());
  std::vector<SceneSample> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw IoError(ann_path.string() + ":" + std::to_string(line_no) + ": corrupt annotation (" + e.what() + ")");
    }
    SceneSample s;
    try {
      s.id = j.at("id").get<std::string>();
      for (const auto& inst : j.at("instances")) {
        const auto cps = inst.at("control_points").get<std::vector<double>>();
        if (cps.size() != 16) throw ValidationError(s.id + ": control_points must hold 16 values");
        s.instances.push_back({BezierRegion::from_flat(cps), inst.at("text").get<std::string>()});
      }
    } catch (const nlohmann::json::exception& e) {
      throw IoError(ann_path.string() + ":" + std::to_string(line_no) + ": malformed annotation (" + e.what() + ")");
    }
    s.image = read_png_gray(dir / "images" / (s.id + ".png"));
    const ImageSize size{s.image.height, s.image.width};
    if (s.instances.empty() || s.instances.size() > kMaxInstancesPerImage)
      throw ValidationError(s.id + ": expected 1-4 instances, found " + std::to_string(s.instances.size()));
    for (const auto& inst : s.instances) {
      if (inst.text.empty() || inst.text.size() > kMaxWordLength || !in_charset(inst.text))
        throw ValidationError(s.id + ": invalid transcription '" + inst.text + "'");
      if (lexicon && !lexicon->contains(inst.text))
        throw ValidationError(s.id + ": transcription '" + inst.text + "' is not in the lexicon");
      if (!inst.region.finite()) throw ValidationError(s.id + ": non-finite control point");
      const Polygon poly = region_to_polygon(inst.region, kRegionPolygonSamples);
      if (!(polygon_area(poly) > 0.0)) throw ValidationError(s.id + ": degenerate region for '" + inst.text + "'");
      for (const auto& q : poly)
        if (q.x < 0 || q.y < 0 || q.x > size.width - 1 || q.y > size.height - 1)
          throw ValidationError(s.id + ": region of '" + inst.text + "' leaves the image");
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace a3s
