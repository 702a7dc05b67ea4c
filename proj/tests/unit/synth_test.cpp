#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "a3s/data/charset.hpp"
#include "a3s/data/synth.hpp"
#include "a3s/errors.hpp"
#include "a3s/geometry/polygon.hpp"
#include "test_support.hpp"

namespace a3s {
namespace {

namespace fs = std::filesystem;

Lexicon small_lexicon() { return Lexicon({"cat", "dog", "sun", "hotel", "exit", "taxi"}); }

TEST(Charset, GlyphsAndEncoding) {
  for (char c : kCharset) {
    const Glyph& g = glyph_for(c);
    int bits = 0;
    for (int r = 0; r < kGlyphHeight; ++r)
      for (int col = 0; col < kGlyphWidth; ++col) bits += glyph_bit(g, col, r);
    EXPECT_GT(bits, 0) << c;
  }
  EXPECT_THROW(glyph_for('#'), std::exception);
  EXPECT_EQ(encode_text("ab9"), (std::vector<int>{0, 1, 35, kEosIndex}));
  EXPECT_THROW(encode_text("A"), ValidationError);
  EXPECT_EQ(lowercase("HoTeL"), "hotel");
  EXPECT_EQ(char_index('z'), 25);
  EXPECT_EQ(char_index('-'), -1);
}

TEST(Lexicon, ValidationAndRoundTrip) {
  EXPECT_THROW(Lexicon({}), ValidationError);
  EXPECT_THROW(Lexicon({"cat", "cat"}), ValidationError);
  EXPECT_THROW(Lexicon({"Cat"}), ValidationError);
  EXPECT_THROW(Lexicon({"abcdefghijklm"}), ValidationError);
  testing::TempDir dir;
  const Lexicon lex = small_lexicon();
  lex.save(dir / "lex.txt");
  EXPECT_EQ(Lexicon::load(dir / "lex.txt").words(), lex.words());
  testing::write_file(dir / "blank.txt", "cat\n\ndog\n");
  EXPECT_EQ(Lexicon::load(dir / "blank.txt").size(), 2u);
  EXPECT_THROW(Lexicon::load(dir / "absent.txt"), IoError);
}

TEST(Synth, SameSeedGivesIdenticalBytes) {
  testing::TempDir dir;
  const Lexicon lex = small_lexicon();
  generate_dataset(dir / "a", lex, 3, {64, 128}, 7);
  generate_dataset(dir / "b", lex, 3, {64, 128}, 7);
  generate_dataset(dir / "c", lex, 3, {64, 128}, 8);
  for (const auto& e : fs::recursive_directory_iterator(dir / "a")) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), dir / "a");
    EXPECT_EQ(testing::read_file(e.path()), testing::read_file(dir / "b" / rel)) << rel;
  }
  EXPECT_NE(testing::read_file(dir / "a" / "annotations.jsonl"), testing::read_file(dir / "c" / "annotations.jsonl"));
}

TEST(Synth, InstancesAreValidAndTextIsBright) {
  const Lexicon lex = small_lexicon();
  for (std::uint64_t i = 0; i < 25; ++i) {
    Rng rng = Rng::substream(3, i);
    std::vector<std::string> warnings;
    const SceneSample s = render_scene(lex, {96, 192}, rng, sample_id(3, i), &warnings);
    ASSERT_EQ(s.image.pixels.size(), 96u * 192u);
    ASSERT_GE(s.instances.size() + warnings.size(), 1u);
    ASSERT_LE(s.instances.size(), static_cast<std::size_t>(kMaxInstancesPerImage));
    std::vector<Polygon> polys;
    for (const auto& inst : s.instances) {
      EXPECT_TRUE(lex.contains(inst.text));
      const Polygon p = region_to_polygon(inst.region, kRegionPolygonSamples);
      EXPECT_GT(polygon_area(p), 0.0);
      EXPECT_TRUE(is_simple_polygon(p)) << s.id << " " << inst.text;
      const Box b = polygon_bounds(p);
      EXPECT_GE(b.x0, 0.0);
      EXPECT_GE(b.y0, 0.0);
      EXPECT_LE(b.x1, 192.0);
      EXPECT_LE(b.y1, 96.0);
      for (const auto& q : polys) EXPECT_LE(polygon_iou(p, q), kMaxInstanceOverlapIou);
      polys.push_back(p);

      double in_sum = 0, out_sum = 0;
      long in_n = 0, out_n = 0;
      for (int y = 0; y < 96; ++y)
        for (int x = 0; x < 192; ++x) {
          const Point c{x + 0.5, y + 0.5};
          bool in_any = false;
          for (const auto& inst2 : s.instances)
            in_any = in_any || point_in_polygon(region_to_polygon(inst2.region, kRegionPolygonSamples), c);
          if (point_in_polygon(p, c)) {
            in_sum += s.image.at(x, y);
            ++in_n;
          } else if (!in_any) {
            out_sum += s.image.at(x, y);
            ++out_n;
          }
        }
      ASSERT_GT(in_n, 0);
      EXPECT_GE(in_sum / in_n - out_sum / out_n, 80.0) << s.id << " " << inst.text;
    }
    for (std::uint8_t v : s.image.pixels) EXPECT_LE(v, 255);
  }
}

TEST(Synth, LoadRoundTripsExactly) {
  testing::TempDir dir;
  const Lexicon lex = small_lexicon();
  const DatasetManifest m = generate_dataset(dir / "d", lex, 6, {96, 192}, 21);
  const auto samples = load_dataset(dir / "d", &lex);
  ASSERT_EQ(samples.size(), 6u);
  std::size_t n = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    EXPECT_EQ(samples[i].id, m.ids[i]);
    n += samples[i].instances.size();
    Rng rng = Rng::substream(21, i);
    const SceneSample fresh = render_scene(lex, {96, 192}, rng, sample_id(21, i));
    EXPECT_EQ(samples[i].image.pixels, fresh.image.pixels);
    ASSERT_EQ(samples[i].instances.size(), fresh.instances.size());
    for (std::size_t k = 0; k < fresh.instances.size(); ++k) {
      EXPECT_EQ(samples[i].instances[k].text, fresh.instances[k].text);
      EXPECT_EQ(samples[i].instances[k].region, fresh.instances[k].region);  // bit-exact doubles
    }
  }
  EXPECT_EQ(n, m.n_instances);
}

TEST(Synth, SplitsWithDifferentSeedsShareNoIds) {
  std::set<std::string> a;
  for (std::size_t i = 0; i < 50; ++i) a.insert(sample_id(1, i));
  for (std::size_t i = 0; i < 50; ++i) EXPECT_FALSE(a.count(sample_id(2, i)));
}

TEST(Synth, ErrorsNameTheProblem) {
  testing::TempDir dir;
  const Lexicon lex = small_lexicon();
  EXPECT_THROW(generate_dataset(dir / "x", lex, 0, {96, 192}, 1), ConfigError);
  EXPECT_THROW(generate_dataset(dir / "x", lex, 1, {32, 192}, 1), ConfigError);
  testing::write_file(dir / "file", "not a directory");
  EXPECT_THROW(generate_dataset(dir / "file" / "sub", lex, 1, {96, 192}, 1), IoError);

  generate_dataset(dir / "d", lex, 2, {96, 192}, 4);
  const auto ids = load_dataset(dir / "d");
  fs::remove(dir / "d" / "images" / (ids[1].id + ".png"));
  try {
    load_dataset(dir / "d");
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find(ids[1].id), std::string::npos);
  }

  generate_dataset(dir / "e", lex, 1, {96, 192}, 4);
  const Lexicon other({"zzz"});
  EXPECT_THROW(load_dataset(dir / "e", &other), ValidationError);
  testing::write_file(dir / "e" / "annotations.jsonl", "{not json\n");
  EXPECT_THROW(load_dataset(dir / "e"), IoError);
  EXPECT_THROW(load_dataset(dir / "nowhere"), IoError);
}

TEST(Image, PngRoundTrip) {
  testing::TempDir dir;
  GrayImage g{7, 3, {}};
  for (int i = 0; i < 21; ++i) g.pixels.push_back(static_cast<std::uint8_t>(i * 12));
  write_png_gray(dir / "g.png", g);
  const GrayImage r = read_png_gray(dir / "g.png");
  EXPECT_EQ(r.width, 7);
  EXPECT_EQ(r.height, 3);
  EXPECT_EQ(r.pixels, g.pixels);
  testing::write_file(dir / "bad.png", "nope");
  EXPECT_THROW(read_png_gray(dir / "bad.png"), IoError);
  RgbImage rgb = RgbImage::from_gray(g);
  rgb.set(-1, 0, 1, 2, 3);
  rgb.set(100, 100, 1, 2, 3);
  rgb.set(0, 0, 9, 8, 7);
  EXPECT_EQ(rgb.pixels[0], 9);
  EXPECT_EQ(rgb.pixels[5], 12);
}

}  // namespace
}  // namespace a3s
