#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "a3s/data/image.hpp"
#include "a3s/data/lexicon.hpp"
#include "a3s/geometry/bezier.hpp"
#include "a3s/rng.hpp"

namespace a3s {

struct TextInstance {
  BezierRegion region;
  std::string text;
};

struct SceneSample {
  std::string id;
  GrayImage image;
  std::vector<TextInstance> instances;
};

struct ImageSize {
  int height = 96;
  int width = 192;
};

struct DatasetManifest {
  std::filesystem::path dir;
  std::vector<std::string> ids;
  std::size_t n_instances = 0;
  std::vector<std::string> warnings;  // one per skipped instance
};

inline constexpr int kMaxInstancesPerImage = 4;
inline constexpr int kMaxPlacementAttempts = 100;
inline constexpr double kMaxInstanceOverlapIou = 0.05;
/// Polygon resolution used for placement, validation and ground truth.
inline constexpr int kRegionPolygonSamples = 16;

/// Renders one synthetic scene: noise background in [0,60], 1-4 curved
/// words stamped at intensity [180,255]. Instances that cannot be placed in
/// kMaxPlacementAttempts tries are skipped and reported through warnings.
SceneSample render_scene(const Lexicon& lexicon, ImageSize size, Rng& rng, std::string id,
                         std::vector<std::string>* warnings = nullptr);

std::string sample_id(std::uint64_t seed, std::size_t index);

/// Writes images/<id>.png and annotations.jsonl under out_dir. Image i uses
/// Rng::substream(seed, i), so output is a pure function of the arguments.
DatasetManifest generate_dataset(const std::filesystem::path& out_dir, const Lexicon& lexicon,
                                 std::size_t n_images, ImageSize size, std::uint64_t seed);

/// Reads a dataset directory in manifest order. When a lexicon is supplied,
/// every transcription must belong to it.
std::vector<SceneSample> load_dataset(const std::filesystem::path& dir, const Lexicon* lexicon = nullptr);

}  // namespace a3s
