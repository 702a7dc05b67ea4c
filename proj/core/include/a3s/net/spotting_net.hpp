#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "a3s/autodiff/params.hpp"
#include "a3s/autodiff/tape.hpp"
#include "a3s/data/image.hpp"
#include "a3s/embedding/table.hpp"
#include "a3s/geometry/bezier.hpp"
#include "a3s/rng.hpp"

namespace a3s {

/// Feature maps are a quarter of the input resolution.
inline constexpr int kFeatureStride = 4;
inline constexpr double kSpatialScale = 1.0 / kFeatureStride;

/// Architecture hyper-parameters. Defaults are the desk-scale setting; the
/// reference word-embedding head uses emb_head_channels = 256.
struct NetConfig {
  int stem_channels = 32;
  int backbone_channels = 64;
  int det_channels = 64;
  double offset_gain = 4.0;  // offset conv output is multiplied by this
  int align_h = 8;
  int align_w = 32;
  int rec_hidden = 64;
  int rec_attention = 64;
  int rec_char_embed = 16;
  int max_steps = 13;
  int emb_head_channels = 128;
  int emb_dim = 300;
  int disc_hidden1 = 256;
  int disc_hidden2 = 64;

  friend bool operator==(const NetConfig&, const NetConfig&) = default;
};

std::string net_config_to_json(const NetConfig& cfg);
/// Missing keys keep their defaults; unknown keys raise ConfigError.
NetConfig net_config_from_json(const std::string& text);

/// Parameter name prefixes. The discriminator lives apart from everything
/// the generator-side update touches.
inline constexpr std::string_view kBackbonePrefix = "backbone/";
inline constexpr std::string_view kDetectionPrefix = "det/";
inline constexpr std::string_view kRecognitionPrefix = "rec/";
inline constexpr std::string_view kEmbeddingHeadPrefix = "emb/";
inline constexpr std::string_view kDiscriminatorPrefix = "disc/";

struct DetectionOutput {
  Tensor score_map;   // [1,1,h,w] logits
  Tensor offset_map;  // [1,16,h,w] control-point offsets in feature cells, relative to the cell
};

struct DetectionCandidate {
  BezierRegion region;  // image coordinates
  double confidence = 0.0;
  int row = 0;
  int col = 0;
  Tensor aligned;  // [c, align_h, align_w]
  std::optional<std::string> text;
  std::optional<SemanticVector> pred_embedding;
};

/// Offsets of a region relative to feature cell (row, col), whose centre is
/// feature coordinate (col, row), i.e. image point (col, row) / spatial_scale.
std::array<double, 16> encode_region_offsets(const BezierRegion& region, int row, int col, double spatial_scale);
BezierRegion decode_region_offsets(std::span<const double> offsets, int row, int col, double spatial_scale);

/// Thresholds sigmoid(score), decodes regions, runs greedy polygon-IoU NMS
/// and keeps at most max_det candidates sorted by confidence (ties by row,
/// then column). The aligned field is left empty.
std::vector<DetectionCandidate> decode_detections(const DetectionOutput& det, double score_thresh, double iou_nms,
                                                  int max_det, double spatial_scale);

/// Argmax per step (lowest index wins ties), cut at the first EOS.
std::string greedy_decode(const Tensor& logits);

/// Image pixels scaled to [0,1] as a [1,1,H,W] tensor.
Tensor image_to_tensor(const GrayImage& image);

class SpottingNet {
 public:
  SpottingNet(NetConfig cfg, Rng& rng);

  const NetConfig& config() const { return cfg_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

  /// Throws ConfigError if the table dimension differs from emb_dim.
  void check_embedding_table(const EmbeddingTable& table) const;

  /// [1,1,H,W] -> [1,c,H/4,W/4]. H and W must be divisible by 4.
  Tensor backbone_forward(Tape& tape, const Tensor& image) const;
  DetectionOutput detection_forward(Tape& tape, const Tensor& features) const;

  /// aligned [c,align_h,align_w] -> logits [steps, 37]. With teacher set,
  /// steps = teacher.size() and step t is fed teacher[t-1]; otherwise
  /// max_steps greedy steps. attention receives one weight row per step.
  Tensor recognition_forward(Tape& tape, const Tensor& aligned, int max_steps,
                             std::span<const int> teacher = {},
                             std::vector<std::vector<double>>* attention = nullptr) const;

  /// aligned batch [n,c,align_h,align_w] -> [n,emb_dim], elementwise >= 0.
  Tensor word_embedding_forward(Tape& tape, const Tensor& aligned) const;

  /// [n,emb_dim] -> [n] probabilities of the "pre-trained" class.
  Tensor discriminator_forward(Tape& tape, const Tensor& v) const;

  /// BezierAlign of an image-space region on a [c,h,w] feature map.
  Tensor align(Tape& tape, const Tensor& feature_map, const BezierRegion& region) const;

  /// Full inference on one image: detection, alignment, recognition and
  /// predicted embeddings.
  std::vector<DetectionCandidate> spot(const GrayImage& image, double score_thresh, double iou_nms,
                                       int max_det) const;

 private:
  const Tensor& p(const std::string& name) const { return params_.at(name); }

  NetConfig cfg_;
  ParameterSet params_;
};

}  // namespace a3s
