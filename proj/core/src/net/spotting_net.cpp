#include "a3s/net/spotting_net.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>

#include "a3s/autodiff/ops.hpp"
#include "a3s/data/charset.hpp"
#include "a3s/errors.hpp"
#include "a3s/geometry/polygon.hpp"

namespace a3s {
namespace {

constexpr int kStemKernel = 4;  // stride-2 convs use k=4, pad=1 so even sizes halve exactly
constexpr int kPreNmsTopK = 256;
constexpr int kNmsPolygonSamples = 8;
constexpr double kScorePriorBias = -2.0;
constexpr double kEmbeddingOutputBias = 0.5;  // keeps the terminal relu units alive at init

std::size_t sz(int v) { return static_cast<std::size_t>(v); }

void add_conv(ParameterSet& ps, const std::string& name, int c_out, int c_in, int k, Rng& rng) {
  ps.add(name + "/weight", he_uniform({sz(c_out), sz(c_in), sz(k), sz(k)}, sz(c_in * k * k), rng));
  ps.add(name + "/bias", Tensor::zeros({sz(c_out)}));
}

void add_linear(ParameterSet& ps, const std::string& name, int out, int in, Rng& rng, bool bias = true) {
  ps.add(name + "/weight", he_uniform({sz(out), sz(in)}, sz(in), rng));
  if (bias) ps.add(name + "/bias", Tensor::zeros({sz(out)}));
}

}  // namespace

std::string net_config_to_json(const NetConfig& c) {
  nlohmann::json j = {{"stem_channels", c.stem_channels},
                      {"backbone_channels", c.backbone_channels},
                      {"det_channels", c.det_channels},
                      {"offset_gain", c.offset_gain},
                      {"align_h", c.align_h},
                      {"align_w", c.align_w},
                      {"rec_hidden", c.rec_hidden},
                      {"rec_attention", c.rec_attention},
                      {"rec_char_embed", c.rec_char_embed},
                      {"max_steps", c.max_steps},
                      {"emb_head_channels", c.emb_head_channels},
                      {"emb_dim", c.emb_dim},
                      {"disc_hidden1", c.disc_hidden1},
                      {"disc_hidden2", c.disc_hidden2}};
  return j.dump();
}

NetConfig net_config_from_json(const std::string& text) {
  NetConfig c;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed network config: ") + e.what());
  }
  const std::pair<const char*, int*> ints[] = {
      {"stem_channels", &c.stem_channels},   {"backbone_channels", &c.backbone_channels},
      {"det_channels", &c.det_channels},     {"align_h", &c.align_h},
      {"align_w", &c.align_w},               {"rec_hidden", &c.rec_hidden},
      {"rec_attention", &c.rec_attention},   {"rec_char_embed", &c.rec_char_embed},
      {"max_steps", &c.max_steps},           {"emb_head_channels", &c.emb_head_channels},
      {"emb_dim", &c.emb_dim},               {"disc_hidden1", &c.disc_hidden1},
      {"disc_hidden2", &c.disc_hidden2}};
  for (const auto& [key, value] : j.items()) {
    if (key == "offset_gain") {
      c.offset_gain = value.get<double>();
      continue;
    }
    auto it = std::find_if(std::begin(ints), std::end(ints), [&](const auto& e) { return key == e.first; });
    if (it == std::end(ints)) throw ConfigError("unknown network config key '" + key + "'");
    *it->second = value.get<int>();
  }
  return c;
}

// ---------------------------------------------------------------------------

std::array<double, 16> encode_region_offsets(const BezierRegion& region, int row, int col, double spatial_scale) {
  auto flat = region.flatten();
  for (std::size_t i = 0; i < 16; i += 2) {
    flat[i] = flat[i] * spatial_scale - col;
    flat[i + 1] = flat[i + 1] * spatial_scale - row;
  }
  return flat;
}

BezierRegion decode_region_offsets(std::span<const double> offsets, int row, int col, double spatial_scale) {
  if (offsets.size() != 16) throw DimensionError("decode_region_offsets: need 16 offsets");
  std::array<double, 16> flat{};
  for (std::size_t i = 0; i < 16; i += 2) {
    flat[i] = (offsets[i] + col) / spatial_scale;
    flat[i + 1] = (offsets[i + 1] + row) / spatial_scale;
  }
  return BezierRegion::from_flat(flat);
}

std::vector<DetectionCandidate> decode_detections(const DetectionOutput& det, double score_thresh, double iou_nms,
                                                  int max_det, double spatial_scale) {
  if (!(score_thresh > 0.0 && score_thresh < 1.0)) throw ConfigError("score_thresh must lie in (0,1)");
  const std::size_t h = det.score_map.dim(2), w = det.score_map.dim(3);
  const auto scores = det.score_map.data();
  const auto offs = det.offset_map.data();
  struct Cell {
    double conf;
    int row, col;
  };
  std::vector<Cell> cells;
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) {
      const double s = scores[i * w + j];
      const double conf = s >= 0 ? 1.0 / (1.0 + std::exp(-s)) : std::exp(s) / (1.0 + std::exp(s));
      if (conf >= score_thresh) cells.push_back({conf, static_cast<int>(i), static_cast<int>(j)});
    }
  std::sort(cells.begin(), cells.end(), [](const Cell& a, const Cell& b) {
    if (a.conf != b.conf) return a.conf > b.conf;
    if (a.row != b.row) return a.row < b.row;
    return a.col < b.col;
  });
  if (cells.size() > sz(kPreNmsTopK)) cells.resize(sz(kPreNmsTopK));

  std::vector<DetectionCandidate> kept;
  std::vector<Polygon> kept_polys;
  for (const auto& c : cells) {
    if (static_cast<int>(kept.size()) >= max_det) break;
    std::array<double, 16> o{};
    for (std::size_t k = 0; k < 16; ++k) o[k] = offs[(k * h + sz(c.row)) * w + sz(c.col)];
    const BezierRegion region = decode_region_offsets(o, c.row, c.col, spatial_scale);
    const Polygon poly = region_to_polygon(region, kNmsPolygonSamples);
    bool suppressed = false;
    for (const auto& other : kept_polys)
      if (polygon_iou(poly, other) > iou_nms) {
        suppressed = true;
        break;
      }
    if (suppressed) continue;
    DetectionCandidate cand;
    cand.region = region;
    cand.confidence = c.conf;
    cand.row = c.row;
    cand.col = c.col;
    kept.push_back(std::move(cand));
    kept_polys.push_back(poly);
  }
  return kept;
}

std::string greedy_decode(const Tensor& logits) {
  if (logits.rank() != 2 || logits.dim(1) != sz(kNumClasses))
    throw DimensionError("greedy_decode: logits must be [T," + std::to_string(kNumClasses) + "]");
  const std::size_t steps = logits.dim(0), k = logits.dim(1);
  std::string out;
  for (std::size_t t = 0; t < steps; ++t) {
    const double* row = logits.data().data() + t * k;
    const auto best = static_cast<int>(std::max_element(row, row + k) - row);
    if (best == kEosIndex) break;
    out.push_back(kCharset[sz(best)]);
  }
  return out;
}

Tensor image_to_tensor(const GrayImage& image) {
  std::vector<double> data(image.pixels.size());
  std::transform(image.pixels.begin(), image.pixels.end(), data.begin(),
                 [](std::uint8_t v) { return v / 255.0; });
  return Tensor::from({1, 1, sz(image.height), sz(image.width)}, std::move(data));
}

// ---------------------------------------------------------------------------

SpottingNet::SpottingNet(NetConfig cfg, Rng& rng) : cfg_(cfg) {
  const int c = cfg_.backbone_channels;
  add_conv(params_, "backbone/conv1", cfg_.stem_channels, 1, kStemKernel, rng);
  add_conv(params_, "backbone/conv2", c, cfg_.stem_channels, kStemKernel, rng);
  add_conv(params_, "backbone/conv3", c, c, 3, rng);
  add_conv(params_, "backbone/conv4", c, c, 3, rng);

  add_conv(params_, "det/score1", cfg_.det_channels, c, 3, rng);
  add_conv(params_, "det/score2", 1, cfg_.det_channels, 1, rng);
  params_.at("det/score2/bias").mutable_data()[0] = kScorePriorBias;
  add_conv(params_, "det/offset1", cfg_.det_channels, c, 3, rng);
  add_conv(params_, "det/offset2", 16, cfg_.det_channels, 1, rng);

  const int hid = cfg_.rec_hidden, att = cfg_.rec_attention, emb = cfg_.rec_char_embed;
  add_linear(params_, "rec/key", att, c, rng);
  add_linear(params_, "rec/query", att, hid, rng, false);
  params_.add("rec/pos", uniform_tensor({sz(cfg_.align_w), sz(att)}, -1.0, 1.0, rng));
  params_.add("rec/attn_v", uniform_tensor({1, sz(att)}, -1.0 / std::sqrt(att), 1.0 / std::sqrt(att), rng));
  params_.add("rec/char_embed", uniform_tensor({sz(kNumClasses + 1), sz(emb)}, -1.0, 1.0, rng));
  const double gb = 1.0 / std::sqrt(hid);
  params_.add("rec/gru/w_ih", uniform_tensor({sz(3 * hid), sz(c + emb)}, -gb, gb, rng));
  params_.add("rec/gru/w_hh", uniform_tensor({sz(3 * hid), sz(hid)}, -gb, gb, rng));
  params_.add("rec/gru/b_ih", Tensor::zeros({sz(3 * hid)}));
  params_.add("rec/gru/b_hh", Tensor::zeros({sz(3 * hid)}));
  add_linear(params_, "rec/out", kNumClasses, hid + c, rng);

  const int ch = cfg_.emb_head_channels;
  add_conv(params_, "emb/conv1", ch, c, 3, rng);
  add_conv(params_, "emb/conv2", ch, ch, 3, rng);
  add_linear(params_, "emb/fc1", cfg_.emb_dim, ch * cfg_.align_w, rng);
  add_linear(params_, "emb/fc2", cfg_.emb_dim, cfg_.emb_dim, rng);
  for (double& b : params_.at("emb/fc2/bias").mutable_data()) b = kEmbeddingOutputBias;

  add_linear(params_, "disc/fc1", cfg_.disc_hidden1, cfg_.emb_dim, rng);
  add_linear(params_, "disc/fc2", cfg_.disc_hidden2, cfg_.disc_hidden1, rng);
  add_linear(params_, "disc/fc3", 1, cfg_.disc_hidden2, rng);
}

void SpottingNet::check_embedding_table(const EmbeddingTable& table) const {
  if (table.dim() != sz(cfg_.emb_dim))
    throw ConfigError("word-embedding head outputs " + std::to_string(cfg_.emb_dim) +
                      " dims but the embedding table has " + std::to_string(table.dim()));
}

Tensor SpottingNet::backbone_forward(Tape& tape, const Tensor& image) const {
  if (image.rank() != 4 || image.dim(1) != 1) throw DimensionError("backbone expects a [1,1,H,W] image");
  if (image.dim(2) % kFeatureStride || image.dim(3) % kFeatureStride)
    throw ConfigError("image size " + std::to_string(image.dim(2)) + "x" + std::to_string(image.dim(3)) +
                      " is not divisible by 4");
  Tensor x = ops::relu(tape, ops::conv2d(tape, image, p("backbone/conv1/weight"), p("backbone/conv1/bias"), 2, 1));
  x = ops::relu(tape, ops::conv2d(tape, x, p("backbone/conv2/weight"), p("backbone/conv2/bias"), 2, 1));
  x = ops::relu(tape, ops::conv2d(tape, x, p("backbone/conv3/weight"), p("backbone/conv3/bias"), 1, 1));
  x = ops::relu(tape, ops::conv2d(tape, x, p("backbone/conv4/weight"), p("backbone/conv4/bias"), 1, 1));
  return x;
}

DetectionOutput SpottingNet::detection_forward(Tape& tape, const Tensor& features) const {
  Tensor s = ops::relu(tape, ops::conv2d(tape, features, p("det/score1/weight"), p("det/score1/bias"), 1, 1));
  s = ops::conv2d(tape, s, p("det/score2/weight"), p("det/score2/bias"), 1, 0);
  Tensor o = ops::relu(tape, ops::conv2d(tape, features, p("det/offset1/weight"), p("det/offset1/bias"), 1, 1));
  o = ops::conv2d(tape, o, p("det/offset2/weight"), p("det/offset2/bias"), 1, 0);
  o = ops::affine(tape, o, cfg_.offset_gain);
  return {s, o};
}

Tensor SpottingNet::align(Tape& tape, const Tensor& feature_map, const BezierRegion& region) const {
  return bezier_align(tape, feature_map, region, cfg_.align_h, cfg_.align_w, kSpatialScale);
}

Tensor SpottingNet::recognition_forward(Tape& tape, const Tensor& aligned, int max_steps,
                                        std::span<const int> teacher,
                                        std::vector<std::vector<double>>* attention) const {
  if (aligned.rank() != 3) throw DimensionError("recognition expects aligned features [c,h,w]");
  const std::size_t c = aligned.dim(0), ah = aligned.dim(1), aw = aligned.dim(2);
  Tensor enc = ops::mean_pool_height(tape, ops::reshape(tape, aligned, {1, c, ah, aw}));
  enc = ops::transpose(tape, ops::reshape(tape, enc, {c, aw}));  // [aw, c]
  if (aw != sz(cfg_.align_w)) throw DimensionError("aligned width " + std::to_string(aw) + " != align_w");
  const Tensor keys = ops::add(tape, ops::linear(tape, enc, p("rec/key/weight"), p("rec/key/bias")), p("rec/pos"));

  const bool forced = !teacher.empty();
  const int steps = forced ? static_cast<int>(teacher.size()) : max_steps;
  Tensor h = Tensor::zeros({1, sz(cfg_.rec_hidden)});
  int prev = kNumClasses;  // start token
  std::vector<Tensor> rows;
  rows.reserve(sz(steps));
  for (int t = 0; t < steps; ++t) {
    const Tensor query = ops::linear(tape, h, p("rec/query/weight"), Tensor{});
    std::vector<double> weights;
    const Tensor ctx = ops::additive_attention(tape, keys, query, p("rec/attn_v"), enc,
                                               attention ? &weights : nullptr);
    if (attention) attention->push_back(std::move(weights));
    const int prev_idx[] = {prev};
    const Tensor ch = ops::embedding(tape, p("rec/char_embed"), prev_idx);
    const Tensor x_parts[] = {ctx, ch};
    h = ops::gru_cell(tape, ops::concat_cols(tape, x_parts), h, p("rec/gru/w_ih"), p("rec/gru/w_hh"),
                      p("rec/gru/b_ih"), p("rec/gru/b_hh"));
    const Tensor o_parts[] = {h, ctx};
    Tensor logits = ops::linear(tape, ops::concat_cols(tape, o_parts), p("rec/out/weight"), p("rec/out/bias"));
    if (forced) {
      prev = teacher[sz(t)];
    } else {
      const auto d = logits.data();
      prev = static_cast<int>(std::max_element(d.begin(), d.end()) - d.begin());
    }
    rows.push_back(std::move(logits));
  }
  return ops::concat_rows(tape, rows);
}

Tensor SpottingNet::word_embedding_forward(Tape& tape, const Tensor& aligned) const {
  if (aligned.rank() != 4) throw DimensionError("word-embedding head expects [n,c,h,w]");
  const std::size_t n = aligned.dim(0), w = aligned.dim(3);
  Tensor x = ops::relu(tape, ops::conv2d(tape, aligned, p("emb/conv1/weight"), p("emb/conv1/bias"), 1, 1));
  x = ops::relu(tape, ops::conv2d(tape, x, p("emb/conv2/weight"), p("emb/conv2/bias"), 1, 1));
  x = ops::mean_pool_height(tape, x);
  x = ops::reshape(tape, x, {n, x.dim(1) * w});
  x = ops::relu(tape, ops::linear(tape, x, p("emb/fc1/weight"), p("emb/fc1/bias")));
  return ops::relu(tape, ops::linear(tape, x, p("emb/fc2/weight"), p("emb/fc2/bias")));
}

Tensor SpottingNet::discriminator_forward(Tape& tape, const Tensor& v) const {
  if (v.rank() != 2 || v.dim(1) != sz(cfg_.emb_dim))
    throw ConfigError("discriminator expects [n," + std::to_string(cfg_.emb_dim) + "], got " + shape_str(v.shape()));
  Tensor x = ops::relu(tape, ops::linear(tape, v, p("disc/fc1/weight"), p("disc/fc1/bias")));
  x = ops::relu(tape, ops::linear(tape, x, p("disc/fc2/weight"), p("disc/fc2/bias")));
  x = ops::sigmoid(tape, ops::linear(tape, x, p("disc/fc3/weight"), p("disc/fc3/bias")));
  return ops::reshape(tape, x, {v.dim(0)});
}

std::vector<DetectionCandidate> SpottingNet::spot(const GrayImage& image, double score_thresh, double iou_nms,
                                                  int max_det) const {
  Tape tape;  // parameters require grad, so ops still record; the tape is discarded
  const Tensor features = backbone_forward(tape, image_to_tensor(image));
  const DetectionOutput det = detection_forward(tape, features);
  auto cands = decode_detections(det, score_thresh, iou_nms, max_det, kSpatialScale);
  if (cands.empty()) return cands;
  const Tensor fmap = ops::reshape(tape, features, {features.dim(1), features.dim(2), features.dim(3)});
  std::vector<Tensor> aligned;
  for (auto& cand : cands) {
    cand.aligned = align(tape, fmap, cand.region);
    cand.text = greedy_decode(recognition_forward(tape, cand.aligned, cfg_.max_steps));
    aligned.push_back(cand.aligned);
  }
  const Tensor emb = word_embedding_forward(tape, ops::stack(tape, aligned));
  const std::size_t d = emb.dim(1);
  for (std::size_t i = 0; i < cands.size(); ++i) {
    const auto row = emb.data().subspan(i * d, d);
    cands[i].pred_embedding = SemanticVector{{row.begin(), row.end()}};
  }
  return cands;
}

}  // namespace a3s
