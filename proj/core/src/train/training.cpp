#include "a3s/train/training.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <numeric>
#include <sstream>

#include "a3s/autodiff/checkpoint.hpp"
#include "a3s/autodiff/ops.hpp"
#include "a3s/data/charset.hpp"
#include "a3s/errors.hpp"
#include "a3s/geometry/polygon.hpp"
#include "a3s/net/model_io.hpp"

namespace a3s {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

double parse_real(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used == value.size() && std::isfinite(v)) return v;
  } catch (const std::exception&) {
  }
  throw ConfigError("config key '" + key + "': '" + value + "' is not a number");
}

std::uint64_t parse_count(const std::string& key, const std::string& value) {
  std::uint64_t v = 0;
  const auto [end, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc() || end != value.data() + value.size())
    throw ConfigError("config key '" + key + "': '" + value + "' is not a non-negative integer");
  return v;
}

int parse_int(const std::string& key, const std::string& value) {
  const auto v = parse_count(key, value);
  if (v > 1'000'000) throw ConfigError("config key '" + key + "': value too large");
  return static_cast<int>(v);
}

std::vector<std::pair<std::uint64_t, double>> parse_schedule(const std::string& value) {
  std::vector<std::pair<std::uint64_t, double>> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    const auto colon = item.find(':');
    if (colon == std::string::npos)
      throw ConfigError("config key 'lr_schedule': entry '" + item + "' is not iteration:lr");
    out.emplace_back(parse_count("lr_schedule", trim(item.substr(0, colon))),
                     parse_real("lr_schedule", trim(item.substr(colon + 1))));
  }
  return out;
}

bool all_finite(const Tensor& t) {
  const auto d = t.data();
  return std::all_of(d.begin(), d.end(), [](double v) { return std::isfinite(v); });
}

std::string batch_ids(std::span<const SceneSample* const> batch) {
  std::string s = "[";
  for (std::size_t i = 0; i < batch.size(); ++i) s += (i ? "," : "") + batch[i]->id;
  return s + "]";
}

}  // namespace

std::string to_string(LossMode mode) {
  switch (mode) {
    case LossMode::adversarial: return "adversarial";
    case LossMode::l1: return "l1";
    case LossMode::l2: return "l2";
    case LossMode::none: return "none";
  }
  return "?";
}

LossMode parse_loss_mode(const std::string& text) {
  for (LossMode m : {LossMode::adversarial, LossMode::l1, LossMode::l2, LossMode::none})
    if (text == to_string(m)) return m;
  throw ConfigError("loss_mode must be one of adversarial, l1, l2, none (got '" + text + "')");
}

TrainConfig parse_train_config(const std::string& text) {
  TrainConfig cfg;
  std::vector<std::string> unknown;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    NetConfig& n = cfg.net;

    if (key == "loss_mode") cfg.loss_mode = parse_loss_mode(value);
    else if (key == "alpha") cfg.weights.alpha = parse_real(key, value);
    else if (key == "beta") cfg.weights.beta = parse_real(key, value);
    else if (key == "gamma") cfg.weights.gamma = parse_real(key, value);
    else if (key == "lr") cfg.lr = parse_real(key, value);
    else if (key == "lr_schedule") cfg.lr_schedule = parse_schedule(value);
    else if (key == "iterations") cfg.iterations = parse_count(key, value);
    else if (key == "batch_size") cfg.batch_size = parse_count(key, value);
    else if (key == "seed") cfg.seed = parse_count(key, value);
    else if (key == "score_thresh") cfg.score_thresh = parse_real(key, value);
    else if (key == "iou_match") cfg.iou_match = parse_real(key, value);
    else if (key == "iou_nms") cfg.iou_nms = parse_real(key, value);
    else if (key == "max_det") cfg.max_det = parse_int(key, value);
    else if (key == "grad_clip") cfg.grad_clip = parse_real(key, value);
    else if (key == "disc_lr_scale") cfg.disc_lr_scale = parse_real(key, value);
    else if (key == "train_data") cfg.train_data = value;
    else if (key == "embedding_table") cfg.embedding_table = value;
    else if (key == "checkpoint_dir") cfg.checkpoint_dir = value;
    else if (key == "checkpoint_every") cfg.checkpoint_every = parse_count(key, value);
    else if (key == "metrics_log") cfg.metrics_log = value;
    else if (key == "resume") cfg.resume = value;
    else if (key == "stem_channels") n.stem_channels = parse_int(key, value);
    else if (key == "backbone_channels") n.backbone_channels = parse_int(key, value);
    else if (key == "det_channels") n.det_channels = parse_int(key, value);
    else if (key == "offset_gain") n.offset_gain = parse_real(key, value);
    else if (key == "align_h") n.align_h = parse_int(key, value);
    else if (key == "align_w") n.align_w = parse_int(key, value);
    else if (key == "rec_hidden") n.rec_hidden = parse_int(key, value);
    else if (key == "rec_attention") n.rec_attention = parse_int(key, value);
    else if (key == "rec_char_embed") n.rec_char_embed = parse_int(key, value);
    else if (key == "max_steps") n.max_steps = parse_int(key, value);
    else if (key == "emb_head_channels") n.emb_head_channels = parse_int(key, value);
    else if (key == "emb_dim") n.emb_dim = parse_int(key, value);
    else if (key == "disc_hidden1") n.disc_hidden1 = parse_int(key, value);
    else if (key == "disc_hidden2") n.disc_hidden2 = parse_int(key, value);
    else unknown.push_back(key);
  }
  if (!unknown.empty()) {
    std::string msg = "unknown config key";
    msg += unknown.size() > 1 ? "s: " : ": ";
    for (std::size_t i = 0; i < unknown.size(); ++i) msg += (i ? ", " : "") + unknown[i];
    throw ConfigError(msg);
  }
  return cfg;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_train_config(buf.str());
}

void validate(const TrainConfig& cfg) {
  const auto& w = cfg.weights;
  if (w.alpha < 0 || w.beta < 0 || w.gamma < 0) throw ConfigError("loss weights must be >= 0");
  if (cfg.lr < 0) throw ConfigError("lr must be >= 0");
  for (std::size_t i = 0; i < cfg.lr_schedule.size(); ++i) {
    if (cfg.lr_schedule[i].second < 0) throw ConfigError("lr_schedule rates must be >= 0");
    if (i > 0 && cfg.lr_schedule[i].first <= cfg.lr_schedule[i - 1].first)
      throw ConfigError("lr_schedule iterations must be strictly increasing");
  }
  if (cfg.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(cfg.score_thresh > 0 && cfg.score_thresh < 1)) throw ConfigError("score_thresh must lie in (0,1)");
  if (!(cfg.iou_match > 0 && cfg.iou_match < 1)) throw ConfigError("iou_match must lie in (0,1)");
  if (!(cfg.iou_nms > 0 && cfg.iou_nms <= 1)) throw ConfigError("iou_nms must lie in (0,1]");
  if (cfg.max_det < 0) throw ConfigError("max_det must be >= 0");
  if (cfg.grad_clip < 0) throw ConfigError("grad_clip must be >= 0");
  if (cfg.disc_lr_scale < 0) throw ConfigError("disc_lr_scale must be >= 0");
  const NetConfig& n = cfg.net;
  for (int v : {n.stem_channels, n.backbone_channels, n.det_channels, n.align_h, n.align_w, n.rec_hidden,
                n.rec_attention, n.rec_char_embed, n.emb_head_channels, n.emb_dim, n.disc_hidden1, n.disc_hidden2})
    if (v < 1) throw ConfigError("network sizes must be >= 1");
  if (n.align_w < 2) throw ConfigError("align_w must be >= 2");
  if (n.max_steps <= static_cast<int>(kMaxWordLength)) throw ConfigError("max_steps must exceed the longest word length");
  if (!(n.offset_gain > 0)) throw ConfigError("offset_gain must be > 0");
}

double learning_rate_at(const TrainConfig& cfg, std::uint64_t iteration) {
  double lr = cfg.lr;
  for (const auto& [start, rate] : cfg.lr_schedule)
    if (start <= iteration) lr = rate;
  return lr;
}

// ---------------------------------------------------------------------------

MatchAssignment match_candidates_to_gt(std::span<const Polygon> candidates, std::span<const double> confidence,
                                       std::span<const Polygon> gts, double iou_match) {
  if (confidence.size() != candidates.size())
    throw DimensionError("match_candidates_to_gt: one confidence per candidate required");
  MatchAssignment out;
  out.match.assign(candidates.size(), kFalsePositive);
  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return confidence[a] > confidence[b]; });
  std::vector<bool> taken(gts.size(), false);
  for (std::size_t ci : order) {
    int best = kFalsePositive;
    double best_iou = -1.0;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (taken[g]) continue;
      const double iou = polygon_iou(candidates[ci], gts[g]);
      if (iou >= iou_match && iou > best_iou) {
        best = static_cast<int>(g);
        best_iou = iou;
      }
    }
    if (best != kFalsePositive) taken[static_cast<std::size_t>(best)] = true;
    out.match[ci] = best;
  }
  return out;
}

DetectionTargets detection_targets(std::span<const TextInstance> gts, std::size_t height, std::size_t width,
                                   double spatial_scale) {
  DetectionTargets t;
  t.height = height;
  t.width = width;
  const std::size_t cells = height * width;
  t.positive.assign(cells, 0.0);
  t.offsets.assign(16 * cells, 0.0);
  t.offset_mask.assign(16 * cells, 0.0);
  std::vector<Polygon> polys;
  std::vector<Box> boxes;
  for (const auto& g : gts) {
    polys.push_back(region_to_polygon(g.region, kRegionPolygonSamples));
    boxes.push_back(polygon_bounds(polys.back()));
  }
  for (std::size_t i = 0; i < height; ++i)
    for (std::size_t j = 0; j < width; ++j) {
      const Point centre{static_cast<double>(j) / spatial_scale, static_cast<double>(i) / spatial_scale};
      for (std::size_t g = 0; g < gts.size(); ++g) {
        const Box& b = boxes[g];
        if (centre.x < b.x0 || centre.x > b.x1 || centre.y < b.y0 || centre.y > b.y1) continue;
        if (!point_in_polygon(polys[g], centre)) continue;
        const std::size_t cell = i * width + j;
        t.positive[cell] = 1.0;
        const auto off = encode_region_offsets(gts[g].region, static_cast<int>(i), static_cast<int>(j), spatial_scale);
        for (std::size_t k = 0; k < 16; ++k) {
          t.offsets[k * cells + cell] = off[k];
          t.offset_mask[k * cells + cell] = 1.0;
        }
        break;
      }
    }
  return t;
}

Tensor detection_loss(Tape& tape, const DetectionOutput& det, std::span<const TextInstance> gts,
                      double spatial_scale) {
  const std::size_t h = det.score_map.dim(2), w = det.score_map.dim(3);
  DetectionTargets t = detection_targets(gts, h, w, spatial_scale);
  const Tensor prob = ops::sigmoid(tape, ops::reshape(tape, det.score_map, {h * w}));
  const Tensor bce = ops::binary_cross_entropy(tape, prob, Tensor::from({h * w}, std::move(t.positive)));
  const Tensor offsets = ops::reshape(tape, det.offset_map, {16 * h * w});
  const Tensor l1 = ops::l1_loss(tape, offsets, Tensor::from({16 * h * w}, std::move(t.offsets)),
                                 Tensor::from({16 * h * w}, std::move(t.offset_mask)));
  return ops::add(tape, bce, l1);
}

Tensor recognition_loss(Tape& tape, const Tensor& logits, const std::string& text) {
  const std::vector<int> target = encode_text(text);
  if (logits.rank() != 2 || logits.dim(0) != target.size())
    throw DimensionError("recognition_loss: '" + text + "' needs " + std::to_string(target.size()) +
                         " logit rows, got " + shape_str(logits.shape()));
  return ops::softmax_cross_entropy(tape, logits, target);
}

Tensor discriminator_loss(Tape& tape, const SpottingNet& net, const Tensor& pred, const Tensor& targets,
                          double* d_acc) {
  if (pred.shape() != targets.shape() || pred.rank() != 2)
    throw ConfigError("adversarial losses: predictions " + shape_str(pred.shape()) + " vs targets " +
                      shape_str(targets.shape()));
  const std::size_t n = pred.dim(0);
  const Tensor p_fake = net.discriminator_forward(tape, pred.detach());
  const Tensor p_real = net.discriminator_forward(tape, targets);
  if (d_acc) {
    std::size_t right = 0;
    for (double p : p_fake.data()) right += p < 0.5;
    for (double p : p_real.data()) right += p >= 0.5;
    *d_acc = n ? static_cast<double>(right) / static_cast<double>(2 * n) : 0.0;
  }
  return ops::add(tape, ops::binary_cross_entropy(tape, p_fake, Tensor::zeros({n})),
                  ops::binary_cross_entropy(tape, p_real, Tensor::full({n}, 1.0)));
}

Tensor generator_loss(Tape& tape, const SpottingNet& net, const Tensor& pred, const Tensor& targets, LossMode mode) {
  if (pred.shape() != targets.shape() || pred.rank() != 2)
    throw ConfigError("adversarial losses: predictions " + shape_str(pred.shape()) + " vs targets " +
                      shape_str(targets.shape()));
  switch (mode) {
    case LossMode::adversarial: {
      const Tensor p = net.discriminator_forward(tape, pred);
      return ops::binary_cross_entropy(tape, p, Tensor::full({pred.dim(0)}, 1.0));
    }
    case LossMode::l1: return ops::l1_loss(tape, pred, targets);
    case LossMode::l2: return ops::mse_loss(tape, pred, targets);
    case LossMode::none: break;
  }
  return Tensor::scalar(0.0);
}

AdversarialLosses adversarial_step_losses(Tape& tape, const SpottingNet& net, const Tensor& pred,
                                          const Tensor& targets, LossMode mode) {
  AdversarialLosses out;
  out.d_loss = mode == LossMode::adversarial ? discriminator_loss(tape, net, pred, targets, &out.d_acc)
                                             : Tensor::scalar(0.0);
  out.g_loss = generator_loss(tape, net, pred, targets, mode);
  return out;
}

Tensor total_loss(Tape& tape, const Tensor& l_det, const Tensor& l_rec, const Tensor& l_adv, const LossWeights& w) {
  const Tensor terms[] = {l_det, l_rec, l_adv};
  const double weights[] = {w.alpha, w.beta, w.gamma};
  return ops::weighted_sum(tape, terms, weights);
}

Tensor semantic_targets(const EmbeddingTable& table, std::span<const std::optional<std::string>> texts) {
  const std::size_t d = table.dim();
  std::vector<double> values;
  values.reserve(texts.size() * d);
  for (const auto& t : texts) {
    const SemanticVector v = t ? embed_text(table, *t) : zero_vector(d);
    values.insert(values.end(), v.values.begin(), v.values.end());
  }
  return Tensor::from({texts.size(), d}, std::move(values));
}

// ---------------------------------------------------------------------------

std::string metrics_to_json(const StepMetrics& m) {
  nlohmann::ordered_json j;
  j["iter"] = m.iter;
  j["l_det"] = m.l_det;
  j["l_rec"] = m.l_rec;
  j["l_adv"] = m.l_adv;
  j["d_loss"] = m.d_loss;
  j["d_acc"] = m.d_acc;
  j["lr"] = m.lr;
  return j.dump();
}

bool uses_semantic_branch(const TrainConfig& cfg) {
  return cfg.loss_mode != LossMode::none && cfg.weights.gamma > 0.0;
}

StepMetrics train_step(SpottingNet& net, const EmbeddingTable* table, std::span<const SceneSample* const> batch,
                       const TrainConfig& cfg, double lr, std::uint64_t iter) {
  if (batch.empty()) throw UsageError("train_step: empty batch");
  const bool semantic = uses_semantic_branch(cfg);
  if (semantic && !table) throw ConfigError("loss_mode " + to_string(cfg.loss_mode) + " needs an embedding table");
  if (semantic) net.check_embedding_table(*table);

  StepMetrics m;
  m.iter = iter;
  m.lr = lr;

  Tape tape;
  std::vector<Tensor> det_terms, rec_terms, preds;
  std::vector<std::optional<std::string>> target_texts;
  for (const SceneSample* sample : batch) {
    const Tensor features = net.backbone_forward(tape, image_to_tensor(sample->image));
    const DetectionOutput det = net.detection_forward(tape, features);
    det_terms.push_back(detection_loss(tape, det, sample->instances));

    // Ground-truth regions are always proposals; decoded detections join
    // them, matched ones with their ground truth text, the rest as false
    // positives.
    std::vector<BezierRegion> regions;
    std::vector<std::optional<std::string>> texts;
    std::vector<Polygon> gt_polys;
    for (const auto& inst : sample->instances) {
      regions.push_back(inst.region);
      texts.emplace_back(inst.text);
      gt_polys.push_back(region_to_polygon(inst.region, kRegionPolygonSamples));
    }
    const auto cands = decode_detections(det, cfg.score_thresh, cfg.iou_nms, cfg.max_det, kSpatialScale);
    if (!cands.empty()) {
      std::vector<Polygon> polys;
      std::vector<double> conf;
      for (const auto& c : cands) {
        polys.push_back(region_to_polygon(c.region, kRegionPolygonSamples));
        conf.push_back(c.confidence);
      }
      const MatchAssignment match = match_candidates_to_gt(polys, conf, gt_polys, cfg.iou_match);
      for (std::size_t i = 0; i < cands.size(); ++i) {
        regions.push_back(cands[i].region);
        const int g = match.match[i];
        if (g == kFalsePositive) {
          texts.emplace_back(std::nullopt);
          ++m.n_false_positive;
        } else {
          texts.emplace_back(sample->instances[static_cast<std::size_t>(g)].text);
        }
      }
    }
    if (regions.empty()) continue;

    const Tensor fmap = ops::reshape(tape, features, {features.dim(1), features.dim(2), features.dim(3)});
    std::vector<Tensor> aligned;
    for (std::size_t i = 0; i < regions.size(); ++i) {
      Tensor a = net.align(tape, fmap, regions[i]);
      if (texts[i]) {
        const std::vector<int> teacher = encode_text(*texts[i]);
        rec_terms.push_back(recognition_loss(tape, net.recognition_forward(tape, a, net.config().max_steps, teacher),
                                             *texts[i]));
      }
      if (semantic) {
        aligned.push_back(std::move(a));
        target_texts.push_back(texts[i]);
      }
    }
    m.n_proposals += regions.size();
    if (semantic) preds.push_back(net.word_embedding_forward(tape, ops::stack(tape, aligned)));
  }

  const auto average = [&](const std::vector<Tensor>& terms) {
    if (terms.empty()) return Tensor::scalar(0.0);
    const std::vector<double> w(terms.size(), 1.0 / static_cast<double>(terms.size()));
    return ops::weighted_sum(tape, terms, w);
  };
  const Tensor l_det = average(det_terms);
  const Tensor l_rec = average(rec_terms);
  m.l_det = l_det.item();
  m.l_rec = l_rec.item();

  const auto check = [&](const char* name, double v) {
    if (!std::isfinite(v))
      throw NumericError(std::string("non-finite ") + name + " at iteration " + std::to_string(iter) + " on batch " +
                         batch_ids(batch) + " (l_det=" + std::to_string(m.l_det) +
                         ", l_rec=" + std::to_string(m.l_rec) + ", l_adv=" + std::to_string(m.l_adv) +
                         ", d_loss=" + std::to_string(m.d_loss) + ", lr=" + std::to_string(lr) + ")");
  };
  check("l_det", m.l_det);
  check("l_rec", m.l_rec);

  Tensor l_adv = Tensor::scalar(0.0);
  ParameterSet disc = net.params().with_prefix(kDiscriminatorPrefix);
  if (semantic && !preds.empty()) {
    const Tensor pred = ops::concat_rows(tape, preds);
    if (!all_finite(pred)) check("word embedding", NAN);
    const Tensor targets = semantic_targets(*table, target_texts);
    if (cfg.loss_mode == LossMode::adversarial) {
      Tape d_tape;
      const Tensor d_loss = discriminator_loss(d_tape, net, pred, targets, &m.d_acc);
      m.d_loss = d_loss.item();
      check("d_loss", m.d_loss);
      backward(d_loss, d_tape);
      sgd_step(disc, lr * cfg.disc_lr_scale);
    }
    l_adv = generator_loss(tape, net, pred, targets, cfg.loss_mode);
    m.l_adv = l_adv.item();
    check("l_adv", m.l_adv);
  }

  const Tensor loss = total_loss(tape, l_det, l_rec, l_adv, cfg.weights);
  check("total loss", loss.item());
  backward(loss, tape);

  ParameterSet gen = net.params().without_prefix(kDiscriminatorPrefix);
  if (!semantic) gen = gen.without_prefix(kEmbeddingHeadPrefix);
  if (cfg.grad_clip > 0) clip_grad_norm(gen, cfg.grad_clip);
  sgd_step(gen, lr);
  net.params().zero_grad();
  return m;
}

std::vector<std::size_t> batch_indices(std::uint64_t seed, std::size_t dataset_size, std::size_t batch_size,
                                       std::uint64_t iteration) {
  if (dataset_size == 0) throw InputError("training set is empty");
  std::vector<std::size_t> out;
  std::uint64_t cached_epoch = UINT64_MAX;
  std::vector<std::size_t> perm(dataset_size);
  for (std::size_t b = 0; b < batch_size; ++b) {
    const std::uint64_t pos = iteration * batch_size + b;
    const std::uint64_t epoch = pos / dataset_size;
    if (epoch != cached_epoch) {
      std::iota(perm.begin(), perm.end(), 0);
      Rng rng = Rng::substream(seed, epoch);
      rng.shuffle(std::span<std::size_t>(perm));
      cached_epoch = epoch;
    }
    out.push_back(perm[pos % dataset_size]);
  }
  return out;
}

TrainResult train_loop(const TrainConfig& cfg, const StepCallback& on_step) {
  validate(cfg);
  const auto data = load_dataset(cfg.train_data);
  std::optional<EmbeddingTable> table;
  if (uses_semantic_branch(cfg) || !cfg.embedding_table.empty()) table = EmbeddingTable::load(cfg.embedding_table);
  return train_loop(cfg, data, table ? &*table : nullptr, on_step);
}

TrainResult train_loop(const TrainConfig& cfg, const std::vector<SceneSample>& data, const EmbeddingTable* table,
                       const StepCallback& on_step) {
  validate(cfg);
  if (data.empty()) throw InputError("training set is empty");
  Rng init_rng(cfg.seed);
  SpottingNet net(cfg.net, init_rng);
  if (table) net.check_embedding_table(*table);
  else if (uses_semantic_branch(cfg))
    throw ConfigError("loss_mode " + to_string(cfg.loss_mode) + " needs embedding_table");

  std::uint64_t start = 0;
  if (!cfg.resume.empty()) {
    start = read_checkpoint_info(cfg.resume).iteration;
    load_checkpoint(cfg.resume, net.params());
    if (start > cfg.iterations)
      throw ConfigError("resume checkpoint is at iteration " + std::to_string(start) + ", beyond iterations = " +
                        std::to_string(cfg.iterations));
  }

  std::filesystem::create_directories(cfg.checkpoint_dir);
  TrainResult result;
  result.metrics_log = cfg.metrics_log.empty() ? cfg.checkpoint_dir / "metrics.jsonl" : cfg.metrics_log;

  // On resume, keep the log lines of iterations already done.
  std::vector<std::string> kept;
  if (start > 0) {
    std::ifstream old(result.metrics_log);
    std::string line;
    while (std::getline(old, line)) {
      if (line.empty()) continue;
      const auto j = nlohmann::json::parse(line, nullptr, false);
      if (!j.is_discarded() && j.contains("iter") && j["iter"].get<std::uint64_t>() < start) kept.push_back(line);
    }
  }
  std::ofstream log(result.metrics_log, std::ios::trunc);
  if (!log) throw IoError("cannot write metrics log " + result.metrics_log.string());
  for (const auto& line : kept) log << line << '\n';

  std::vector<const SceneSample*> batch(cfg.batch_size);
  for (std::uint64_t it = start; it < cfg.iterations; ++it) {
    const auto idx = batch_indices(cfg.seed, data.size(), cfg.batch_size, it);
    for (std::size_t b = 0; b < idx.size(); ++b) batch[b] = &data[idx[b]];
    const StepMetrics m = train_step(net, table, batch, cfg, learning_rate_at(cfg, it), it);
    log << metrics_to_json(m) << '\n';
    log.flush();
    if (on_step) on_step(m);
    if (cfg.checkpoint_every > 0 && (it + 1) % cfg.checkpoint_every == 0) {
      char name[32];
      std::snprintf(name, sizeof name, "ckpt_%06llu.a3s", static_cast<unsigned long long>(it + 1));
      save_model(cfg.checkpoint_dir / name, net, it + 1);
    }
  }
  result.final_checkpoint = cfg.checkpoint_dir / "final.a3s";
  save_model(result.final_checkpoint, net, cfg.iterations);
  result.iterations = cfg.iterations;
  return result;
}

}  // namespace a3s
