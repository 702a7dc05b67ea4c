#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <numeric>

#include "a3s/autodiff/ops.hpp"
#include "a3s/data/charset.hpp"
#include "a3s/errors.hpp"
#include "a3s/geometry/polygon.hpp"
#include "a3s/net/model_io.hpp"
#include "a3s/train/training.hpp"
#include "test_support.hpp"

namespace a3s {
namespace {

const Lexicon& lexicon() {
  static const Lexicon lex({"cat", "dog", "sun", "exit"});
  return lex;
}

EmbeddingTable table() {
  return EmbeddingTable(4, {"cat", "dog", "sun", "exit"}, {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0.5, 0, 0, 0.5});
}

NetConfig tiny_net() {
  NetConfig c;
  c.stem_channels = 3;
  c.backbone_channels = 4;
  c.det_channels = 3;
  c.align_h = 2;
  c.align_w = 6;
  c.rec_hidden = 6;
  c.rec_attention = 5;
  c.rec_char_embed = 3;
  c.emb_head_channels = 3;
  c.emb_dim = 4;
  c.disc_hidden1 = 6;
  c.disc_hidden2 = 4;
  return c;
}

const std::vector<SceneSample>& samples() {
  static const std::vector<SceneSample> s = [] {
    std::vector<SceneSample> out;
    for (std::uint64_t i = 0; i < 6; ++i) {
      Rng rng = Rng::substream(99, i);
      out.push_back(render_scene(lexicon(), {64, 96}, rng, sample_id(99, i)));
    }
    return out;
  }();
  return s;
}

TrainConfig tiny_config(LossMode mode = LossMode::adversarial) {
  TrainConfig cfg;
  cfg.loss_mode = mode;
  cfg.net = tiny_net();
  cfg.lr = 0.05;
  cfg.iterations = 10;
  cfg.seed = 3;
  cfg.score_thresh = 0.3;  // decoded detections as well as ground truth
  return cfg;
}

std::vector<const SceneSample*> batch_of(std::initializer_list<std::size_t> idx) {
  std::vector<const SceneSample*> b;
  for (std::size_t i : idx) b.push_back(&samples()[i]);
  return b;
}

Polygon square(double x, double y, double s) { return {{x, y}, {x + s, y}, {x + s, y + s}, {x, y + s}}; }

// ---------------------------------------------------------------------------

TEST(TrainConfig, ParsesEveryKey) {
  const TrainConfig c = parse_train_config(R"(# comment
loss_mode = l2
alpha = 2
beta=0.5
gamma = 0   # trailing comment
lr = 0.02
lr_schedule = 0:0.01, 160:0.001
iterations = 300
batch_size = 2
seed = 9
score_thresh = 0.4
iou_match = 0.6
iou_nms = 0.3
max_det = 5
grad_clip = 2.5
disc_lr_scale = 0.25
train_data = data/train
embedding_table = t.txt
checkpoint_dir = ck
checkpoint_every = 50
metrics_log = m.jsonl
resume = ck/ckpt_000050.a3s
stem_channels = 8
backbone_channels = 12
det_channels = 10
offset_gain = 3
align_h = 4
align_w = 16
rec_hidden = 20
rec_attention = 18
rec_char_embed = 6
max_steps = 14
emb_head_channels = 7
emb_dim = 32
disc_hidden1 = 30
disc_hidden2 = 9
)");
  EXPECT_EQ(c.loss_mode, LossMode::l2);
  EXPECT_EQ(c.weights.alpha, 2.0);
  EXPECT_EQ(c.weights.beta, 0.5);
  EXPECT_EQ(c.weights.gamma, 0.0);
  ASSERT_EQ(c.lr_schedule.size(), 2u);
  EXPECT_EQ(c.lr_schedule[1].first, 160u);
  EXPECT_EQ(c.lr_schedule[1].second, 0.001);
  EXPECT_EQ(c.iterations, 300u);
  EXPECT_EQ(c.batch_size, 2u);
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.max_det, 5);
  EXPECT_EQ(c.grad_clip, 2.5);
  EXPECT_EQ(c.disc_lr_scale, 0.25);
  EXPECT_EQ(c.train_data, "data/train");
  EXPECT_EQ(c.resume, "ck/ckpt_000050.a3s");
  EXPECT_EQ(c.checkpoint_every, 50u);
  EXPECT_EQ(c.net.offset_gain, 3.0);
  EXPECT_EQ(c.net.align_w, 16);
  EXPECT_EQ(c.net.disc_hidden2, 9);
  EXPECT_NO_THROW(validate(c));
}

TEST(TrainConfig, DefaultsAndErrors) {
  const TrainConfig d = parse_train_config("");
  EXPECT_EQ(d.weights.alpha, 1.0);
  EXPECT_EQ(d.weights.beta, 1.0);
  EXPECT_EQ(d.weights.gamma, 0.6);
  EXPECT_EQ(d.lr, 1e-2);
  try {
    parse_train_config("lr = 0.1\nlearning_rate = 3\nwarmup = 2\n");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("learning_rate"), std::string::npos);
    EXPECT_NE(what.find("warmup"), std::string::npos);
  }
  EXPECT_THROW(parse_train_config("lr = fast"), ConfigError);
  EXPECT_THROW(parse_train_config("iterations = -3"), ConfigError);
  EXPECT_THROW(parse_train_config("loss_mode = l3"), ConfigError);
  EXPECT_THROW(parse_train_config("just words"), ConfigError);
  EXPECT_THROW(parse_train_config("lr_schedule = 0-0.1"), ConfigError);
  EXPECT_THROW(load_train_config("/nonexistent/a3s.cfg"), IoError);

  auto invalid = [](const std::string& text) { EXPECT_THROW(validate(parse_train_config(text)), ConfigError) << text; };
  invalid("gamma = -1");
  invalid("lr_schedule = 10:0.1,10:0.01");
  invalid("lr_schedule = 10:0.1,5:0.01");
  invalid("batch_size = 0");
  invalid("max_steps = 12");
  invalid("align_w = 1");
  invalid("iou_match = 1.5");
}

TEST(TrainConfig, LossModeNames) {
  for (LossMode m : {LossMode::adversarial, LossMode::l1, LossMode::l2, LossMode::none})
    EXPECT_EQ(parse_loss_mode(to_string(m)), m);
}

TEST(LearningRate, ScheduleSwitchesExactly) {
  const TrainConfig c = parse_train_config("lr = 0.5\nlr_schedule = 0:0.01,160:0.001");
  EXPECT_EQ(learning_rate_at(c, 0), 0.01);
  EXPECT_EQ(learning_rate_at(c, 159), 0.01);
  EXPECT_EQ(learning_rate_at(c, 160), 0.001);
  EXPECT_EQ(learning_rate_at(c, 100000), 0.001);
  EXPECT_EQ(learning_rate_at(parse_train_config("lr = 0.5"), 7), 0.5);
}

// ---------------------------------------------------------------------------

TEST(Matching, ExactAndEmptyCases) {
  const Polygon g[] = {square(0, 0, 10), square(20, 0, 10)};
  const Polygon c[] = {square(20, 0, 10)};
  const double conf[] = {0.9};
  EXPECT_EQ(match_candidates_to_gt(c, conf, g, 0.5).match, (std::vector<int>{1}));
  EXPECT_EQ(match_candidates_to_gt(c, conf, std::span<const Polygon>{}, 0.5).match,
            (std::vector<int>{kFalsePositive}));
  const Polygon far[] = {square(100, 100, 5)};
  EXPECT_EQ(match_candidates_to_gt(far, conf, g, 0.5).match, (std::vector<int>{kFalsePositive}));
}

// Every injective assignment meeting the threshold is enumerated; greedy
// matching is the lexicographic maximum over candidates taken in confidence
// order, each scored by (iou, lower gt index), a false positive scoring least.
std::vector<int> brute_force_match(const std::vector<std::vector<double>>& iou, const std::vector<double>& conf,
                                   double thr) {
  const std::size_t n = iou.size(), m = n ? iou[0].size() : 0;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return conf[a] > conf[b]; });
  std::vector<int> cur(n), best;
  std::vector<std::pair<double, double>> best_key;
  std::function<void(std::size_t, std::vector<bool>&)> rec = [&](std::size_t k, std::vector<bool>& used) {
    if (k == n) {
      std::vector<std::pair<double, double>> key;
      for (std::size_t ci : order)
        key.push_back(cur[ci] < 0 ? std::pair{-1.0, 0.0} : std::pair{iou[ci][cur[ci]], -double(cur[ci])});
      if (best.empty() || key > best_key) {
        best = cur;
        best_key = key;
      }
      return;
    }
    cur[k] = kFalsePositive;
    rec(k + 1, used);
    for (std::size_t g = 0; g < m; ++g) {
      if (used[g] || iou[k][g] < thr) continue;
      used[g] = true;
      cur[k] = static_cast<int>(g);
      rec(k + 1, used);
      used[g] = false;
    }
  };
  std::vector<bool> used(m, false);
  rec(0, used);
  return best;
}

TEST(Matching, EqualsExhaustiveOracle) {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.bounded(4), m = rng.bounded(4);
    std::vector<Polygon> gts, cands;
    for (std::size_t g = 0; g < m; ++g) gts.push_back(square(rng.uniform(0, 12), rng.uniform(0, 6), 8));
    std::vector<double> conf;
    for (std::size_t c = 0; c < n; ++c) {
      cands.push_back(square(rng.uniform(0, 12), rng.uniform(0, 6), rng.uniform(6, 10)));
      conf.push_back(std::round(rng.uniform(0, 4)) / 4);  // ties on purpose
    }
    std::vector<std::vector<double>> iou(n, std::vector<double>(m));
    for (std::size_t c = 0; c < n; ++c)
      for (std::size_t g = 0; g < m; ++g) iou[c][g] = polygon_iou(cands[c], gts[g]);
    const double thr = 0.3;
    const auto got = match_candidates_to_gt(cands, conf, gts, thr).match;
    EXPECT_EQ(got, brute_force_match(iou, conf, thr)) << "trial " << trial;
    std::vector<int> seen;
    for (int g : got)
      if (g >= 0) seen.push_back(g);
    std::sort(seen.begin(), seen.end());
    EXPECT_EQ(std::adjacent_find(seen.begin(), seen.end()), seen.end());
  }
}

// ---------------------------------------------------------------------------

TEST(DetectionLoss, NoTextAndStrongNegativesIsNearZero) {
  DetectionOutput d{Tensor::full({1, 1, 4, 6}, -30.0), Tensor::full({1, 16, 4, 6}, 3.0)};
  Tape t;
  EXPECT_NEAR(detection_loss(t, d, {}).item(), 0.0, 1e-6);
}

TEST(DetectionLoss, MatchesHandComposedOracle) {
  Rng rng(6);
  const std::size_t h = 16, w = 24;
  const SceneSample& s = samples()[0];
  ASSERT_FALSE(s.instances.empty());
  DetectionOutput d{uniform_tensor({1, 1, h, w}, -3, 3, rng), uniform_tensor({1, 16, h, w}, -5, 5, rng)};
  Tape t;
  const double got = detection_loss(t, d, s.instances).item();

  double bce = 0.0, mae = 0.0;
  std::size_t n_mae = 0;
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) {
      const Point centre{4.0 * j, 4.0 * i};
      int owner = -1;
      for (std::size_t g = 0; g < s.instances.size() && owner < 0; ++g)
        if (point_in_polygon(region_to_polygon(s.instances[g].region, 16), centre)) owner = static_cast<int>(g);
      const double p = 1.0 / (1.0 + std::exp(-d.score_map.at(i * w + j)));
      bce += owner >= 0 ? -std::log(p) : -std::log(1 - p);
      if (owner < 0) continue;
      const auto target = encode_region_offsets(s.instances[owner].region, int(i), int(j), 0.25);
      for (std::size_t k = 0; k < 16; ++k) {
        mae += std::abs(d.offset_map.at((k * h + i) * w + j) - target[k]);
        ++n_mae;
      }
    }
  ASSERT_GT(n_mae, 0u);
  EXPECT_NEAR(got, bce / (h * w) + mae / n_mae, 1e-12);

  // Perfect offsets leave only the classification term.
  const DetectionTargets tg = detection_targets(s.instances, h, w);
  DetectionOutput perfect{d.score_map, Tensor::from({1, 16, h, w}, tg.offsets)};
  Tape t2;
  EXPECT_NEAR(detection_loss(t2, perfect, s.instances).item(), bce / (h * w), 1e-12);
}

TEST(RecognitionLoss, KnownValuesAndOracle) {
  Tape t;
  const auto target = encode_text("cat");
  Tensor forced = Tensor::zeros({4, static_cast<std::size_t>(kNumClasses)});
  for (std::size_t i = 0; i < 4; ++i) forced.mutable_data()[i * kNumClasses + target[i]] = 1000.0;
  EXPECT_NEAR(recognition_loss(t, forced, "cat").item(), 0.0, 1e-12);
  EXPECT_NEAR(recognition_loss(t, Tensor::zeros({4, 37}), "cat").item(), std::log(37.0), 1e-12);
  EXPECT_THROW(recognition_loss(t, Tensor::zeros({3, 37}), "cat"), DimensionError);

  Rng rng(7);
  const Tensor r = uniform_tensor({4, 37}, -3, 3, rng);
  double oracle = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    double z = 0.0;
    for (std::size_t k = 0; k < 37; ++k) z += std::exp(r.at(i * 37 + k));
    oracle += std::log(z) - r.at(i * 37 + target[i]);
  }
  EXPECT_NEAR(recognition_loss(t, r, "cat").item(), oracle / 4, 1e-12);
}

TEST(AdversarialLosses, HalfDiscriminatorAndNormModes) {
  Rng rng(8);
  SpottingNet net(tiny_net(), rng);
  for (const char* name : {"disc/fc3/weight", "disc/fc3/bias"})
    for (double& v : net.params().at(name).mutable_data()) v = 0.0;
  const Tensor pred = uniform_tensor({3, 4}, 0, 1, rng), targets = uniform_tensor({3, 4}, 0, 1, rng);
  Tape t;
  const AdversarialLosses a = adversarial_step_losses(t, net, pred, targets, LossMode::adversarial);
  EXPECT_NEAR(a.d_loss.item(), 2 * std::log(2.0), 1e-12);
  EXPECT_NEAR(a.g_loss.item(), std::log(2.0), 1e-12);
  EXPECT_EQ(a.d_acc, 0.5);  // 0.5 counts as "real"

  EXPECT_EQ(adversarial_step_losses(t, net, pred, pred, LossMode::l2).g_loss.item(), 0.0);
  EXPECT_EQ(adversarial_step_losses(t, net, pred, pred, LossMode::l2).d_loss.item(), 0.0);
  Tensor shifted = pred.clone();
  for (std::size_t i = 0; i < shifted.numel(); ++i) shifted.mutable_data()[i] += i % 2 ? 1.0 : -1.0;
  EXPECT_NEAR(adversarial_step_losses(t, net, shifted, pred, LossMode::l1).g_loss.item(), 1.0, 1e-15);
  EXPECT_THROW(adversarial_step_losses(t, net, pred, Tensor::zeros({2, 4}), LossMode::adversarial), ConfigError);
  EXPECT_THROW(adversarial_step_losses(t, net, pred, Tensor::zeros({3, 5}), LossMode::l1), ConfigError);
}

TEST(AdversarialLosses, DiscriminatorGradientStaysInDiscriminator) {
  Rng rng(9);
  SpottingNet net(tiny_net(), rng);
  Tape t;
  const Tensor aligned = uniform_tensor({2, 4, 2, 6}, -1, 1, rng);
  const Tensor pred = net.word_embedding_forward(t, aligned);
  double acc = 0;
  const Tensor d = discriminator_loss(t, net, pred, uniform_tensor({2, 4}, 0, 1, rng), &acc);
  backward(d, t);
  for (const auto& [name, p] : net.params()) {
    const bool disc = name.rfind("disc/", 0) == 0;
    double mag = 0;
    for (double g : p.grad()) mag += std::abs(g);
    if (disc) EXPECT_GT(mag, 0.0) << name;
    else EXPECT_EQ(mag, 0.0) << name;
  }
}

TEST(TotalLoss, WeightedSumIsExact) {
  Tape t;
  const Tensor a = Tensor::scalar(2), b = Tensor::scalar(3), c = Tensor::scalar(5);
  EXPECT_EQ(total_loss(t, a, b, c, LossWeights{}).item(), 8.0);
  EXPECT_EQ(total_loss(t, a, b, c, LossWeights{1, 1, 0}).item(), 5.0);
  Rng rng(10);
  for (int i = 0; i < 100; ++i) {
    const LossWeights w{rng.uniform(), rng.uniform(), rng.uniform()};
    const double x = rng.uniform(0, 9), y = rng.uniform(0, 9), z = rng.uniform(0, 9);
    const double one = total_loss(t, Tensor::scalar(x), Tensor::scalar(y), Tensor::scalar(z), w).item();
    const double two = total_loss(t, Tensor::scalar(2 * x), Tensor::scalar(2 * y), Tensor::scalar(2 * z), w).item();
    EXPECT_EQ(two, 2 * one);
    EXPECT_NEAR(one, w.alpha * x + w.beta * y + w.gamma * z, 1e-12);
  }
}

TEST(SemanticTargets, FalsePositivesAreZeroAndMatchesEmbed) {
  const EmbeddingTable tb = table();
  const std::optional<std::string> texts[] = {std::string("dog"), std::nullopt, std::string("exit")};
  const Tensor t = semantic_targets(tb, texts);
  ASSERT_EQ(t.shape(), (Shape{3, 4}));
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_EQ(t.at(k), embed_text(tb, "dog").values[k]);
    EXPECT_EQ(t.at(4 + k), 0.0);
    EXPECT_EQ(t.at(8 + k), embed_text(tb, "exit").values[k]);
  }
}

// ---------------------------------------------------------------------------

TEST(TrainStep, BaselineModesFreezeSemanticBranch) {
  const EmbeddingTable tb = table();
  for (const auto& [mode, gamma] : {std::pair{LossMode::none, 0.6}, std::pair{LossMode::adversarial, 0.0},
                                    std::pair{LossMode::l2, 0.0}}) {
    TrainConfig cfg = tiny_config(mode);
    cfg.weights.gamma = gamma;
    Rng rng(11);
    SpottingNet net(cfg.net, rng);
    const auto disc0 = net.params().with_prefix(kDiscriminatorPrefix).checksum();
    const auto emb0 = net.params().with_prefix(kEmbeddingHeadPrefix).checksum();
    const auto rest0 = net.params().with_prefix(kBackbonePrefix).checksum();
    for (std::uint64_t it = 0; it < 5; ++it) {
      const auto b = batch_of({it % 6});
      const StepMetrics m = train_step(net, &tb, b, cfg, 0.05, it);
      EXPECT_EQ(m.l_adv, 0.0);
      EXPECT_EQ(m.d_loss, 0.0);
    }
    EXPECT_EQ(net.params().with_prefix(kDiscriminatorPrefix).checksum(), disc0) << to_string(mode);
    EXPECT_EQ(net.params().with_prefix(kEmbeddingHeadPrefix).checksum(), emb0) << to_string(mode);
    EXPECT_NE(net.params().with_prefix(kBackbonePrefix).checksum(), rest0);
  }
}

TEST(TrainStep, ZeroLearningRateChangesNothing) {
  const EmbeddingTable tb = table();
  const TrainConfig cfg = tiny_config();
  Rng rng(12);
  SpottingNet net(cfg.net, rng);
  const auto before = net.params().checksum();
  const auto b = batch_of({0, 1});
  const StepMetrics m = train_step(net, &tb, b, cfg, 0.0, 0);
  EXPECT_EQ(net.params().checksum(), before);
  EXPECT_GT(m.l_adv, 0.0);
  EXPECT_GT(m.d_loss, 0.0);
}

TEST(TrainStep, DiscriminatorStepScalesWithDiscLrScale) {
  const EmbeddingTable tb = table();
  const auto b = batch_of({3});
  std::vector<std::vector<double>> deltas;
  for (double scale : {0.0, 0.5, 1.0}) {
    TrainConfig cfg = tiny_config();
    cfg.disc_lr_scale = scale;
    Rng rng(14);
    SpottingNet net(cfg.net, rng);
    const Tensor before = net.params().at("disc/fc1/weight").clone();
    const auto gen0 = net.params().with_prefix(kEmbeddingHeadPrefix).checksum();
    train_step(net, &tb, b, cfg, 0.05, 0);
    EXPECT_NE(net.params().with_prefix(kEmbeddingHeadPrefix).checksum(), gen0);
    std::vector<double> d;
    for (std::size_t i = 0; i < before.numel(); ++i) d.push_back(net.params().at("disc/fc1/weight").at(i) - before.at(i));
    deltas.push_back(d);
  }
  double moved = 0.0;
  for (std::size_t i = 0; i < deltas[0].size(); ++i) {
    EXPECT_EQ(deltas[0][i], 0.0);
    EXPECT_NEAR(deltas[1][i], 0.5 * deltas[2][i], 1e-14);
    moved += std::abs(deltas[2][i]);
  }
  EXPECT_GT(moved, 0.0);
}

TEST(TrainStep, AdversarialModeMovesEveryGroup) {
  const EmbeddingTable tb = table();
  const TrainConfig cfg = tiny_config();
  Rng rng(13);
  SpottingNet net(cfg.net, rng);
  std::vector<std::uint64_t> before;
  const std::string_view groups[] = {kBackbonePrefix, kDetectionPrefix, kRecognitionPrefix, kEmbeddingHeadPrefix,
                                     kDiscriminatorPrefix};
  for (auto g : groups) before.push_back(net.params().with_prefix(g).checksum());
  const auto b = batch_of({2});
  const StepMetrics m = train_step(net, &tb, b, cfg, 0.05, 0);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NE(net.params().with_prefix(groups[i]).checksum(), before[i]) << groups[i];
  EXPECT_GE(m.n_proposals, samples()[2].instances.size());
  EXPECT_GE(m.d_acc, 0.0);
  EXPECT_LE(m.d_acc, 1.0);
  for (const auto& [name, p] : net.params())
    for (double g : p.grad()) ASSERT_EQ(g, 0.0) << name;
}

TEST(TrainStep, SemanticModesNeedATable) {
  const TrainConfig cfg = tiny_config(LossMode::l1);
  Rng rng(14);
  SpottingNet net(cfg.net, rng);
  const auto b = batch_of({0});
  EXPECT_THROW(train_step(net, nullptr, b, cfg, 0.1, 0), ConfigError);
  const EmbeddingTable wrong(3, {"cat"}, {1, 2, 3});
  EXPECT_THROW(train_step(net, &wrong, b, cfg, 0.1, 0), ConfigError);
  EXPECT_THROW(train_step(net, nullptr, std::span<const SceneSample* const>{}, tiny_config(LossMode::none), 0.1, 0),
               UsageError);
}

TEST(TrainStep, NonFiniteLossNamesTheBatch) {
  const EmbeddingTable tb = table();
  const TrainConfig cfg = tiny_config();
  Rng rng(15);
  SpottingNet net(cfg.net, rng);
  net.params().at("det/score2/bias").mutable_data()[0] = NAN;
  const auto b = batch_of({4, 1});
  try {
    train_step(net, &tb, b, cfg, 0.1, 17);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find(samples()[4].id), std::string::npos) << what;
    EXPECT_NE(what.find(samples()[1].id), std::string::npos) << what;
    EXPECT_NE(what.find("iteration 17"), std::string::npos) << what;
  }
}

TEST(BatchIndices, EpochsArePermutations) {
  std::vector<std::size_t> seen;
  for (std::uint64_t it = 0; it < 5; ++it)
    for (std::size_t i : batch_indices(4, 10, 2, it)) seen.push_back(i);
  std::vector<std::size_t> sorted = seen;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(sorted[i], i);
  EXPECT_EQ(batch_indices(4, 10, 2, 3), batch_indices(4, 10, 2, 3));
  std::vector<std::size_t> next;
  for (std::uint64_t it = 5; it < 10; ++it)
    for (std::size_t i : batch_indices(4, 10, 2, it)) next.push_back(i);
  EXPECT_NE(next, seen);
  EXPECT_THROW(batch_indices(4, 0, 1, 0), InputError);
}

// ---------------------------------------------------------------------------

TEST(TrainLoop, SmokeRunWritesCheckpointsAndLog) {
  testing::TempDir dir;
  const EmbeddingTable tb = table();
  TrainConfig cfg = tiny_config();
  cfg.checkpoint_dir = dir / "ck";
  cfg.checkpoint_every = 5;
  std::size_t calls = 0;
  const TrainResult r = train_loop(cfg, samples(), &tb, [&](const StepMetrics&) { ++calls; });
  EXPECT_EQ(calls, 10u);
  EXPECT_EQ(r.iterations, 10u);
  EXPECT_TRUE(std::filesystem::exists(r.final_checkpoint));
  EXPECT_TRUE(std::filesystem::exists(dir / "ck" / "ckpt_000005.a3s"));
  EXPECT_TRUE(std::filesystem::exists(dir / "ck" / "ckpt_000010.a3s"));
  EXPECT_EQ(read_checkpoint_info(dir / "ck" / "ckpt_000005.a3s").iteration, 5u);
  const std::string log = testing::read_file(r.metrics_log);
  EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 10);
  EXPECT_EQ(log.rfind("{\"iter\":0,\"l_det\":", 0), 0u);
  EXPECT_NE(log.find("\"d_acc\":"), std::string::npos);
}

TEST(TrainLoop, LoggedLearningRateFollowsSchedule) {
  testing::TempDir dir;
  TrainConfig cfg = tiny_config(LossMode::none);
  cfg.iterations = 162;
  cfg.score_thresh = 0.5;
  cfg.lr_schedule = {{0, 1e-2}, {160, 1e-3}};
  cfg.checkpoint_dir = dir.path();
  std::vector<double> lrs;
  train_loop(cfg, samples(), nullptr, [&](const StepMetrics& m) { lrs.push_back(m.lr); });
  ASSERT_EQ(lrs.size(), 162u);
  EXPECT_EQ(lrs[159], 1e-2);
  EXPECT_EQ(lrs[160], 1e-3);
}

TEST(TrainLoop, SameSeedSameLog) {
  testing::TempDir dir;
  const EmbeddingTable tb = table();
  TrainConfig cfg = tiny_config();
  cfg.iterations = 50;
  cfg.checkpoint_dir = dir / "a";
  const TrainResult a = train_loop(cfg, samples(), &tb);
  cfg.checkpoint_dir = dir / "b";
  const TrainResult b = train_loop(cfg, samples(), &tb);
  EXPECT_EQ(testing::read_file(a.metrics_log), testing::read_file(b.metrics_log));
  EXPECT_EQ(testing::read_file(a.final_checkpoint), testing::read_file(b.final_checkpoint));
  cfg.seed = 4;
  cfg.checkpoint_dir = dir / "c";
  const TrainResult c = train_loop(cfg, samples(), &tb);
  EXPECT_NE(testing::read_file(a.metrics_log), testing::read_file(c.metrics_log));
}

TEST(TrainLoop, ResumeMatchesUninterruptedRun) {
  testing::TempDir dir;
  const EmbeddingTable tb = table();
  TrainConfig full = tiny_config();
  full.checkpoint_dir = dir / "full";
  const TrainResult a = train_loop(full, samples(), &tb);

  TrainConfig first = tiny_config();
  first.iterations = 5;
  first.checkpoint_dir = dir / "split";
  const TrainResult half = train_loop(first, samples(), &tb);
  TrainConfig second = tiny_config();
  second.checkpoint_dir = dir / "split";
  second.resume = half.final_checkpoint;
  const TrainResult b = train_loop(second, samples(), &tb);

  EXPECT_EQ(load_model(a.final_checkpoint)->params().checksum(), load_model(b.final_checkpoint)->params().checksum());
  EXPECT_EQ(testing::read_file(a.metrics_log), testing::read_file(b.metrics_log));
  EXPECT_EQ(read_checkpoint_info(b.final_checkpoint).iteration, 10u);
}

TEST(TrainLoop, IncompatibleResumeIsLoadError) {
  testing::TempDir dir;
  TrainConfig cfg = tiny_config(LossMode::none);
  cfg.iterations = 2;
  cfg.checkpoint_dir = dir / "a";
  const TrainResult r = train_loop(cfg, samples(), nullptr);
  TrainConfig other = cfg;
  other.net.rec_hidden = 7;
  other.checkpoint_dir = dir / "b";
  other.resume = r.final_checkpoint;
  other.iterations = 4;
  EXPECT_THROW(train_loop(other, samples(), nullptr), LoadError);
  cfg.loss_mode = LossMode::adversarial;
  EXPECT_THROW(train_loop(cfg, samples(), nullptr), ConfigError);
}

}  // namespace
}  // namespace a3s
