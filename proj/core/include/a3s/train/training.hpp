#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "a3s/data/synth.hpp"
#include "a3s/embedding/table.hpp"
#include "a3s/net/spotting_net.hpp"

namespace a3s {

enum class LossMode { adversarial, l1, l2, none };

std::string to_string(LossMode mode);
/// Throws ConfigError for anything but adversarial, l1, l2 or none.
LossMode parse_loss_mode(const std::string& text);

struct LossWeights {
  double alpha = 1.0;
  double beta = 1.0;
  double gamma = 0.6;
};

struct TrainConfig {
  LossMode loss_mode = LossMode::adversarial;
  LossWeights weights;
  double lr = 1e-2;
  std::vector<std::pair<std::uint64_t, double>> lr_schedule;  // (first iteration, lr)
  std::uint64_t iterations = 1000;
  std::size_t batch_size = 1;
  std::uint64_t seed = 0;
  double score_thresh = 0.5;
  double iou_match = 0.5;
  double iou_nms = 0.5;
  int max_det = 8;          // decoded proposals per image during training
  double grad_clip = 0.0;   // joint gradient norm cap; 0 disables
  double disc_lr_scale = 1.0;  // discriminator step size relative to lr
  std::filesystem::path train_data;
  std::filesystem::path embedding_table;
  std::filesystem::path checkpoint_dir = "checkpoints";
  std::uint64_t checkpoint_every = 0;  // 0: only the final checkpoint
  std::filesystem::path metrics_log;   // default <checkpoint_dir>/metrics.jsonl
  std::filesystem::path resume;        // checkpoint to continue from
  NetConfig net;
};

/// Parses flat "key = value" lines ('#' starts a comment). Keys are the
/// TrainConfig field names; alpha/beta/gamma set the loss weights and the
/// NetConfig field names set the architecture. An unknown key raises
/// ConfigError naming it. lr_schedule is written "0:0.01,160:0.001".
TrainConfig parse_train_config(const std::string& text);
TrainConfig load_train_config(const std::filesystem::path& path);
/// Throws ConfigError when a value is out of range.
void validate(const TrainConfig& cfg);

/// Learning rate in effect at a 0-based iteration.
double learning_rate_at(const TrainConfig& cfg, std::uint64_t iteration);

// ---------------------------------------------------------------------------
// Target assignment and loss terms

inline constexpr int kFalsePositive = -1;

/// match[i] is the ground-truth index taken by candidate i, or kFalsePositive.
struct MatchAssignment {
  std::vector<int> match;
};

/// Candidates are visited in descending confidence (ties keep input order);
/// each takes the unmatched ground truth with the highest polygon IoU
/// >= iou_match, ties to the lower ground-truth index.
MatchAssignment match_candidates_to_gt(std::span<const Polygon> candidates, std::span<const double> confidence,
                                       std::span<const Polygon> gts, double iou_match);

/// Per-cell targets of the dense head. A cell is positive when its centre
/// lies inside a ground-truth polygon; it regresses the first such region.
struct DetectionTargets {
  std::size_t height = 0, width = 0;
  std::vector<double> positive;     // [h*w] in {0,1}
  std::vector<double> offsets;      // [16*h*w]
  std::vector<double> offset_mask;  // [16*h*w]
};

DetectionTargets detection_targets(std::span<const TextInstance> gts, std::size_t height, std::size_t width,
                                   double spatial_scale = kSpatialScale);

/// BCE of sigmoid(score) against cell positivity plus the mean absolute
/// offset error over positive cells.
Tensor detection_loss(Tape& tape, const DetectionOutput& det, std::span<const TextInstance> gts,
                      double spatial_scale = kSpatialScale);

/// Teacher-forced cross entropy over the characters of text and a final EOS,
/// averaged over steps. logits must have text.size()+1 rows.
Tensor recognition_loss(Tape& tape, const Tensor& logits, const std::string& text);

struct AdversarialLosses {
  Tensor d_loss;
  Tensor g_loss;
  double d_acc = 0.0;
};

/// Discriminator objective on detached predictions (label 0) and targets
/// (label 1); d_acc is the fraction of the 2n decisions on the right side of
/// 0.5.
Tensor discriminator_loss(Tape& tape, const SpottingNet& net, const Tensor& pred, const Tensor& targets,
                          double* d_acc = nullptr);
/// -log D(pred) in adversarial mode, mean |pred - target| in l1 mode and the
/// mean squared difference in l2 mode.
Tensor generator_loss(Tape& tape, const SpottingNet& net, const Tensor& pred, const Tensor& targets, LossMode mode);
/// Both losses with the current discriminator. d_loss is a zero scalar
/// outside adversarial mode. Throws ConfigError on a shape mismatch.
AdversarialLosses adversarial_step_losses(Tape& tape, const SpottingNet& net, const Tensor& pred,
                                          const Tensor& targets, LossMode mode);

Tensor total_loss(Tape& tape, const Tensor& l_det, const Tensor& l_rec, const Tensor& l_adv, const LossWeights& w);

/// Row i of the target matrix: the embedding of matched texts, zeros for
/// false positives (empty optional).
Tensor semantic_targets(const EmbeddingTable& table, std::span<const std::optional<std::string>> texts);

// ---------------------------------------------------------------------------
// Optimization

struct StepMetrics {
  std::uint64_t iter = 0;
  double l_det = 0.0;
  double l_rec = 0.0;
  double l_adv = 0.0;
  double d_loss = 0.0;
  double d_acc = 0.0;
  double lr = 0.0;
  std::size_t n_proposals = 0;
  std::size_t n_false_positive = 0;
};

std::string metrics_to_json(const StepMetrics& m);

/// True when the step trains the word-embedding head at all.
bool uses_semantic_branch(const TrainConfig& cfg);

/// One alternating update on a batch: discriminator step on detached
/// predictions, then a generator-side step on alpha*l_det + beta*l_rec +
/// gamma*l_adv. Throws NumericError naming the batch on a non-finite loss.
/// table may be null when the semantic branch is unused.
StepMetrics train_step(SpottingNet& net, const EmbeddingTable* table, std::span<const SceneSample* const> batch,
                       const TrainConfig& cfg, double lr, std::uint64_t iter);

/// Sample indices for a 0-based iteration. Epoch e visits the dataset in the
/// order of a shuffle seeded by (seed, e).
std::vector<std::size_t> batch_indices(std::uint64_t seed, std::size_t dataset_size, std::size_t batch_size,
                                       std::uint64_t iteration);

struct TrainResult {
  std::filesystem::path final_checkpoint;
  std::filesystem::path metrics_log;
  std::uint64_t iterations = 0;
};

using StepCallback = std::function<void(const StepMetrics&)>;

/// Runs cfg.iterations steps (continuing from cfg.resume if set), writing
/// ckpt_<iter>.a3s every checkpoint_every iterations and final.a3s at the end.
TrainResult train_loop(const TrainConfig& cfg, const StepCallback& on_step = {});

/// Same, on already loaded data. table may be null when the semantic branch
/// is unused.
TrainResult train_loop(const TrainConfig& cfg, const std::vector<SceneSample>& data, const EmbeddingTable* table,
                       const StepCallback& on_step = {});

}  // namespace a3s
