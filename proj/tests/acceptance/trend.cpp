// Ablation trend: none / l1 / l2 / adversarial, three seeds each, on a
// 200/50 synthetic split.

#include <algorithm>
#include <chrono>
#include <iostream>
#include <map>

#include "a3s/data/synth.hpp"
#include "a3s/embedding/table.hpp"
#include "a3s/net/model_io.hpp"
#include "a3s/train/training.hpp"
#include "acceptance.hpp"
#include "test_support.hpp"

namespace a3s::acceptance {
namespace {

constexpr std::size_t kTrain = 200, kTest = 50;
constexpr ImageSize kSize{96, 192};
constexpr std::uint64_t kTrainSeed = 1, kTestSeed = 2;
constexpr std::uint64_t kIterations = 3000;
constexpr double kTimeLimit = 45 * 60;

TrainConfig recipe(LossMode mode, std::uint64_t seed) {
  TrainConfig cfg;
  cfg.loss_mode = mode;
  cfg.weights = {1.0, 1.0, 0.6};
  cfg.lr = 0.1;
  cfg.lr_schedule = {{0, 0.1}, {kIterations * 4 / 5, 0.01}};
  cfg.iterations = kIterations;
  cfg.grad_clip = 5.0;
  cfg.disc_lr_scale = 0.1;
  cfg.seed = seed;
  cfg.net.stem_channels = 16;
  cfg.net.backbone_channels = 32;
  cfg.net.det_channels = 32;
  cfg.net.emb_head_channels = 32;
  cfg.net.emb_dim = 32;
  return cfg;
}

}  // namespace

Outcome trend_criterion(const std::filesystem::path& work, std::vector<EvalPair>* evaluations) {
  using Clock = std::chrono::steady_clock;
  const auto t0 = Clock::now();
  const auto elapsed = [&] { return std::chrono::duration<double>(Clock::now() - t0).count(); };
  Outcome o;

  const Lexicon lexicon = Lexicon::load(testing::data_dir() / "lexicon.txt");
  const EmbeddingTable table = EmbeddingTable::load(testing::data_dir() / "fixture_table.txt");
  generate_dataset(work / "train", lexicon, kTrain, kSize, kTrainSeed);
  generate_dataset(work / "test", lexicon, kTest, kSize, kTestSeed);
  const auto train = load_dataset(work / "train", &lexicon);
  const auto test = load_dataset(work / "test", &lexicon);

  const std::vector<LossMode> modes = {LossMode::none, LossMode::l1, LossMode::l2, LossMode::adversarial};
  std::map<LossMode, double> mean_f;
  for (LossMode mode : modes) {
    for (std::uint64_t seed : {1, 2, 3}) {
      TrainConfig cfg = recipe(mode, seed);
      cfg.checkpoint_dir = work / (to_string(mode) + "_seed" + std::to_string(seed));
      const auto start = elapsed();
      const TrainResult r = train_loop(cfg, train, &table);
      const auto net = load_model(r.final_checkpoint);
      const EvalPair e = evaluate_both(*net, test, lexicon, {});
      evaluations->push_back(e);
      mean_f[mode] += e.none.f_measure / 3.0;
      char line[200];
      std::snprintf(line, sizeof line, "%-11s seed %llu: None F %.4f (P %.3f R %.3f, %zu/%zu/%zu)  Full F %.4f  %.0f s",
                    to_string(mode).c_str(), static_cast<unsigned long long>(seed), e.none.f_measure,
                    e.none.precision, e.none.recall, e.none.n_matched, e.none.n_pred, e.none.n_gt,
                    e.full.f_measure, elapsed() - start);
      o.details.push_back(line);
      std::cerr << line << std::endl;
    }
  }

  std::vector<LossMode> order = modes;
  std::stable_sort(order.begin(), order.end(), [&](LossMode a, LossMode b) { return mean_f[a] > mean_f[b]; });
  std::string ranking = "ordering by mean None F:";
  for (std::size_t i = 0; i < order.size(); ++i) {
    char part[64];
    std::snprintf(part, sizeof part, "%s %s %.4f", i ? " >" : "", to_string(order[i]).c_str(), mean_f[order[i]]);
    ranking += part;
  }
  o.details.push_back(ranking);
  o.details.push_back("reference ordering: adversarial > l2 > l1 > none");
  const double secs = elapsed();
  char summary[160];
  std::snprintf(summary, sizeof summary, "adversarial %.4f vs none %.4f, total %.0f s (limit %.0f s)",
                mean_f[LossMode::adversarial], mean_f[LossMode::none], secs, kTimeLimit);
  o.details.push_back(summary);
  o.passed = mean_f[LossMode::adversarial] >= mean_f[LossMode::none] && secs < kTimeLimit;
  return o;
}

}  // namespace a3s::acceptance
