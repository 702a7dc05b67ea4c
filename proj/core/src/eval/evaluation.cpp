#include "a3s/eval/evaluation.hpp"

#include <algorithm>
#include <json.hpp>
#include <numeric>

#include "a3s/data/charset.hpp"
#include "a3s/errors.hpp"
#include "a3s/train/training.hpp"

namespace a3s {

std::string eval_result_to_json(const EvalResult& r) {
  nlohmann::ordered_json j;
  j["mode"] = r.mode;
  j["precision"] = r.precision;
  j["recall"] = r.recall;
  j["f_measure"] = r.f_measure;
  j["n_matched"] = r.n_matched;
  j["n_pred"] = r.n_pred;
  j["n_gt"] = r.n_gt;
  return j.dump();
}

std::size_t edit_distance(std::string_view a, std::string_view b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  std::iota(prev.begin(), prev.end(), 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

std::string lexicon_correct(std::string_view pred, const Lexicon& lexicon) {
  const std::string p = lowercase(pred);
  if (lexicon.contains(p)) return p;
  const std::string* best = nullptr;
  std::size_t best_d = 0;
  for (const auto& w : lexicon.words()) {
    const std::size_t d = edit_distance(p, w);
    if (!best || d < best_d || (d == best_d && w < *best)) {
      best = &w;
      best_d = d;
    }
  }
  return *best;
}

EvalResult evaluate_end_to_end(std::span<const std::vector<SpottedWord>> predictions,
                               std::span<const std::vector<GroundTruthWord>> ground_truth, const LexiconMode& mode,
                               double iou_match) {
  if (predictions.size() != ground_truth.size())
    throw InputError("evaluate_end_to_end: " + std::to_string(predictions.size()) + " prediction lists for " +
                     std::to_string(ground_truth.size()) + " images");
  EvalResult r;
  r.mode = mode.name();
  for (std::size_t img = 0; img < predictions.size(); ++img) {
    std::vector<SpottedWord> preds = predictions[img];
    const auto& gts = ground_truth[img];
    std::sort(preds.begin(), preds.end(), [](const SpottedWord& a, const SpottedWord& b) {
      if (a.confidence != b.confidence) return a.confidence > b.confidence;
      if (a.text != b.text) return a.text < b.text;
      return std::lexicographical_compare(a.polygon.begin(), a.polygon.end(), b.polygon.begin(), b.polygon.end(),
                                          [](const Point& p, const Point& q) {
                                            return p.x != q.x ? p.x < q.x : p.y < q.y;
                                          });
    });
    std::vector<Polygon> pp, gp;
    std::vector<double> conf;
    for (const auto& p : preds) {
      pp.push_back(p.polygon);
      conf.push_back(p.confidence);
    }
    for (const auto& g : gts) gp.push_back(g.polygon);
    const MatchAssignment match = match_candidates_to_gt(pp, conf, gp, iou_match);
    for (std::size_t i = 0; i < preds.size(); ++i) {
      const int g = match.match[i];
      if (g == kFalsePositive) continue;
      const std::string text = mode.is_full() ? lexicon_correct(preds[i].text, mode.lexicon())
                                              : lowercase(preds[i].text);
      if (text == lowercase(gts[static_cast<std::size_t>(g)].text)) ++r.n_matched;
    }
    r.n_pred += preds.size();
    r.n_gt += gts.size();
  }
  r.precision = r.n_pred ? static_cast<double>(r.n_matched) / static_cast<double>(r.n_pred) : 0.0;
  r.recall = r.n_gt ? static_cast<double>(r.n_matched) / static_cast<double>(r.n_gt) : 0.0;
  const double s = r.precision + r.recall;
  r.f_measure = s > 0 ? 2 * r.precision * r.recall / s : 0.0;
  return r;
}

std::vector<GroundTruthWord> ground_truth_words(const SceneSample& sample) {
  std::vector<GroundTruthWord> out;
  for (const auto& inst : sample.instances)
    out.push_back({region_to_polygon(inst.region, kRegionPolygonSamples), inst.text});
  return out;
}

std::vector<SpottedWord> spotted_words(const std::vector<DetectionCandidate>& candidates) {
  std::vector<SpottedWord> out;
  for (const auto& c : candidates)
    out.push_back({region_to_polygon(c.region, kRegionPolygonSamples), c.text.value_or(""), c.confidence});
  return out;
}

std::vector<std::vector<SpottedWord>> spot_dataset(const SpottingNet& net, std::span<const SceneSample> samples,
                                                   const InferenceOptions& options) {
  std::vector<std::vector<SpottedWord>> out;
  out.reserve(samples.size());
  for (const auto& s : samples)
    out.push_back(spotted_words(net.spot(s.image, options.score_thresh, options.iou_nms, options.max_det)));
  return out;
}

}  // namespace a3s
