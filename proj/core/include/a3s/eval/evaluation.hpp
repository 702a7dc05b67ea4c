#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "a3s/data/lexicon.hpp"
#include "a3s/data/synth.hpp"
#include "a3s/geometry/bezier.hpp"
#include "a3s/net/spotting_net.hpp"

namespace a3s {

struct EvalResult {
  std::string mode;
  double precision = 0.0;
  double recall = 0.0;
  double f_measure = 0.0;
  std::size_t n_matched = 0;
  std::size_t n_pred = 0;
  std::size_t n_gt = 0;
};

std::string eval_result_to_json(const EvalResult& r);

/// "none" scores raw transcriptions; "full" first corrects each one to the
/// nearest word of a lexicon holding every test word.
class LexiconMode {
 public:
  static LexiconMode none() { return LexiconMode(); }
  static LexiconMode full(Lexicon lexicon) { return LexiconMode(std::move(lexicon)); }

  bool is_full() const { return lexicon_.has_value(); }
  const Lexicon& lexicon() const { return *lexicon_; }
  std::string name() const { return is_full() ? "full" : "none"; }

 private:
  LexiconMode() = default;
  explicit LexiconMode(Lexicon lexicon) : lexicon_(std::move(lexicon)) {}
  std::optional<Lexicon> lexicon_;
};

struct SpottedWord {
  Polygon polygon;
  std::string text;
  double confidence = 0.0;
};

struct GroundTruthWord {
  Polygon polygon;
  std::string text;
};

/// Levenshtein distance with unit costs.
std::size_t edit_distance(std::string_view a, std::string_view b);

/// Nearest lexicon word to lowercase(pred); ties go to the lexicographically
/// smallest word.
std::string lexicon_correct(std::string_view pred, const Lexicon& lexicon);

/// Per image, predictions (by descending confidence) are matched one-to-one
/// to ground truth with the detection rule of match_candidates_to_gt; a
/// matched pair counts when the transcriptions agree case-insensitively,
/// after lexicon correction in full mode. Equal-confidence predictions are
/// ordered by text and then polygon so the result does not depend on input
/// order.
EvalResult evaluate_end_to_end(std::span<const std::vector<SpottedWord>> predictions,
                               std::span<const std::vector<GroundTruthWord>> ground_truth, const LexiconMode& mode,
                               double iou_match = 0.5);

std::vector<GroundTruthWord> ground_truth_words(const SceneSample& sample);

struct InferenceOptions {
  double score_thresh = 0.5;
  double iou_nms = 0.5;
  int max_det = 16;
};

std::vector<SpottedWord> spotted_words(const std::vector<DetectionCandidate>& candidates);

/// Runs the network over every sample.
std::vector<std::vector<SpottedWord>> spot_dataset(const SpottingNet& net, std::span<const SceneSample> samples,
                                                   const InferenceOptions& options = {});

}  // namespace a3s
