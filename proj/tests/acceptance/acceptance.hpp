#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "a3s/eval/evaluation.hpp"

namespace a3s::acceptance {

struct Outcome {
  bool passed = false;
  std::vector<std::string> details;  // printed under the PASS/FAIL line
};

/// Evaluates a model in both lexicon modes; appends a line to out and
/// returns false when FULL < NONE.
struct EvalPair {
  EvalResult none, full;
};
EvalPair evaluate_both(const SpottingNet& net, const std::vector<SceneSample>& test, const Lexicon& lexicon,
                       const InferenceOptions& opt);

Outcome trend_criterion(const std::filesystem::path& work_dir, std::vector<EvalPair>* evaluations);

}  // namespace a3s::acceptance
