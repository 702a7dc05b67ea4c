#include "a3s_cli/cli.hpp"

#include <CLI11.hpp>
#include <filesystem>
#include <json.hpp>
#include <ostream>

#include "a3s/autodiff/tape.hpp"
#include "a3s/check/grad_suite.hpp"
#include "a3s/data/charset.hpp"
#include "a3s/data/synth.hpp"
#include "a3s/errors.hpp"
#include "a3s/eval/evaluation.hpp"
#include "a3s/geometry/polygon.hpp"
#include "a3s/net/model_io.hpp"
#include "a3s/train/training.hpp"
#include "a3s_cli/viz.hpp"

namespace a3s::cli {
namespace {

ImageSize parse_size(const std::string& text) {
  const auto x = text.find('x');
  try {
    if (x != std::string::npos) {
      std::size_t a = 0, b = 0;
      const int h = std::stoi(text.substr(0, x), &a);
      const int w = std::stoi(text.substr(x + 1), &b);
      if (a == x && b == text.size() - x - 1 && h > 0 && w > 0) return {h, w};
    }
  } catch (const std::exception&) {
  }
  throw UsageError("--size must look like 96x192 (height x width), got '" + text + "'");
}

struct GenDataArgs {
  std::string out, lexicon, size = "96x192";
  std::size_t n = 200;
  std::uint64_t seed = 0;
};

int gen_data(const GenDataArgs& a, std::ostream& out, std::ostream& err) {
  const Lexicon lexicon = Lexicon::load(a.lexicon);
  const ImageSize size = parse_size(a.size);
  const DatasetManifest m = generate_dataset(a.out, lexicon, a.n, size, a.seed);
  for (const auto& w : m.warnings) err << "warning: " << w << '\n';
  nlohmann::ordered_json j;
  j["dir"] = m.dir.string();
  j["n_images"] = m.ids.size();
  j["n_instances"] = m.n_instances;
  j["n_warnings"] = m.warnings.size();
  out << j.dump() << '\n';
  err << "wrote " << m.ids.size() << " images with " << m.n_instances << " words to " << m.dir.string() << '\n';
  return 0;
}

int train(const std::string& config_path, std::ostream& out, std::ostream& err) {
  const TrainConfig cfg = load_train_config(config_path);
  const auto every = std::max<std::uint64_t>(1, cfg.iterations / 20);
  const TrainResult r = train_loop(cfg, [&](const StepMetrics& m) {
    if ((m.iter + 1) % every == 0 || m.iter + 1 == cfg.iterations)
      err << "iter " << m.iter + 1 << "/" << cfg.iterations << "  l_det " << m.l_det << "  l_rec " << m.l_rec
          << "  l_adv " << m.l_adv << "  d_acc " << m.d_acc << "  lr " << m.lr << '\n';
  });
  nlohmann::ordered_json j;
  j["checkpoint"] = r.final_checkpoint.string();
  j["metrics_log"] = r.metrics_log.string();
  j["iterations"] = r.iterations;
  out << j.dump() << '\n';
  return 0;
}

struct DetectArgs {
  double score_thresh = 0.5;
  double iou_nms = 0.5;
  int max_det = 16;
};

void add_detect_flags(CLI::App* cmd, DetectArgs& d) {
  cmd->add_option("--score-thresh", d.score_thresh, "Minimum text confidence in (0,1)")->capture_default_str();
  cmd->add_option("--iou-nms", d.iou_nms, "Polygon IoU above which the weaker detection is dropped")
      ->capture_default_str();
  cmd->add_option("--max-det", d.max_det, "Maximum detections per image")->capture_default_str();
}

struct EvalArgs {
  std::string checkpoint, data, mode = "none", lexicon;
  double iou_match = 0.5;
  DetectArgs detect;
};

int eval(const EvalArgs& a, std::ostream& out, std::ostream& err) {
  if (a.mode != "none" && a.mode != "full") throw UsageError("--mode must be none or full");
  std::optional<Lexicon> lexicon;
  if (a.mode == "full") {
    if (a.lexicon.empty()) throw UsageError("--mode full needs --lexicon");
    lexicon = Lexicon::load(a.lexicon);
  }
  const auto net = load_model(a.checkpoint);
  const auto samples = load_dataset(a.data, lexicon ? &*lexicon : nullptr);
  const InferenceOptions opt{a.detect.score_thresh, a.detect.iou_nms, a.detect.max_det};
  const auto preds = spot_dataset(*net, samples, opt);
  std::vector<std::vector<GroundTruthWord>> gts;
  for (const auto& s : samples) gts.push_back(ground_truth_words(s));
  const LexiconMode mode = lexicon ? LexiconMode::full(*lexicon) : LexiconMode::none();
  const EvalResult r = evaluate_end_to_end(preds, gts, mode, a.iou_match);
  out << eval_result_to_json(r) << '\n';
  err << samples.size() << " images, " << r.n_pred << " predictions, " << r.n_gt << " words, F " << r.f_measure
      << '\n';
  return 0;
}

struct InferArgs {
  std::string checkpoint, image, viz_out;
  DetectArgs detect;
};

int infer(const InferArgs& a, std::ostream& out, std::ostream& err) {
  const auto net = load_model(a.checkpoint);
  const GrayImage image = read_png_gray(a.image);
  const auto cands = net->spot(image, a.detect.score_thresh, a.detect.iou_nms, a.detect.max_det);
  const auto words = spotted_words(cands);
  for (const auto& w : words) {
    nlohmann::ordered_json j;
    j["polygon"] = nlohmann::json::array();
    for (const auto& p : w.polygon) j["polygon"].push_back({p.x, p.y});
    j["text"] = w.text;
    j["confidence"] = w.confidence;
    out << j.dump() << '\n';
  }
  if (!a.viz_out.empty()) {
    RgbImage vis = RgbImage::from_gray(image);
    for (const auto& w : words) {
      viz::draw_polygon(vis, w.polygon, viz::kBlue);
      const Box b = polygon_bounds(w.polygon);
      char conf[16];
      std::snprintf(conf, sizeof conf, "%.2f", w.confidence);
      const int x = std::max(0, static_cast<int>(std::lround(b.x0)));
      const int y = std::max(0, static_cast<int>(std::lround(b.y0)) - kGlyphHeight - 2);
      viz::draw_text(vis, x, y, w.text + ":" + conf, viz::kBlue);
    }
    write_png_rgb(a.viz_out, vis);
  }
  err << words.size() << " detection" << (words.size() == 1 ? "" : "s") << '\n';
  return 0;
}

int grad_check(double tolerance, const std::string& fault_op, std::ostream& out, std::ostream& err) {
  detail::set_backward_fault(fault_op);
  const GradReport report = run_grad_suite(tolerance, [&](const GradResult& r) {
    char line[128];
    std::snprintf(line, sizeof line, "%-24s %.3e  %s", r.name.c_str(), r.max_rel_error, r.passed ? "ok" : "FAIL");
    out << line << '\n';
  });
  detail::set_backward_fault("");
  if (report.passed()) return 0;
  err << "grad-check failed:";
  for (const auto& name : report.failing()) err << ' ' << name;
  err << '\n';
  return 1;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Scene-text spotting with an adversarially trained word-embedding head"};
  app.name("a3s");
  app.require_subcommand(1);

  GenDataArgs gd;
  auto* gen = app.add_subcommand("gen-data", "Render a synthetic curved-text dataset");
  gen->add_option("--out", gd.out, "Output directory")->required();
  gen->add_option("--lexicon", gd.lexicon, "Word list, one word per line")->required();
  gen->add_option("--n", gd.n, "Number of images")->capture_default_str();
  gen->add_option("--size", gd.size, "Image size HxW, both divisible by 4")->capture_default_str();
  gen->add_option("--seed", gd.seed, "Random seed")->capture_default_str();

  std::string config;
  auto* tr = app.add_subcommand("train", "Train a spotting network from a key=value config file");
  tr->add_option("--config", config, "Config file")->required();

  EvalArgs ev;
  auto* evc = app.add_subcommand("eval", "End-to-end evaluation; prints a JSON report");
  evc->add_option("--checkpoint", ev.checkpoint, "Model checkpoint")->required();
  evc->add_option("--data", ev.data, "Dataset directory")->required();
  evc->add_option("--mode", ev.mode, "Lexicon protocol: none or full")->capture_default_str();
  evc->add_option("--lexicon", ev.lexicon, "Lexicon holding every test word (mode full)");
  evc->add_option("--iou-match", ev.iou_match, "Polygon IoU needed for a match")->capture_default_str();
  add_detect_flags(evc, ev.detect);

  InferArgs in;
  auto* inf = app.add_subcommand("infer", "Spot text in one image; prints one JSON line per detection");
  inf->add_option("--checkpoint", in.checkpoint, "Model checkpoint")->required();
  inf->add_option("--image", in.image, "Grayscale or RGB PNG")->required();
  inf->add_option("--viz-out", in.viz_out, "Write a PNG with polygons and text:confidence labels");
  add_detect_flags(inf, in.detect);

  double tolerance = kGradCheckTolerance;
  std::string fault_op;
  auto* gc = app.add_subcommand("grad-check", "Compare every op's gradient with central finite differences");
  gc->add_option("--tolerance", tolerance, "Maximum relative error")->capture_default_str();
  gc->add_option("--fault-op", fault_op, "Testing aid: corrupt the backward rule of this op");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) return gen_data(gd, out, err);
    if (tr->parsed()) return train(config, out, err);
    if (evc->parsed()) return eval(ev, out, err);
    if (inf->parsed()) return infer(in, out, err);
    if (gc->parsed()) return grad_check(tolerance, fault_op, out, err);
  } catch (const InvariantError& e) {
    err << "internal error: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}

}  // namespace a3s::cli
