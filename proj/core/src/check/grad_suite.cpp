#include "a3s/check/grad_suite.hpp"

#include <cmath>

#include "a3s/autodiff/ops.hpp"
#include "a3s/autodiff/params.hpp"
#include "a3s/data/charset.hpp"
#include "a3s/geometry/bezier.hpp"
#include "a3s/net/spotting_net.hpp"
#include "a3s/train/training.hpp"

namespace a3s {
namespace {

Tensor rand(Shape shape, Rng& rng, double lo = -2.0, double hi = 2.0) {
  return uniform_tensor(std::move(shape), lo, hi, rng);
}

// Keeps values out of relu / abs kinks so central differences stay smooth.
Tensor rand_away_from_zero(Shape shape, Rng& rng) {
  Tensor t = rand(std::move(shape), rng);
  for (double& v : t.mutable_data()) v = v < 0 ? v - 0.1 : v + 0.1;
  return t;
}

// Scalar probe: sum of the output weighted by fixed random coefficients.
Tensor probe(Tape& tape, const Tensor& out, std::uint64_t seed) {
  Rng rng(seed);
  const Tensor w = rand(out.shape(), rng);
  return ops::sum(tape, ops::mul(tape, out, w));
}

NetConfig tiny_net() {
  NetConfig c;
  c.stem_channels = 2;
  c.backbone_channels = 3;
  c.det_channels = 2;
  c.offset_gain = 2.0;
  c.align_h = 2;
  c.align_w = 4;
  c.rec_hidden = 4;
  c.rec_attention = 4;
  c.rec_char_embed = 3;
  c.max_steps = 13;
  c.emb_head_channels = 2;
  c.emb_dim = 4;
  c.disc_hidden1 = 5;
  c.disc_hidden2 = 3;
  return c;
}

std::vector<Tensor> params_with(const ParameterSet& ps, std::string_view prefix) {
  std::vector<Tensor> out;
  for (const auto& [name, t] : ps.with_prefix(prefix)) out.push_back(t);
  return out;
}

GradProblem unary_case(Tensor (*op)(Tape&, const Tensor&), std::uint64_t seed) {
  Rng rng(seed);
  Tensor x = rand_away_from_zero({3, 4}, rng);
  return {[=](Tape& t) { return probe(t, op(t, x), seed + 1); }, {x}};
}

GradProblem binary_case(Tensor (*op)(Tape&, const Tensor&, const Tensor&), std::uint64_t seed) {
  Rng rng(seed);
  Tensor a = rand({3, 4}, rng), b = rand({3, 4}, rng);
  return {[=](Tape& t) { return probe(t, op(t, a, b), seed + 1); }, {a, b}};
}

std::vector<GradCase> build_cases() {
  std::vector<GradCase> cases;
  cases.push_back({"conv2d", [] {
    Rng rng(11);
    Tensor x = rand({2, 3, 5, 5}, rng), w = rand({4, 3, 3, 3}, rng), b = rand({4}, rng);
    Tensor w2 = rand({2, 3, 2, 2}, rng), b2 = rand({2}, rng);
    return GradProblem{[=](Tape& t) {
                         const Tensor terms[] = {probe(t, ops::conv2d(t, x, w, b, 2, 1), 12),
                                                 probe(t, ops::conv2d(t, x, w2, b2, 1, 0), 13)};
                         const double ones[] = {1.0, 1.0};
                         return ops::weighted_sum(t, terms, ones);
                       },
                       {x, w, b, w2, b2}};
  }});
  cases.push_back({"linear", [] {
    Rng rng(21);
    Tensor x = rand({3, 4}, rng), w = rand({5, 4}, rng), b = rand({5}, rng);
    return GradProblem{[=](Tape& t) { return probe(t, ops::linear(t, x, w, b), 22); }, {x, w, b}};
  }});
  cases.push_back({"relu", [] { return unary_case(&ops::relu, 31); }});
  cases.push_back({"sigmoid", [] { return unary_case(&ops::sigmoid, 41); }});
  cases.push_back({"tanh", [] { return unary_case(&ops::tanh, 51); }});
  cases.push_back({"affine", [] {
    Rng rng(61);
    Tensor x = rand({3, 4}, rng);
    return GradProblem{[=](Tape& t) { return probe(t, ops::affine(t, x, -1.7, 0.3), 62); }, {x}};
  }});
  cases.push_back({"mean_pool_height", [] {
    Rng rng(71);
    Tensor x = rand({2, 3, 4, 5}, rng);
    return GradProblem{[=](Tape& t) { return probe(t, ops::mean_pool_height(t, x), 72); }, {x}};
  }});
  cases.push_back({"bilinear_sample", [] {
    Rng rng(81);
    Tensor f = rand({2, 4, 5}, rng);
    // Off-integer points, two of them straddling the border.
    Tensor grid = Tensor::from({6, 2}, {0.3, 0.4, 1.7, 2.2, 3.6, 2.9, 2.45, 0.55, -0.35, 1.25, 4.3, 3.4});
    return GradProblem{[=](Tape& t) { return probe(t, ops::bilinear_sample(t, f, grid), 82); }, {f, grid}};
  }});
  cases.push_back({"softmax_cross_entropy", [] {
    Rng rng(91);
    Tensor logits = rand({4, 6}, rng, -2.0, 2.0);
    return GradProblem{[=](Tape& t) {
                         const int targets[] = {0, 5, 2, 2};
                         return ops::softmax_cross_entropy(t, logits, targets);
                       },
                       {logits}};
  }});
  cases.push_back({"binary_cross_entropy", [] {
    Rng rng(101);
    Tensor p = rand({5}, rng, 0.1, 0.9);
    const Tensor labels = Tensor::from({5}, {1, 0, 0, 1, 1});
    return GradProblem{[=](Tape& t) { return ops::binary_cross_entropy(t, p, labels); }, {p}};
  }});
  cases.push_back({"add", [] { return binary_case(&ops::add, 111); }});
  cases.push_back({"sub", [] { return binary_case(&ops::sub, 121); }});
  cases.push_back({"mul", [] { return binary_case(&ops::mul, 131); }});
  cases.push_back({"sum", [] {
    Rng rng(141);
    Tensor x = rand({3, 4}, rng);
    return GradProblem{[=](Tape& t) { return ops::sum(t, x); }, {x}};
  }});
  cases.push_back({"mean", [] {
    Rng rng(151);
    Tensor x = rand({3, 4}, rng);
    return GradProblem{[=](Tape& t) { return ops::mean(t, x); }, {x}};
  }});
  cases.push_back({"weighted_sum", [] {
    Rng rng(161);
    Tensor a = rand({3}, rng), b = rand({3}, rng);
    return GradProblem{[=](Tape& t) {
                         const Tensor terms[] = {probe(t, a, 162), probe(t, b, 163)};
                         const double w[] = {0.7, -1.3};
                         return ops::weighted_sum(t, terms, w);
                       },
                       {a, b}};
  }});
  cases.push_back({"reshape", [] {
    Rng rng(171);
    Tensor x = rand({3, 4}, rng);
    return GradProblem{[=](Tape& t) { return probe(t, ops::reshape(t, x, {2, 6}), 172); }, {x}};
  }});
  cases.push_back({"transpose", [] {
    Rng rng(181);
    Tensor x = rand({3, 4}, rng);
    return GradProblem{[=](Tape& t) { return probe(t, ops::transpose(t, x), 182); }, {x}};
  }});
  cases.push_back({"concat_rows", [] {
    Rng rng(191);
    Tensor a = rand({2, 3}, rng), b = rand({1, 3}, rng);
    return GradProblem{[=](Tape& t) {
                         const Tensor parts[] = {a, b};
                         return probe(t, ops::concat_rows(t, parts), 192);
                       },
                       {a, b}};
  }});
  cases.push_back({"concat_cols", [] {
    Rng rng(201);
    Tensor a = rand({2, 3}, rng), b = rand({2, 2}, rng);
    return GradProblem{[=](Tape& t) {
                         const Tensor parts[] = {a, b};
                         return probe(t, ops::concat_cols(t, parts), 202);
                       },
                       {a, b}};
  }});
  cases.push_back({"stack", [] {
    Rng rng(211);
    Tensor a = rand({2, 3}, rng), b = rand({2, 3}, rng);
    return GradProblem{[=](Tape& t) {
                         const Tensor parts[] = {a, b};
                         return probe(t, ops::stack(t, parts), 212);
                       },
                       {a, b}};
  }});
  cases.push_back({"embedding", [] {
    Rng rng(221);
    Tensor table = rand({6, 3}, rng);
    return GradProblem{[=](Tape& t) {
                         const int idx[] = {1, 4, 1};
                         return probe(t, ops::embedding(t, table, idx), 222);
                       },
                       {table}};
  }});
  cases.push_back({"l1_loss", [] {
    Rng rng(231);
    Tensor pred = rand_away_from_zero({3, 4}, rng);
    const Tensor target = Tensor::zeros({3, 4});
    const Tensor mask = Tensor::from({3, 4}, {1, 0, 1, 1, 0, 0, 1, 1, 1, 0, 1, 0});
    return GradProblem{[=](Tape& t) {
                         const Tensor terms[] = {ops::l1_loss(t, pred, target, mask), ops::l1_loss(t, pred, target)};
                         const double w[] = {1.0, 1.0};
                         return ops::weighted_sum(t, terms, w);
                       },
                       {pred}};
  }});
  cases.push_back({"mse_loss", [] {
    Rng rng(241);
    Tensor pred = rand({3, 4}, rng), target = rand({3, 4}, rng);
    return GradProblem{[=](Tape& t) { return ops::mse_loss(t, pred, target); }, {pred, target}};
  }});
  cases.push_back({"additive_attention", [] {
    Rng rng(251);
    Tensor keys = rand({5, 4}, rng), query = rand({1, 4}, rng), v = rand({1, 4}, rng), values = rand({5, 3}, rng);
    return GradProblem{[=](Tape& t) { return probe(t, ops::additive_attention(t, keys, query, v, values), 252); },
                       {keys, query, v, values}};
  }});
  cases.push_back({"gru_cell", [] {
    Rng rng(261);
    Tensor x = rand({2, 3}, rng), h = rand({2, 4}, rng);
    Tensor w_ih = rand({12, 3}, rng), w_hh = rand({12, 4}, rng), b_ih = rand({12}, rng), b_hh = rand({12}, rng);
    return GradProblem{[=](Tape& t) { return probe(t, ops::gru_cell(t, x, h, w_ih, w_hh, b_ih, b_hh), 262); },
                       {x, h, w_ih, w_hh, b_ih, b_hh}};
  }});

  // Composites.
  cases.push_back({"bezier_align", [] {
    Rng rng(301);
    Tensor f = rand({2, 6, 10}, rng);
    const std::array<double, 16> flat = {4.1, 6.3, 13.7, 3.9, 24.2, 5.1, 33.6, 7.7,
                                         5.3, 17.9, 14.1, 15.2, 23.8, 16.4, 32.9, 19.3};
    const BezierRegion region = BezierRegion::from_flat(flat);
    return GradProblem{[=](Tape& t) { return probe(t, bezier_align(t, f, region, 3, 5, 0.25), 302); }, {f}};
  }});
  cases.push_back({"backbone", [] {
    Rng rng(311);
    auto net = std::make_shared<SpottingNet>(tiny_net(), rng);
    Tensor image = rand({1, 1, 8, 8}, rng, 0.0, 1.0);
    auto inputs = params_with(net->params(), kBackbonePrefix);
    inputs.push_back(image);
    return GradProblem{[=](Tape& t) { return probe(t, net->backbone_forward(t, image), 312); }, inputs};
  }});
  cases.push_back({"detection_loss", [] {
    Rng rng(321);
    auto net = std::make_shared<SpottingNet>(tiny_net(), rng);
    Tensor features = rand({1, 3, 4, 6}, rng, 0.0, 1.0);
    const std::array<double, 16> flat = {1.3, 2.2, 6.1, 1.7, 11.8, 2.4, 17.2, 3.1,
                                         1.6, 9.4, 6.7, 8.8, 12.1, 9.6, 17.9, 10.7};
    const std::vector<TextInstance> gts = {{BezierRegion::from_flat(flat), "cat"}};
    auto inputs = params_with(net->params(), kDetectionPrefix);
    inputs.push_back(features);
    return GradProblem{[=](Tape& t) { return detection_loss(t, net->detection_forward(t, features), gts); },
                       inputs};
  }});
  cases.push_back({"recognition", [] {
    Rng rng(331);
    auto net = std::make_shared<SpottingNet>(tiny_net(), rng);
    Tensor aligned = rand({3, 2, 4}, rng);
    auto inputs = params_with(net->params(), kRecognitionPrefix);
    inputs.push_back(aligned);
    return GradProblem{[=](Tape& t) {
                         const std::vector<int> teacher = encode_text("sun");
                         return recognition_loss(t, net->recognition_forward(t, aligned, 13, teacher), "sun");
                       },
                       inputs};
  }});
  cases.push_back({"word_embedding_head", [] {
    Rng rng(341);
    auto net = std::make_shared<SpottingNet>(tiny_net(), rng);
    Tensor aligned = rand({2, 3, 2, 4}, rng, 0.0, 1.0);
    auto inputs = params_with(net->params(), kEmbeddingHeadPrefix);
    inputs.push_back(aligned);
    return GradProblem{[=](Tape& t) { return probe(t, net->word_embedding_forward(t, aligned), 342); }, inputs};
  }});
  cases.push_back({"discriminator", [] {
    Rng rng(351);
    auto net = std::make_shared<SpottingNet>(tiny_net(), rng);
    Tensor v = rand({3, 4}, rng, 0.0, 1.0);
    auto inputs = params_with(net->params(), kDiscriminatorPrefix);
    inputs.push_back(v);
    return GradProblem{[=](Tape& t) {
                         return generator_loss(t, *net, v, Tensor::zeros({3, 4}), LossMode::adversarial);
                       },
                       inputs};
  }});
  cases.push_back({"conv_relu_linear_bce", [] {
    Rng rng(361);
    Tensor x = rand({1, 2, 4, 4}, rng), w = rand({3, 2, 4, 4}, rng), b = rand({3}, rng);
    Tensor lw = rand({2, 12}, rng), lb = rand({2}, rng);
    return GradProblem{[=](Tape& t) {
                         Tensor h = ops::relu(t, ops::conv2d(t, x, w, b, 2, 1));
                         h = ops::reshape(t, h, {1, 12});
                         Tensor p = ops::sigmoid(t, ops::linear(t, h, lw, lb));
                         return ops::binary_cross_entropy(t, ops::reshape(t, p, {2}), Tensor::from({2}, {1, 0}));
                       },
                       {x, w, b, lw, lb}};
  }});
  return cases;
}

}  // namespace

const std::vector<GradCase>& grad_cases() {
  static const std::vector<GradCase> cases = build_cases();
  return cases;
}

std::set<std::string> recorded_ops(const GradCase& c) {
  GradProblem p = c.make();
  for (auto& t : p.inputs) t.set_requires_grad(true);
  Tape tape;
  p.loss(tape);
  std::set<std::string> names;
  for (const auto& e : tape.entries()) names.insert(e.op);
  return names;
}

bool GradReport::passed() const {
  for (const auto& r : results)
    if (!r.passed) return false;
  return true;
}

std::vector<std::string> GradReport::failing() const {
  std::vector<std::string> out;
  for (const auto& r : results)
    if (!r.passed) out.push_back(r.name);
  return out;
}

GradReport run_grad_suite(double tolerance, const GradProgress& progress) {
  GradReport report;
  for (const auto& c : grad_cases()) {
    GradProblem p = c.make();
    GradResult r;
    r.name = c.name;
    r.max_rel_error = max_gradient_error(p.loss, p.inputs);
    r.passed = std::isfinite(r.max_rel_error) && r.max_rel_error < tolerance;
    if (progress) progress(r);
    report.results.push_back(std::move(r));
  }
  return report;
}

}  // namespace a3s
