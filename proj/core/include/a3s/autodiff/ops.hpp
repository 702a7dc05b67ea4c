#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "a3s/autodiff/tape.hpp"
#include "a3s/autodiff/tensor.hpp"

// Differentiable operations. Each op records itself on the tape only when at
// least one input requires a gradient; otherwise it is a plain computation.
namespace a3s::ops {

/// Cross-correlation. input [n,c_in,h,w], weight [c_out,c_in,k,k], bias [c_out].
/// Output spatial size (h + 2*pad - k)/stride + 1 must divide exactly.
Tensor conv2d(Tape& tape, const Tensor& input, const Tensor& weight, const Tensor& bias,
              int stride, int pad);

/// input [n,p], weight [q,p], bias [q] (bias may be undefined) -> [n,q].
Tensor linear(Tape& tape, const Tensor& input, const Tensor& weight, const Tensor& bias);

Tensor relu(Tape& tape, const Tensor& x);
Tensor sigmoid(Tape& tape, const Tensor& x);
Tensor tanh(Tape& tape, const Tensor& x);

/// [n,c,h,w] -> [n,c,1,w], arithmetic mean over h.
Tensor mean_pool_height(Tape& tape, const Tensor& input);

/// Samples feature_map [c,h,w] at grid [p,2] (x, y pairs in feature-map
/// pixels) -> [c,p]. Zero padding outside [0,w-1]x[0,h-1]. Differentiable
/// with respect to both the map and the grid.
Tensor bilinear_sample(Tape& tape, const Tensor& feature_map, const Tensor& grid);

/// Mean over rows of -log softmax(logits)[target]. logits [n,k].
Tensor softmax_cross_entropy(Tape& tape, const Tensor& logits, std::span<const int> targets);

inline constexpr double kBceEpsilon = 1e-7;
/// Mean binary cross-entropy; prob clamped to [1e-7, 1 - 1e-7].
Tensor binary_cross_entropy(Tape& tape, const Tensor& prob, const Tensor& labels);

Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
/// factor * x + offset, elementwise with constants.
Tensor affine(Tape& tape, const Tensor& x, double factor, double offset = 0.0);
Tensor sum(Tape& tape, const Tensor& x);
Tensor mean(Tape& tape, const Tensor& x);
/// Weighted sum of scalar tensors: sum_i w_i * terms_i.
Tensor weighted_sum(Tape& tape, std::span<const Tensor> terms, std::span<const double> weights);

Tensor reshape(Tape& tape, const Tensor& x, Shape shape);
/// 2-D transpose.
Tensor transpose(Tape& tape, const Tensor& x);
/// Concatenates along axis 0; trailing dims must agree.
Tensor concat_rows(Tape& tape, std::span<const Tensor> parts);
/// Concatenates 2-D tensors along axis 1; row counts must agree.
Tensor concat_cols(Tape& tape, std::span<const Tensor> parts);
/// Stacks equal-shape tensors along a new leading axis.
Tensor stack(Tape& tape, std::span<const Tensor> parts);
/// Row lookup: table [v,e], indices in [0,v) -> [len(indices), e].
Tensor embedding(Tape& tape, const Tensor& table, std::span<const int> indices);

/// Mean absolute difference, optionally restricted to entries where
/// mask != 0 (mean over the selected entries; 0 when none are selected).
Tensor l1_loss(Tape& tape, const Tensor& pred, const Tensor& target, const Tensor& mask = {});
/// Mean squared difference over all entries.
Tensor mse_loss(Tape& tape, const Tensor& pred, const Tensor& target);

/// Additive attention for one query.
///   score_t = v . tanh(keys[t] + query), weights = softmax(score)
///   context = sum_t weights_t * values[t]
/// keys [T,a], query [1,a], v [1,a], values [T,c] -> context [1,c].
/// When weights_out is given it receives the attention weights (length T).
Tensor additive_attention(Tape& tape, const Tensor& keys, const Tensor& query, const Tensor& v,
                          const Tensor& values, std::vector<double>* weights_out = nullptr);

/// Gated recurrent unit update for a batch: x [n,in], h [n,hid],
/// w_ih [3*hid,in], w_hh [3*hid,hid], b_ih [3*hid], b_hh [3*hid] -> [n,hid].
/// Gate order r, z, n:
///   r = sig(W_ir x + b_ir + W_hr h + b_hr)
///   z = sig(W_iz x + b_iz + W_hz h + b_hz)
///   n = tanh(W_in x + b_in + r * (W_hn h + b_hn))
///   h' = (1 - z) * n + z * h
Tensor gru_cell(Tape& tape, const Tensor& x, const Tensor& h, const Tensor& w_ih,
                const Tensor& w_hh, const Tensor& b_ih, const Tensor& b_hh);

}  // namespace a3s::ops
