#pragma once

#include <span>
#include <vector>

#include "slimseiz/tensor.hpp"

namespace slimseiz::nn {

// Elementwise; shapes must match.
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
// a + lambda * b for scalar tensors (loss combination).
Tensor scale_add(const Tensor& a, const Tensor& b, double lambda);

Tensor relu(const Tensor& x);
Tensor silu(const Tensor& x);  // x * sigmoid(x)

// y = x w^T + b over the last dimension; x is [N, d_in] or [B, L, d_in],
// w is [d_out, d_in], b is [d_out].
Tensor fc(const Tensor& x, const Tensor& w, const Tensor& b);

// Cross-correlation plus bias: x [B, C_in, L], w [C_out, C_in, K], b [C_out].
// L_out = (L + 2*padding - K) / stride + 1.
Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& b, int stride,
              int padding);

// Per-channel causal convolution along the middle axis of x [B, L, C] with
// w [C, K], b [C]; position t sees inputs t-K+1..t (left zero padding).
Tensor dwconv_causal(const Tensor& x, const Tensor& w, const Tensor& b);

// x [B, C, L] -> [B, C, L_out]; gradient flows to the first maximum on ties.
Tensor maxpool1d(const Tensor& x, int window, int stride);

// x [B, C, L] -> [B, C], mean over time (double accumulation).
Tensor global_avg_pool(const Tensor& x);

// [B, C, L] <-> [B, L, C]
Tensor transpose_cl(const Tensor& x);
Tensor transpose_lc(const Tensor& x);

// Selective state-space scan parameters. A = -exp(a_log) elementwise, kept
// strictly negative so every mode decays.
struct SsmParams {
  Tensor a_log;    // [D, N]
  Tensor proj_b;   // [N, D]
  Tensor proj_c;   // [N, D]
  Tensor dt_down;  // [R, D]
  Tensor dt_up;    // [D, R]
  Tensor dt_bias;  // [D]
  Tensor skip_d;   // [D]

  std::vector<Tensor> tensors() const {
    return {a_log, proj_b, proj_c, dt_down, dt_up, dt_bias, skip_d};
  }
};

// Input-dependent scan over x [B, L, D]:
//   delta_t = softplus(dt_up (dt_down x_t) + dt_bias)         [D]
//   B_t = proj_b x_t,  C_t = proj_c x_t                       [N]
//   Abar = exp(delta_t A),  h_t = Abar h_{t-1} + delta_t B_t x_t   [D, N]
//   y_t = <C_t, h_t> + D_skip x_t                              [D]
// The recurrence and output reductions accumulate in double. Throws NonFinite
// if any output overflows.
Tensor ssm_scan(const Tensor& x, const SsmParams& params);

struct MambaParams {
  Tensor w_in, b_in;      // [D, M], [D]: main-path projection M -> D
  Tensor w_gate, b_gate;  // [D, M], [D]: gate-path projection
  Tensor conv_w, conv_b;  // [D, K], [D]: depthwise causal conv
  SsmParams ssm;
  Tensor w_out, b_out;  // [M, D], [M]: output projection D -> M
  bool use_gate{true};

  std::vector<Tensor> tensors() const;
};

// x [B, L, M] -> [B, L, M]:
// main = ssm_scan(silu(dwconv(fc_in(x)))), gate = silu(fc_gate(x)),
// out = fc_out(main * gate) + x. The gate branch is skipped when use_gate is
// false.
Tensor mamba_block(const Tensor& x, const MambaParams& p);

// Mean over the batch of -log softmax(logits)[label]; logits [B, num_classes].
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels);

// Supervised contrastive loss on L2-normalized embeddings [B, d]: anchors
// average -log( exp(z_i.z_p / tau) / sum_{a != i} exp(z_i.z_a / tau) ) over
// their same-label positives. Anchors without positives are skipped; throws
// NoPositives when every anchor is skipped.
Tensor supcon_loss(const Tensor& embeddings, std::span<const int> labels,
                   double tau);

}  // namespace slimseiz::nn
