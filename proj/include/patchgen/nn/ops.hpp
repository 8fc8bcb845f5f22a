#pragma once

#include "patchgen/nn/tape.hpp"

#include <vector>

namespace patchgen::nn {

// Elementwise and linear algebra. Shapes must match exactly unless noted.
Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
/// x (R x C) plus a 1 x C row broadcast to every row.
Var add_row(const Var& x, const Var& row);
Var relu(const Var& x);
Var exp(const Var& x);
/// Clamps to [lo, hi]; gradient is zero where clamped.
Var clamp(const Var& x, double lo, double hi);
/// log(sigmoid(x)), evaluated without overflow.
Var log_sigmoid(const Var& x);

Var sum(const Var& x);
Var mean(const Var& x);
/// R x C -> R x 1.
Var sum_cols(const Var& x);

Var concat_cols(const std::vector<Var>& parts);
Var concat_rows(const std::vector<Var>& parts);
Var slice_rows(const Var& x, Eigen::Index begin, Eigen::Index count);
Var slice_cols(const Var& x, Eigen::Index begin, Eigen::Index count);
/// out.row(i) = x.row(index[i]); backward scatter-adds.
Var gather_rows(const Var& x, std::vector<Eigen::Index> index);

/// Rows are split into consecutive groups of `group` rows; each group is
/// reduced to one output row by column-wise max (first index wins ties).
Var segment_max(const Var& x, Eigen::Index group);
Var segment_mean(const Var& x, Eigen::Index group);

/// Per-row normalization over columns with learnable 1 x C gain and bias.
Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps = 1e-5);

/// Divides every row by its L2 norm (floored at eps).
Var l2_normalize_rows(const Var& x, double eps = 1e-12);

/// Multi-head softmax(Q K^T / sqrt(d_head)) V over independent sequences of
/// `group` consecutive rows. Columns of Q/K and V are split evenly across heads.
Var grouped_attention(const Var& q, const Var& k, const Var& v, Eigen::Index group, Eigen::Index heads);

/// Single-head softmax(Q K^T / sqrt(d_k)) V over all rows.
Var scaled_dot_attention(const Var& q, const Var& k, const Var& v);

/// Attention across the `patches` patches of each cloud. `q` and `k` hold one
/// descriptor row per (cloud, patch); `v` holds one row per (cloud, patch,
/// point) with `points` points per patch. Point j of patch i receives
/// sum_m A[i, m] * v(point j of patch m), per head.
Var patch_attention(const Var& q, const Var& k, const Var& v, Eigen::Index patches, Eigen::Index points,
                    Eigen::Index heads);

/// Attention probabilities of patch_attention for cloud `cloud` and head `head`
/// (patches x patches), recomputed from the descriptor values.
Matrix patch_attention_weights(const Matrix& q, const Matrix& k, Eigen::Index patches, Eigen::Index heads,
                               Eigen::Index cloud, Eigen::Index head);

/// Row-wise softmax of a dense matrix (no tape).
Matrix softmax_rows(const Matrix& scores);

}  // namespace patchgen::nn
