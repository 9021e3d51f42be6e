#pragma once

#include <cstddef>
#include <vector>

#include "eagle/rng.hpp"
#include "eagle/tape.hpp"
#include "eagle/tensor.hpp"

namespace eagle {

enum class Mode { Train, Eval };

// Running statistics for one batch-norm layer. Not learnable.
struct BatchNormState {
  Tensor running_mean;
  Tensor running_var;
};

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

namespace ops {

Var matmul(Tape& t, Var a, Var b);
// x[m x n] + bias[1 x n] broadcast over rows.
Var add_bias(Tape& t, Var x, Var bias);
Var add(Tape& t, Var a, Var b);
Var mul(Tape& t, Var a, Var b);
Var scale(Tape& t, Var a, double s);
// Elementwise product with a constant tensor.
Var mul_const(Tape& t, Var a, const Tensor& c);
Var relu(Tape& t, Var a);
Var sum(Tape& t, Var a);
Var mean(Tape& t, Var a);
Var logsumexp(Tape& t, Var a);
Var reshape(Tape& t, Var a, Shape shape);
Var concat_cols(Tape& t, const std::vector<Var>& parts);
Var slice_cols(Tape& t, Var a, std::size_t start, std::size_t width);

// Interleaves k matrices of shape [b x d] into [(b*k) x d]; row p*k + i holds
// row p of parts[i]. Reshaping the result to [b x k*d] concatenates per row.
Var interleave_rows(Tape& t, const std::vector<Var>& parts);

// In train mode normalizes by batch statistics and updates `state`; in eval
// mode normalizes by the running statistics. gamma and beta are [1 x d].
Var batchnorm(Tape& t, Var x, Var gamma, Var beta, BatchNormState& state, Mode mode);
// Eval-mode batch norm over fixed running statistics.
Var batchnorm(Tape& t, Var x, Var gamma, Var beta, const BatchNormState& state);

// Inverted dropout; identity in eval mode or when p == 0.
Var dropout(Tape& t, Var x, double p, Mode mode, Rng& rng);

struct AttentionOutput {
  Var out;
  // [groups x heads x seq x seq], post-softmax and pre-dropout.
  Tensor weights;
};

// Scaled dot-product attention applied independently to `groups` consecutive
// blocks of `seq` rows. q, k, v are [(groups*seq) x d]; d % heads == 0.
// Dropout with probability p is applied to the attention weights.
AttentionOutput scaled_dot_product_attention(Tape& t, Var q, Var k, Var v, std::size_t heads, std::size_t seq,
                                             double dropout_p, Mode mode, Rng& rng);

struct Linear {
  Var weight;  // [in x out]
  Var bias;    // [1 x out]
};

inline Var linear(Tape& t, Var x, const Linear& l) { return add_bias(t, matmul(t, x, l.weight), l.bias); }

struct AttentionProjections {
  Linear query, key, value, output;
};

// Multi-head attention with learned input and output projections.
AttentionOutput multi_head_attention(Tape& t, Var q, Var k, Var v, const AttentionProjections& proj,
                                     std::size_t heads, std::size_t seq, double dropout_p, Mode mode, Rng& rng);

}  // namespace ops

// Non-taped helper for the batch-norm running-statistics recurrence.
void update_running_stats(BatchNormState& state, std::span<const double> batch_mean,
                          std::span<const double> batch_unbiased_var);

}  // namespace eagle
