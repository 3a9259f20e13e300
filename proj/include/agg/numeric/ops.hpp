#pragma once

#include <cstddef>
#include <vector>

#include "agg/numeric/tape.hpp"

// Differentiable primitives over row-major matrices. A batch of vectors is a
// matrix with one row per item; a batch of sequences stacks the time steps of
// each item contiguously (row = item * length + t).
namespace agg::nn {

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
// a + m where m is a constant of the same shape (may hold -inf for masking).
Var add_constant(Var a, const Matrix& m);
// a (n x m) + row (1 x m) broadcast over rows.
Var add_rowvec(Var a, Var row);

Var matmul(Var a, Var b);
// a * w^T, the dense-layer product with w stored as (out x in).
Var matmul_nt(Var a, Var w);

Var relu(Var a);
Var leaky_relu(Var a, double slope);
Var sigmoid(Var a);
Var tanh(Var a);
Var softmax_rows(Var a);
Var log(Var a);
// log(max(a, floor)); zero gradient where the floor is active.
Var clamped_log(Var a, double floor);
// max(log sigmoid(z), log floor); the gradient is that of log sigmoid(z)
// even where the floor is active, so saturated logits still get a signal.
Var log_sigmoid(Var z, double floor);

Var sum(Var a);
Var mean(Var a);
// Mean of each row, n x 1.
Var row_mean(Var a);

Var concat_cols(Var a, Var b);
Var slice_cols(Var a, Eigen::Index begin, Eigen::Index count);
Var gather_rows(Var a, const std::vector<Eigen::Index>& rows);
// steps[t] is batch x d; result is (batch * steps.size()) x d, item-major.
Var interleave_steps(const std::vector<Var>& steps);

// Element (rows[i], cols[i]) of `a` for each i, as an n x 1 column.
Var pick_elements(Var a, const std::vector<Eigen::Index>& rows, const std::vector<Eigen::Index>& cols);
// log(sum(exp(.))) over consecutive groups of `group` rows of an n x 1 column.
Var group_logsumexp(Var column, Eigen::Index group);

// Forward value `hard`, gradient routed unchanged to `soft`.
Var straight_through(const Matrix& hard, Var soft);

enum class Padding { same, valid };

struct SeqShape {
  Eigen::Index batch = 1;
  Eigen::Index length = 1;
};

Eigen::Index conv_output_length(Eigen::Index length, Eigen::Index width, Eigen::Index stride,
                                Padding padding);

// Cross-correlation along time. x: (batch*length) x in, kernel: out x (width*in)
// laid out as [out][tap][in], bias: 1 x out. Returns (batch*out_length) x out.
Var conv1d(Var x, SeqShape shape, Var kernel, Var bias, Eigen::Index width, Eigen::Index stride,
           Padding padding);

// Average over time for each item: (batch*length) x c -> batch x c.
Var mean_pool_time(Var x, SeqShape shape);

}  // namespace agg::nn
