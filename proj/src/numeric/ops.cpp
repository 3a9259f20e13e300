#include "agg/numeric/ops.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "agg/error.hpp"

namespace agg::nn {
namespace {

void same_shape(const Var& a, const Var& b, const char* op) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), ErrorKind::dimension,
          std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
              std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
              std::to_string(b.cols()));
}

template <typename F>
Var unary(Var a, Matrix value, F grad_of_input) {
  const std::size_t ia = a.id();
  return a.tape().record(std::move(value), {a}, [ia, grad_of_input](Tape& t, std::size_t self) {
    t.accumulate(ia, grad_of_input(t.value(ia), t.value(self), t.grad(self)));
  });
}

}  // namespace

Var add(Var a, Var b) {
  same_shape(a, b, "add");
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(a.value() + b.value(), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    t.accumulate(ia, t.grad(self));
    t.accumulate(ib, t.grad(self));
  });
}

Var sub(Var a, Var b) {
  same_shape(a, b, "sub");
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(a.value() - b.value(), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    t.accumulate(ia, t.grad(self));
    t.accumulate(ib, -t.grad(self));
  });
}

Var mul(Var a, Var b) {
  same_shape(a, b, "mul");
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(a.value().cwiseProduct(b.value()), {a, b},
                         [ia, ib](Tape& t, std::size_t self) {
                           t.accumulate(ia, t.grad(self).cwiseProduct(t.value(ib)));
                           t.accumulate(ib, t.grad(self).cwiseProduct(t.value(ia)));
                         });
}

Var scale(Var a, double s) {
  return unary(a, a.value() * s,
               [s](const Matrix&, const Matrix&, const Matrix& g) -> Matrix { return g * s; });
}

Var add_scalar(Var a, double s) {
  return unary(a, (a.value().array() + s).matrix(),
               [](const Matrix&, const Matrix&, const Matrix& g) -> Matrix { return g; });
}

Var add_constant(Var a, const Matrix& m) {
  require(a.rows() == m.rows() && a.cols() == m.cols(), ErrorKind::dimension,
          "add_constant: shape mismatch");
  return unary(a, a.value() + m,
               [](const Matrix&, const Matrix&, const Matrix& g) -> Matrix { return g; });
}

Var add_rowvec(Var a, Var row) {
  require(row.rows() == 1 && row.cols() == a.cols(), ErrorKind::dimension,
          "add_rowvec: row has " + std::to_string(row.cols()) + " columns, input has " +
              std::to_string(a.cols()));
  const std::size_t ia = a.id(), ir = row.id();
  Matrix value = a.value();
  value.rowwise() += row.value().row(0);
  return a.tape().record(std::move(value), {a, row}, [ia, ir](Tape& t, std::size_t self) {
    t.accumulate(ia, t.grad(self));
    t.accumulate(ir, t.grad(self).colwise().sum());
  });
}

Var matmul(Var a, Var b) {
  require(a.cols() == b.rows(), ErrorKind::dimension,
          "matmul: inner dimensions " + std::to_string(a.cols()) + " and " +
              std::to_string(b.rows()) + " differ");
  const std::size_t ia = a.id(), ib = b.id();
  Matrix value = a.value() * b.value();
  return a.tape().record(std::move(value), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    if (t.requires_grad(ia)) t.accumulate(ia, g * t.value(ib).transpose());
    if (t.requires_grad(ib)) t.accumulate(ib, t.value(ia).transpose() * g);
  });
}

Var matmul_nt(Var a, Var w) {
  require(a.cols() == w.cols(), ErrorKind::dimension,
          "dense: input length " + std::to_string(a.cols()) + " does not match weight inner dimension " +
              std::to_string(w.cols()));
  const std::size_t ia = a.id(), iw = w.id();
  Matrix value = a.value() * w.value().transpose();
  return a.tape().record(std::move(value), {a, w}, [ia, iw](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    if (t.requires_grad(ia)) t.accumulate(ia, g * t.value(iw));
    if (t.requires_grad(iw)) t.accumulate(iw, g.transpose() * t.value(ia));
  });
}

Var relu(Var a) {
  a.tape().note_kinks(a.value());
  return unary(a, a.value().cwiseMax(0.0),
               [](const Matrix& x, const Matrix&, const Matrix& g) -> Matrix {
                 return (x.array() > 0.0).select(g, 0.0);
               });
}

Var leaky_relu(Var a, double slope) {
  a.tape().note_kinks(a.value());
  Matrix v = (a.value().array() > 0.0).select(a.value(), a.value() * slope);
  return unary(a, std::move(v), [slope](const Matrix& x, const Matrix&, const Matrix& g) -> Matrix {
    return (x.array() > 0.0).select(g, g * slope);
  });
}

Var sigmoid(Var a) {
  Matrix v = a.value().unaryExpr([](double x) {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  });
  return unary(a, std::move(v), [](const Matrix&, const Matrix& y, const Matrix& g) -> Matrix {
    return g.cwiseProduct(y.cwiseProduct((1.0 - y.array()).matrix()));
  });
}

Var tanh(Var a) {
  Matrix v = a.value().array().tanh().matrix();
  return unary(a, std::move(v), [](const Matrix&, const Matrix& y, const Matrix& g) -> Matrix {
    return g.cwiseProduct((1.0 - y.array().square()).matrix());
  });
}

Var softmax_rows(Var a) {
  const Matrix& x = a.value();
  Matrix y(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double m = x.row(r).maxCoeff();
    require(std::isfinite(m), ErrorKind::input, "softmax: row has no finite logit");
    double total = 0.0;
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      const double v = x(r, c);
      y(r, c) = v == -std::numeric_limits<double>::infinity() ? 0.0 : std::exp(v - m);
      total += y(r, c);
    }
    y.row(r) /= total;
  }
  return unary(a, std::move(y), [](const Matrix&, const Matrix& y, const Matrix& g) -> Matrix {
    Eigen::VectorXd dot = g.cwiseProduct(y).rowwise().sum();
    Matrix out = g;
    out.colwise() -= dot;
    return y.cwiseProduct(out);
  });
}

Var log(Var a) {
  require((a.value().array() > 0.0).all(), ErrorKind::input, "log of a non-positive value");
  return unary(a, a.value().array().log().matrix(),
               [](const Matrix& x, const Matrix&, const Matrix& g) -> Matrix {
                 return g.cwiseQuotient(x);
               });
}

Var clamped_log(Var a, double floor) {
  Matrix v = a.value().cwiseMax(floor).array().log().matrix();
  return unary(a, std::move(v), [floor](const Matrix& x, const Matrix&, const Matrix& g) -> Matrix {
    return (x.array() >= floor).select(g.cwiseQuotient(x), 0.0);
  });
}

Var log_sigmoid(Var z, double floor) {
  const double log_floor = std::log(floor);
  Matrix v = z.value().unaryExpr([log_floor](double x) {
    const double ls = -(std::max(-x, 0.0) + std::log1p(std::exp(-std::abs(x))));
    return std::max(ls, log_floor);
  });
  return unary(z, std::move(v), [](const Matrix& x, const Matrix&, const Matrix& g) -> Matrix {
    // d/dz log sigmoid(z) = 1 - sigmoid(z) = sigmoid(-z)
    Matrix s = x.unaryExpr([](double v) {
      return v >= 0.0 ? std::exp(-v) / (1.0 + std::exp(-v)) : 1.0 / (1.0 + std::exp(v));
    });
    return g.cwiseProduct(s);
  });
}

Var sum(Var a) {
  Matrix v(1, 1);
  v(0, 0) = a.value().sum();
  const Eigen::Index r = a.rows(), c = a.cols();
  return unary(a, std::move(v), [r, c](const Matrix&, const Matrix&, const Matrix& g) -> Matrix {
    return Matrix::Constant(r, c, g(0, 0));
  });
}

Var mean(Var a) {
  require(a.value().size() > 0, ErrorKind::input, "mean of an empty value");
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

Var row_mean(Var a) {
  const Eigen::Index c = a.cols();
  Matrix v = a.value().rowwise().mean();
  return unary(a, std::move(v), [c](const Matrix&, const Matrix&, const Matrix& g) -> Matrix {
    return g.replicate(1, c) / static_cast<double>(c);
  });
}

Var concat_cols(Var a, Var b) {
  require(a.rows() == b.rows(), ErrorKind::dimension, "concat_cols: row counts differ");
  Matrix v(a.rows(), a.cols() + b.cols());
  v << a.value(), b.value();
  const std::size_t ia = a.id(), ib = b.id();
  const Eigen::Index ca = a.cols(), cb = b.cols();
  return a.tape().record(std::move(v), {a, b}, [ia, ib, ca, cb](Tape& t, std::size_t self) {
    t.accumulate(ia, t.grad(self).leftCols(ca));
    t.accumulate(ib, t.grad(self).rightCols(cb));
  });
}

Var slice_cols(Var a, Eigen::Index begin, Eigen::Index count) {
  require(begin >= 0 && count >= 0 && begin + count <= a.cols(), ErrorKind::dimension,
          "slice_cols: range out of bounds");
  const std::size_t ia = a.id();
  const Eigen::Index r = a.rows(), c = a.cols();
  Matrix v = a.value().middleCols(begin, count);
  return a.tape().record(std::move(v), {a}, [ia, r, c, begin, count](Tape& t, std::size_t self) {
    Matrix g = Matrix::Zero(r, c);
    g.middleCols(begin, count) = t.grad(self);
    t.accumulate(ia, g);
  });
}

Var gather_rows(Var a, const std::vector<Eigen::Index>& rows) {
  Matrix v(static_cast<Eigen::Index>(rows.size()), a.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require(rows[i] >= 0 && rows[i] < a.rows(), ErrorKind::dimension, "gather_rows: index out of range");
    v.row(static_cast<Eigen::Index>(i)) = a.value().row(rows[i]);
  }
  const std::size_t ia = a.id();
  const Eigen::Index r = a.rows(), c = a.cols();
  return a.tape().record(std::move(v), {a}, [ia, r, c, rows](Tape& t, std::size_t self) {
    Matrix g = Matrix::Zero(r, c);
    const Matrix& gs = t.grad(self);
    for (std::size_t i = 0; i < rows.size(); ++i) g.row(rows[i]) += gs.row(static_cast<Eigen::Index>(i));
    t.accumulate(ia, g);
  });
}

Var interleave_steps(const std::vector<Var>& steps) {
  require(!steps.empty(), ErrorKind::input, "interleave_steps: no steps");
  const Eigen::Index batch = steps.front().rows();
  const Eigen::Index d = steps.front().cols();
  const auto length = static_cast<Eigen::Index>(steps.size());
  Matrix v(batch * length, d);
  std::vector<std::size_t> ids;
  ids.reserve(steps.size());
  for (Eigen::Index t = 0; t < length; ++t) {
    const Var& s = steps[static_cast<std::size_t>(t)];
    require(s.rows() == batch && s.cols() == d, ErrorKind::dimension, "interleave_steps: ragged steps");
    for (Eigen::Index b = 0; b < batch; ++b) v.row(b * length + t) = s.value().row(b);
    ids.push_back(s.id());
  }
  return steps.front().tape().record(std::move(v), steps, [ids, batch, length](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    for (Eigen::Index s = 0; s < length; ++s) {
      const std::size_t id = ids[static_cast<std::size_t>(s)];
      if (!t.requires_grad(id)) continue;
      Matrix gs(batch, g.cols());
      for (Eigen::Index b = 0; b < batch; ++b) gs.row(b) = g.row(b * length + s);
      t.accumulate(id, gs);
    }
  });
}

Var pick_elements(Var a, const std::vector<Eigen::Index>& rows, const std::vector<Eigen::Index>& cols) {
  require(rows.size() == cols.size(), ErrorKind::dimension, "pick_elements: index lists differ in length");
  Matrix v(static_cast<Eigen::Index>(rows.size()), 1);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require(rows[i] >= 0 && rows[i] < a.rows() && cols[i] >= 0 && cols[i] < a.cols(), ErrorKind::dimension,
            "pick_elements: index out of range");
    v(static_cast<Eigen::Index>(i), 0) = a.value()(rows[i], cols[i]);
  }
  const std::size_t ia = a.id();
  const Eigen::Index r = a.rows(), c = a.cols();
  return a.tape().record(std::move(v), {a}, [ia, r, c, rows, cols](Tape& t, std::size_t self) {
    Matrix g = Matrix::Zero(r, c);
    const Matrix& gs = t.grad(self);
    for (std::size_t i = 0; i < rows.size(); ++i) g(rows[i], cols[i]) += gs(static_cast<Eigen::Index>(i), 0);
    t.accumulate(ia, g);
  });
}

Var group_logsumexp(Var column, Eigen::Index group) {
  require(column.cols() == 1, ErrorKind::dimension, "group_logsumexp: expects a column");
  require(group >= 1 && column.rows() % group == 0, ErrorKind::dimension,
          "group_logsumexp: rows not divisible by group size");
  const Eigen::Index n = column.rows() / group;
  const Matrix& x = column.value();
  Matrix v(n, 1);
  Matrix weights(column.rows(), 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    auto seg = x.middleRows(i * group, group);
    const double m = seg.maxCoeff();
    if (!std::isfinite(m)) {
      v(i, 0) = m;
      weights.middleRows(i * group, group).setZero();
      continue;
    }
    auto e = (seg.array() - m).exp();
    const double s = e.sum();
    v(i, 0) = m + std::log(s);
    weights.middleRows(i * group, group) = (e / s).matrix();
  }
  const std::size_t ic = column.id();
  return column.tape().record(std::move(v), {column}, [ic, group, weights](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    Matrix gc(weights.rows(), 1);
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
      gc.middleRows(i * group, group) = weights.middleRows(i * group, group) * g(i, 0);
    }
    t.accumulate(ic, gc);
  });
}

Var straight_through(const Matrix& hard, Var soft) {
  require(hard.rows() == soft.rows() && hard.cols() == soft.cols(), ErrorKind::dimension,
          "straight_through: shape mismatch");
  return unary(soft, hard, [](const Matrix&, const Matrix&, const Matrix& g) -> Matrix { return g; });
}

Eigen::Index conv_output_length(Eigen::Index length, Eigen::Index width, Eigen::Index stride,
                                Padding padding) {
  require(length >= 1, ErrorKind::input, "conv1d: empty input");
  require(width >= 1 && width % 2 == 1, ErrorKind::dimension, "conv1d: kernel width must be odd");
  require(stride >= 1, ErrorKind::dimension, "conv1d: stride must be positive");
  if (padding == Padding::same) return (length + stride - 1) / stride;
  require(length >= width, ErrorKind::dimension,
          "conv1d: valid padding needs length >= kernel width (" + std::to_string(length) + " < " +
              std::to_string(width) + ")");
  return (length - width) / stride + 1;
}

namespace {

struct TapPlan {
  std::vector<Eigen::Index> out_rows;
  std::vector<Eigen::Index> in_rows;
};

std::vector<TapPlan> plan_taps(SeqShape shape, Eigen::Index out_len, Eigen::Index width,
                               Eigen::Index stride, Padding padding) {
  Eigen::Index pad_left = 0;
  if (padding == Padding::same) {
    const Eigen::Index total = std::max<Eigen::Index>((out_len - 1) * stride + width - shape.length, 0);
    pad_left = total / 2;
  }
  std::vector<TapPlan> plans(static_cast<std::size_t>(width));
  for (Eigen::Index k = 0; k < width; ++k) {
    TapPlan& p = plans[static_cast<std::size_t>(k)];
    for (Eigen::Index b = 0; b < shape.batch; ++b) {
      for (Eigen::Index o = 0; o < out_len; ++o) {
        const Eigen::Index pos = o * stride + k - pad_left;
        if (pos < 0 || pos >= shape.length) continue;
        p.out_rows.push_back(b * out_len + o);
        p.in_rows.push_back(b * shape.length + pos);
      }
    }
  }
  return plans;
}

}  // namespace

Var conv1d(Var x, SeqShape shape, Var kernel, Var bias, Eigen::Index width, Eigen::Index stride,
           Padding padding) {
  require(shape.batch >= 1, ErrorKind::input, "conv1d: empty batch");
  require(x.rows() == shape.batch * shape.length, ErrorKind::dimension,
          "conv1d: input rows do not match batch * length");
  const Eigen::Index out_len = conv_output_length(shape.length, width, stride, padding);
  const Eigen::Index in_ch = x.cols();
  const Eigen::Index out_ch = kernel.rows();
  require(kernel.cols() == width * in_ch, ErrorKind::dimension,
          "conv1d: kernel expects " + std::to_string(kernel.cols() / width) + " input channels, got " +
              std::to_string(in_ch));
  require(bias.rows() == 1 && bias.cols() == out_ch, ErrorKind::dimension, "conv1d: bias shape mismatch");

  auto plans = plan_taps(shape, out_len, width, stride, padding);
  const Matrix& xv = x.value();
  const Matrix& wv = kernel.value();
  Matrix out = Matrix::Zero(shape.batch * out_len, out_ch);
  out.rowwise() += bias.value().row(0);
  Matrix gathered;
  for (Eigen::Index k = 0; k < width; ++k) {
    const TapPlan& p = plans[static_cast<std::size_t>(k)];
    if (p.in_rows.empty()) continue;
    gathered.resize(static_cast<Eigen::Index>(p.in_rows.size()), in_ch);
    for (std::size_t i = 0; i < p.in_rows.size(); ++i) gathered.row(static_cast<Eigen::Index>(i)) = xv.row(p.in_rows[i]);
    Matrix contrib = gathered * wv.middleCols(k * in_ch, in_ch).transpose();
    for (std::size_t i = 0; i < p.out_rows.size(); ++i) out.row(p.out_rows[i]) += contrib.row(static_cast<Eigen::Index>(i));
  }

  const std::size_t ix = x.id(), ik = kernel.id(), ib = bias.id();
  const Eigen::Index x_rows = x.rows();
  return x.tape().record(
      std::move(out), {x, kernel, bias},
      [ix, ik, ib, plans = std::move(plans), width, in_ch, out_ch, x_rows](Tape& t, std::size_t self) {
        const Matrix& g = t.grad(self);
        const Matrix& xv = t.value(ix);
        const Matrix& wv = t.value(ik);
        const bool need_x = t.requires_grad(ix);
        const bool need_w = t.requires_grad(ik);
        Matrix gx;
        if (need_x) gx = Matrix::Zero(x_rows, in_ch);
        Matrix gw;
        if (need_w) gw = Matrix::Zero(out_ch, width * in_ch);
        Matrix g_rows, x_rows_m;
        for (Eigen::Index k = 0; k < width; ++k) {
          const TapPlan& p = plans[static_cast<std::size_t>(k)];
          if (p.in_rows.empty()) continue;
          const auto n = static_cast<Eigen::Index>(p.out_rows.size());
          g_rows.resize(n, out_ch);
          for (Eigen::Index i = 0; i < n; ++i) g_rows.row(i) = g.row(p.out_rows[static_cast<std::size_t>(i)]);
          if (need_x) {
            Matrix back = g_rows * wv.middleCols(k * in_ch, in_ch);
            for (Eigen::Index i = 0; i < n; ++i) gx.row(p.in_rows[static_cast<std::size_t>(i)]) += back.row(i);
          }
          if (need_w) {
            x_rows_m.resize(n, in_ch);
            for (Eigen::Index i = 0; i < n; ++i) x_rows_m.row(i) = xv.row(p.in_rows[static_cast<std::size_t>(i)]);
            gw.middleCols(k * in_ch, in_ch) += g_rows.transpose() * x_rows_m;
          }
        }
        if (need_x) t.accumulate(ix, gx);
        if (need_w) t.accumulate(ik, gw);
        t.accumulate(ib, g.colwise().sum());
      });
}

Var mean_pool_time(Var x, SeqShape shape) {
  require(x.rows() == shape.batch * shape.length, ErrorKind::dimension,
          "mean_pool_time: rows do not match batch * length");
  const Eigen::Index c = x.cols();
  Matrix v = Matrix::Zero(shape.batch, c);
  for (Eigen::Index b = 0; b < shape.batch; ++b) {
    v.row(b) = x.value().middleRows(b * shape.length, shape.length).colwise().mean();
  }
  const std::size_t ix = x.id();
  return x.tape().record(std::move(v), {x}, [ix, shape, c](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    Matrix gx(shape.batch * shape.length, c);
    const double inv = 1.0 / static_cast<double>(shape.length);
    for (Eigen::Index b = 0; b < shape.batch; ++b) {
      gx.middleRows(b * shape.length, shape.length) = g.row(b).replicate(shape.length, 1) * inv;
    }
    t.accumulate(ix, gx);
  });
}

}  // namespace agg::nn
