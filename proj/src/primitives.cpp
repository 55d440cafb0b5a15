#include <algorithm>
#include <cmath>
#include <limits>

#include "rqen/autodiff.hpp"
#include "rqen/errors.hpp"
#include "rqen/kernels.hpp"

namespace rqen {

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::input: return "input";
    case OpKind::parameter: return "parameter";
    case OpKind::matmul: return "matmul";
    case OpKind::add_bias: return "add-bias";
    case OpKind::add: return "elementwise-add";
    case OpKind::mul: return "elementwise-mul";
    case OpKind::div: return "elementwise-div";
    case OpKind::scale: return "scalar-mul";
    case OpKind::relu: return "relu";
    case OpKind::sigmoid: return "sigmoid";
    case OpKind::sqrt: return "sqrt";
    case OpKind::hinge: return "hinge";
    case OpKind::mean_rows: return "mean-over-rows";
    case OpKind::sum_axis: return "sum-over-axis";
    case OpKind::concat: return "concat";
    case OpKind::transpose: return "transpose";
    case OpKind::slice_rows: return "slice-rows";
    case OpKind::l2_normalize: return "l2-normalize";
    case OpKind::squared_l2_distance: return "squared-l2-distance";
    case OpKind::softmax_cross_entropy: return "softmax-cross-entropy";
    case OpKind::conv2d: return "conv2d";
    case OpKind::avg_pool: return "avg-pool";
    case OpKind::region_pool: return "region-pool";
  }
  return "unknown";
}

namespace {

constexpr double kNormFloor = 1e-12;

[[noreturn]] void shape_fail(OpKind kind, const std::vector<const Shape*>& in,
                             const std::string& why) {
  std::string msg = std::string(op_name(kind)) + ": " + why + " (input shapes";
  for (const Shape* s : in) msg += " " + shape_string(*s);
  throw ShapeError(msg + ")");
}

void expect_arity(OpKind kind, const std::vector<const Shape*>& in, std::size_t n) {
  if (in.size() != n) {
    shape_fail(kind, in, "expected " + std::to_string(n) + " inputs, got " +
                             std::to_string(in.size()));
  }
}

void expect_rank(OpKind kind, const std::vector<const Shape*>& in, std::size_t idx,
                 std::size_t rank) {
  if (in[idx]->size() != rank) {
    shape_fail(kind, in, "input " + std::to_string(idx) + " must have rank " +
                             std::to_string(rank));
  }
}

enum class Broadcast { same, scalar, row, column };

// How the second operand of add/mul/div maps onto the first.
Broadcast broadcast_mode(const Shape& a, const Shape& b) {
  if (a == b) return Broadcast::same;
  if (shape_size(b) == 1) return Broadcast::scalar;
  if (a.size() == 2 && b.size() == 2) {
    if (b[0] == 1 && b[1] == a[1]) return Broadcast::row;
    if (b[1] == 1 && b[0] == a[0]) return Broadcast::column;
  }
  throw ShapeError("incompatible");
}

inline std::size_t broadcast_index(Broadcast mode, std::size_t i, std::size_t cols) {
  switch (mode) {
    case Broadcast::same: return i;
    case Broadcast::scalar: return 0;
    case Broadcast::row: return i % cols;
    case Broadcast::column: return i / cols;
  }
  return i;
}

double stable_sigmoid(double x) {
  const double s = x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  // Saturated results are pulled back inside the open interval.
  return std::clamp(s, std::numeric_limits<double>::min(), std::nextafter(1.0, 0.0));
}

kernels::ConvDims conv_dims(const Shape& x, const Shape& w) {
  kernels::ConvDims d;
  d.batch = x[0];
  d.in_channels = x[1];
  d.height = x[2];
  d.width = x[3];
  d.out_channels = w[0];
  d.kernel = w[2];
  return d;
}

}  // namespace

Shape infer_shape(OpKind kind, const std::vector<const Shape*>& in, const OpAttrs& attrs) {
  switch (kind) {
    case OpKind::input:
    case OpKind::parameter:
      shape_fail(kind, in, "leaf kinds have no inputs to infer from");
    case OpKind::matmul: {
      expect_arity(kind, in, 2);
      expect_rank(kind, in, 0, 2);
      expect_rank(kind, in, 1, 2);
      if ((*in[0])[1] != (*in[1])[0]) shape_fail(kind, in, "inner extents differ");
      return {(*in[0])[0], (*in[1])[1]};
    }
    case OpKind::add_bias: {
      expect_arity(kind, in, 2);
      expect_rank(kind, in, 0, 2);
      const Shape& b = *in[1];
      const std::size_t m = (*in[0])[1];
      const bool ok = (b.size() == 1 && b[0] == m) || (b.size() == 2 && b[0] == 1 && b[1] == m);
      if (!ok) shape_fail(kind, in, "bias must have one entry per column");
      return *in[0];
    }
    case OpKind::add:
    case OpKind::mul:
    case OpKind::div: {
      expect_arity(kind, in, 2);
      try {
        broadcast_mode(*in[0], *in[1]);
      } catch (const ShapeError&) {
        shape_fail(kind, in, "second operand must match, be a scalar, a row or a column");
      }
      return *in[0];
    }
    case OpKind::scale:
    case OpKind::relu:
    case OpKind::sigmoid:
    case OpKind::sqrt:
    case OpKind::hinge:
      expect_arity(kind, in, 1);
      return *in[0];
    case OpKind::mean_rows:
      expect_arity(kind, in, 1);
      expect_rank(kind, in, 0, 2);
      return {1, (*in[0])[1]};
    case OpKind::sum_axis:
      expect_arity(kind, in, 1);
      expect_rank(kind, in, 0, 2);
      if (attrs.axis == 0) return {1, (*in[0])[1]};
      if (attrs.axis == 1) return {(*in[0])[0], 1};
      shape_fail(kind, in, "axis must be 0 or 1");
    case OpKind::concat: {
      if (in.empty()) shape_fail(kind, in, "needs at least one input");
      if (attrs.axis > 1) shape_fail(kind, in, "axis must be 0 or 1");
      Shape out = *in[0];
      for (std::size_t i = 0; i < in.size(); ++i) {
        expect_rank(kind, in, i, 2);
        if (i == 0) continue;
        const std::size_t other = 1 - attrs.axis;
        if ((*in[i])[other] != out[other]) shape_fail(kind, in, "non-concatenated extents differ");
        out[attrs.axis] += (*in[i])[attrs.axis];
      }
      return out;
    }
    case OpKind::transpose:
      expect_arity(kind, in, 1);
      expect_rank(kind, in, 0, 2);
      return {(*in[0])[1], (*in[0])[0]};
    case OpKind::slice_rows: {
      expect_arity(kind, in, 1);
      if (attrs.begin >= attrs.end || attrs.end > (*in[0])[0]) {
        shape_fail(kind, in, "row range [" + std::to_string(attrs.begin) + "," +
                                 std::to_string(attrs.end) + ") invalid");
      }
      Shape out = *in[0];
      out[0] = attrs.end - attrs.begin;
      return out;
    }
    case OpKind::l2_normalize:
      expect_arity(kind, in, 1);
      expect_rank(kind, in, 0, 2);
      return *in[0];
    case OpKind::squared_l2_distance:
      expect_arity(kind, in, 2);
      expect_rank(kind, in, 0, 2);
      if (*in[0] != *in[1]) shape_fail(kind, in, "operands must have equal shapes");
      return {(*in[0])[0], 1};
    case OpKind::softmax_cross_entropy: {
      expect_arity(kind, in, 1);
      expect_rank(kind, in, 0, 2);
      const Shape& s = *in[0];
      if (attrs.labels.size() != s[0]) shape_fail(kind, in, "one label per row required");
      for (auto l : attrs.labels) {
        if (l >= s[1]) {
          shape_fail(kind, in, "label " + std::to_string(l) + " outside [0," +
                                   std::to_string(s[1]) + ")");
        }
      }
      return {1, 1};
    }
    case OpKind::conv2d: {
      expect_arity(kind, in, 3);
      expect_rank(kind, in, 0, 4);
      expect_rank(kind, in, 1, 4);
      expect_rank(kind, in, 2, 1);
      const Shape &x = *in[0], &w = *in[1], &b = *in[2];
      if (w[1] != x[1]) shape_fail(kind, in, "filter input channels differ from image channels");
      if (w[2] != w[3] || w[2] % 2 == 0) shape_fail(kind, in, "filters must be square and odd");
      if (b[0] != w[0]) shape_fail(kind, in, "one bias per output channel required");
      return {x[0], w[0], x[2], x[3]};
    }
    case OpKind::avg_pool: {
      expect_arity(kind, in, 1);
      expect_rank(kind, in, 0, 4);
      const Shape& x = *in[0];
      const std::size_t p = attrs.window;
      if (p == 0 || x[2] < p || x[3] < p) shape_fail(kind, in, "window larger than map");
      return {x[0], x[1], x[2] / p, x[3] / p};
    }
    case OpKind::region_pool: {
      expect_arity(kind, in, 1);
      expect_rank(kind, in, 0, 4);
      if (attrs.begin >= attrs.end || attrs.end > (*in[0])[2]) {
        shape_fail(kind, in, "row band [" + std::to_string(attrs.begin) + "," +
                                 std::to_string(attrs.end) + ") invalid");
      }
      return {(*in[0])[0], (*in[0])[1]};
    }
  }
  shape_fail(kind, in, "unsupported kind");
}

Tensor forward_primitive(OpKind kind, const std::vector<const Tensor*>& inputs,
                         const OpAttrs& attrs) {
  std::vector<const Shape*> shapes;
  shapes.reserve(inputs.size());
  for (const Tensor* t : inputs) shapes.push_back(&t->shape());
  Tensor out(infer_shape(kind, shapes, attrs));
  auto y = out.data();

  switch (kind) {
    case OpKind::input:
    case OpKind::parameter:
      break;
    case OpKind::matmul: {
      const Tensor &a = *inputs[0], &b = *inputs[1];
      kernels::matmul_nn(a.dim(0), a.dim(1), b.dim(1), a.data(), b.data(), y);
      break;
    }
    case OpKind::add_bias: {
      const Tensor &x = *inputs[0], &b = *inputs[1];
      const std::size_t m = x.dim(1);
      for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] + b[i % m];
      break;
    }
    case OpKind::add:
    case OpKind::mul:
    case OpKind::div: {
      const Tensor &a = *inputs[0], &b = *inputs[1];
      const Broadcast mode = broadcast_mode(a.shape(), b.shape());
      const std::size_t cols = a.rank() == 2 ? a.dim(1) : 1;
      for (std::size_t i = 0; i < a.size(); ++i) {
        const double bv = b[broadcast_index(mode, i, cols)];
        y[i] = kind == OpKind::add ? a[i] + bv : kind == OpKind::mul ? a[i] * bv : a[i] / bv;
      }
      break;
    }
    case OpKind::scale: {
      const Tensor& x = *inputs[0];
      for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * attrs.scalar;
      break;
    }
    case OpKind::relu:
    case OpKind::hinge: {
      const Tensor& x = *inputs[0];
      for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
      break;
    }
    case OpKind::sigmoid: {
      const Tensor& x = *inputs[0];
      for (std::size_t i = 0; i < x.size(); ++i) y[i] = stable_sigmoid(x[i]);
      break;
    }
    case OpKind::sqrt: {
      const Tensor& x = *inputs[0];
      for (std::size_t i = 0; i < x.size(); ++i) y[i] = std::sqrt(x[i]);
      break;
    }
    case OpKind::mean_rows: {
      const Tensor& x = *inputs[0];
      const std::size_t r = x.dim(0), c = x.dim(1);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) y[j] += x[i * c + j];
      for (std::size_t j = 0; j < c; ++j) y[j] /= static_cast<double>(r);
      break;
    }
    case OpKind::sum_axis: {
      const Tensor& x = *inputs[0];
      const std::size_t r = x.dim(0), c = x.dim(1);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) y[attrs.axis == 0 ? j : i] += x[i * c + j];
      break;
    }
    case OpKind::concat: {
      const std::size_t out_cols = out.dim(1);
      std::size_t offset = 0;
      for (const Tensor* t : inputs) {
        const std::size_t r = t->dim(0), c = t->dim(1);
        for (std::size_t i = 0; i < r; ++i) {
          for (std::size_t j = 0; j < c; ++j) {
            const std::size_t oi = attrs.axis == 0 ? i + offset : i;
            const std::size_t oj = attrs.axis == 0 ? j : j + offset;
            y[oi * out_cols + oj] = (*t)[i * c + j];
          }
        }
        offset += t->dim(attrs.axis);
      }
      break;
    }
    case OpKind::transpose: {
      const Tensor& x = *inputs[0];
      const std::size_t r = x.dim(0), c = x.dim(1);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) y[j * r + i] = x[i * c + j];
      break;
    }
    case OpKind::slice_rows: {
      const Tensor& x = *inputs[0];
      const std::size_t stride = x.size() / x.dim(0);
      std::copy(x.data().begin() + attrs.begin * stride, x.data().begin() + attrs.end * stride,
                y.begin());
      break;
    }
    case OpKind::l2_normalize: {
      const Tensor& x = *inputs[0];
      const std::size_t r = x.dim(0), c = x.dim(1);
      for (std::size_t i = 0; i < r; ++i) {
        double ss = 0.0;
        for (std::size_t j = 0; j < c; ++j) ss += x[i * c + j] * x[i * c + j];
        const double norm = std::max(std::sqrt(ss), kNormFloor);
        for (std::size_t j = 0; j < c; ++j) y[i * c + j] = x[i * c + j] / norm;
      }
      break;
    }
    case OpKind::squared_l2_distance: {
      const Tensor &a = *inputs[0], &b = *inputs[1];
      const std::size_t r = a.dim(0), c = a.dim(1);
      for (std::size_t i = 0; i < r; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
          const double d = a[i * c + j] - b[i * c + j];
          acc += d * d;
        }
        y[i] = acc;
      }
      break;
    }
    case OpKind::softmax_cross_entropy: {
      const Tensor& z = *inputs[0];
      const std::size_t r = z.dim(0), c = z.dim(1);
      double total = 0.0;
      for (std::size_t i = 0; i < r; ++i) {
        const double* row = z.data().data() + i * c;
        const double mx = *std::max_element(row, row + c);
        double se = 0.0;
        for (std::size_t j = 0; j < c; ++j) se += std::exp(row[j] - mx);
        total += mx + std::log(se) - row[attrs.labels[i]];
      }
      y[0] = total / static_cast<double>(r);
      break;
    }
    case OpKind::conv2d: {
      const Tensor &x = *inputs[0], &w = *inputs[1], &b = *inputs[2];
      kernels::conv2d_forward(conv_dims(x.shape(), w.shape()), x.data(), w.data(), b.data(), y);
      break;
    }
    case OpKind::avg_pool: {
      const Tensor& x = *inputs[0];
      const std::size_t p = attrs.window, H = x.dim(2), W = x.dim(3);
      const std::size_t oh = out.dim(2), ow = out.dim(3);
      const std::size_t planes = x.dim(0) * x.dim(1);
      const double inv = 1.0 / static_cast<double>(p * p);
      for (std::size_t pl = 0; pl < planes; ++pl)
        for (std::size_t oy = 0; oy < oh; ++oy)
          for (std::size_t ox = 0; ox < ow; ++ox) {
            double acc = 0.0;
            for (std::size_t dy = 0; dy < p; ++dy)
              for (std::size_t dx = 0; dx < p; ++dx)
                acc += x[(pl * H + oy * p + dy) * W + ox * p + dx];
            y[(pl * oh + oy) * ow + ox] = acc * inv;
          }
      break;
    }
    case OpKind::region_pool: {
      const Tensor& x = *inputs[0];
      const std::size_t H = x.dim(2), W = x.dim(3);
      const std::size_t planes = x.dim(0) * x.dim(1);
      const double inv = 1.0 / static_cast<double>((attrs.end - attrs.begin) * W);
      for (std::size_t pl = 0; pl < planes; ++pl) {
        double acc = 0.0;
        for (std::size_t row = attrs.begin; row < attrs.end; ++row)
          for (std::size_t col = 0; col < W; ++col) acc += x[(pl * H + row) * W + col];
        y[pl] = acc * inv;
      }
      break;
    }
  }
  return out;
}

void backward_primitive(OpKind kind, const std::vector<const Tensor*>& inputs,
                        const Tensor& output, const Tensor& grad_output,
                        const std::vector<Tensor*>& grads, const OpAttrs& attrs) {
  const auto g = grad_output.data();
  auto want = [&](std::size_t k) { return k < grads.size() && grads[k] != nullptr; };

  switch (kind) {
    case OpKind::input:
    case OpKind::parameter:
      break;
    case OpKind::matmul: {
      const Tensor &a = *inputs[0], &b = *inputs[1];
      const std::size_t n = a.dim(0), k = a.dim(1), m = b.dim(1);
      if (want(0)) kernels::matmul_nt(n, k, m, g, b.data(), grads[0]->data());
      if (want(1)) kernels::matmul_tn(n, k, m, a.data(), g, grads[1]->data());
      break;
    }
    case OpKind::add_bias: {
      const std::size_t m = inputs[0]->dim(1);
      if (want(0))
        for (std::size_t i = 0; i < g.size(); ++i) (*grads[0])[i] += g[i];
      if (want(1))
        for (std::size_t i = 0; i < g.size(); ++i) (*grads[1])[i % m] += g[i];
      break;
    }
    case OpKind::add:
    case OpKind::mul:
    case OpKind::div: {
      const Tensor &a = *inputs[0], &b = *inputs[1];
      const Broadcast mode = broadcast_mode(a.shape(), b.shape());
      const std::size_t cols = a.rank() == 2 ? a.dim(1) : 1;
      for (std::size_t i = 0; i < a.size(); ++i) {
        const std::size_t bi = broadcast_index(mode, i, cols);
        const double bv = b[bi];
        if (kind == OpKind::add) {
          if (want(0)) (*grads[0])[i] += g[i];
          if (want(1)) (*grads[1])[bi] += g[i];
        } else if (kind == OpKind::mul) {
          if (want(0)) (*grads[0])[i] += g[i] * bv;
          if (want(1)) (*grads[1])[bi] += g[i] * a[i];
        } else {
          // Quotient rule: d(a/b) = da / b - a db / b^2.
          if (want(0)) (*grads[0])[i] += g[i] / bv;
          if (want(1)) (*grads[1])[bi] -= g[i] * a[i] / (bv * bv);
        }
      }
      break;
    }
    case OpKind::scale:
      if (want(0))
        for (std::size_t i = 0; i < g.size(); ++i) (*grads[0])[i] += g[i] * attrs.scalar;
      break;
    case OpKind::relu:
    case OpKind::hinge:
      if (want(0))
        for (std::size_t i = 0; i < g.size(); ++i)
          if ((*inputs[0])[i] > 0.0) (*grads[0])[i] += g[i];
      break;
    case OpKind::sigmoid:
      if (want(0))
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double s = output[i];
          (*grads[0])[i] += g[i] * s * (1.0 - s);
        }
      break;
    case OpKind::sqrt:
      if (want(0))
        for (std::size_t i = 0; i < g.size(); ++i)
          if (output[i] > 0.0) (*grads[0])[i] += g[i] * 0.5 / output[i];
      break;
    case OpKind::mean_rows: {
      if (!want(0)) break;
      const std::size_t r = inputs[0]->dim(0), c = inputs[0]->dim(1);
      const double inv = 1.0 / static_cast<double>(r);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) (*grads[0])[i * c + j] += g[j] * inv;
      break;
    }
    case OpKind::sum_axis: {
      if (!want(0)) break;
      const std::size_t r = inputs[0]->dim(0), c = inputs[0]->dim(1);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j)
          (*grads[0])[i * c + j] += g[attrs.axis == 0 ? j : i];
      break;
    }
    case OpKind::concat: {
      const std::size_t out_cols = output.dim(1);
      std::size_t offset = 0;
      for (std::size_t k = 0; k < inputs.size(); ++k) {
        const Tensor* t = inputs[k];
        const std::size_t r = t->dim(0), c = t->dim(1);
        if (want(k)) {
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) {
              const std::size_t oi = attrs.axis == 0 ? i + offset : i;
              const std::size_t oj = attrs.axis == 0 ? j : j + offset;
              (*grads[k])[i * c + j] += g[oi * out_cols + oj];
            }
        }
        offset += t->dim(attrs.axis);
      }
      break;
    }
    case OpKind::transpose: {
      if (!want(0)) break;
      const std::size_t r = inputs[0]->dim(0), c = inputs[0]->dim(1);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) (*grads[0])[i * c + j] += g[j * r + i];
      break;
    }
    case OpKind::slice_rows: {
      if (!want(0)) break;
      const std::size_t stride = inputs[0]->size() / inputs[0]->dim(0);
      const std::size_t base = attrs.begin * stride;
      for (std::size_t i = 0; i < g.size(); ++i) (*grads[0])[base + i] += g[i];
      break;
    }
    case OpKind::l2_normalize: {
      if (!want(0)) break;
      const Tensor& x = *inputs[0];
      const std::size_t r = x.dim(0), c = x.dim(1);
      for (std::size_t i = 0; i < r; ++i) {
        double ss = 0.0;
        for (std::size_t j = 0; j < c; ++j) ss += x[i * c + j] * x[i * c + j];
        const double raw = std::sqrt(ss);
        if (raw < kNormFloor) {
          // Below the floor the map is linear: y = x / floor.
          for (std::size_t j = 0; j < c; ++j) (*grads[0])[i * c + j] += g[i * c + j] / kNormFloor;
          continue;
        }
        double yg = 0.0;
        for (std::size_t j = 0; j < c; ++j) yg += output[i * c + j] * g[i * c + j];
        for (std::size_t j = 0; j < c; ++j)
          (*grads[0])[i * c + j] += (g[i * c + j] - output[i * c + j] * yg) / raw;
      }
      break;
    }
    case OpKind::squared_l2_distance: {
      const Tensor &a = *inputs[0], &b = *inputs[1];
      const std::size_t r = a.dim(0), c = a.dim(1);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) {
          const double d = 2.0 * (a[i * c + j] - b[i * c + j]) * g[i];
          if (want(0)) (*grads[0])[i * c + j] += d;
          if (want(1)) (*grads[1])[i * c + j] -= d;
        }
      break;
    }
    case OpKind::softmax_cross_entropy: {
      if (!want(0)) break;
      const Tensor& z = *inputs[0];
      const std::size_t r = z.dim(0), c = z.dim(1);
      const double scale = g[0] / static_cast<double>(r);
      for (std::size_t i = 0; i < r; ++i) {
        const double* row = z.data().data() + i * c;
        const double mx = *std::max_element(row, row + c);
        double se = 0.0;
        for (std::size_t j = 0; j < c; ++j) se += std::exp(row[j] - mx);
        for (std::size_t j = 0; j < c; ++j) {
          const double p = std::exp(row[j] - mx) / se;
          (*grads[0])[i * c + j] += scale * (p - (j == attrs.labels[i] ? 1.0 : 0.0));
        }
      }
      break;
    }
    case OpKind::conv2d: {
      const Tensor &x = *inputs[0], &w = *inputs[1];
      const auto d = conv_dims(x.shape(), w.shape());
      if (want(0)) kernels::conv2d_backward_input(d, g, w.data(), grads[0]->data());
      if (want(1) || want(2)) {
        // The kernel fills both; route unwanted halves to scratch.
        Tensor dw_scratch, db_scratch;
        std::span<double> dw, db;
        if (want(1)) {
          dw = grads[1]->data();
        } else {
          dw_scratch = Tensor(w.shape());
          dw = dw_scratch.data();
        }
        if (want(2)) {
          db = grads[2]->data();
        } else {
          db_scratch = Tensor({w.dim(0)});
          db = db_scratch.data();
        }
        kernels::conv2d_backward_params(d, g, x.data(), dw, db);
      }
      break;
    }
    case OpKind::avg_pool: {
      if (!want(0)) break;
      const Tensor& x = *inputs[0];
      const std::size_t p = attrs.window, H = x.dim(2), W = x.dim(3);
      const std::size_t oh = output.dim(2), ow = output.dim(3);
      const std::size_t planes = x.dim(0) * x.dim(1);
      const double inv = 1.0 / static_cast<double>(p * p);
      for (std::size_t pl = 0; pl < planes; ++pl)
        for (std::size_t oy = 0; oy < oh; ++oy)
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const double gv = g[(pl * oh + oy) * ow + ox] * inv;
            for (std::size_t dy = 0; dy < p; ++dy)
              for (std::size_t dx = 0; dx < p; ++dx)
                (*grads[0])[(pl * H + oy * p + dy) * W + ox * p + dx] += gv;
          }
      break;
    }
    case OpKind::region_pool: {
      if (!want(0)) break;
      const Tensor& x = *inputs[0];
      const std::size_t H = x.dim(2), W = x.dim(3);
      const std::size_t planes = x.dim(0) * x.dim(1);
      const double inv = 1.0 / static_cast<double>((attrs.end - attrs.begin) * W);
      for (std::size_t pl = 0; pl < planes; ++pl) {
        const double gv = g[pl] * inv;
        for (std::size_t row = attrs.begin; row < attrs.end; ++row)
          for (std::size_t col = 0; col < W; ++col) (*grads[0])[(pl * H + row) * W + col] += gv;
      }
      break;
    }
  }
}

}  // namespace rqen
