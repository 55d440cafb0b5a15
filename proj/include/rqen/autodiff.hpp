#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "rqen/tensor.hpp"

// Minimal define-then-run computation graph with reverse-mode gradients.
//
// A Graph records nodes while the model is being assembled (shapes are
// checked at that point), evaluates them in insertion order on forward(), and
// propagates gradients back to the parameter accumulators on backward().
// Parameter nodes read their ParamStore entry on every forward(), so a graph
// can be re-evaluated after parameters change without rebuilding it.

namespace rqen {

enum class OpKind {
  input,
  parameter,
  matmul,                 // [N,K] x [K,M] -> [N,M]
  add_bias,               // [N,M] + [M] -> [N,M]
  add,                    // elementwise, second operand may broadcast
  mul,                    // elementwise, second operand may broadcast
  div,                    // elementwise, second operand may broadcast
  scale,                  // x * attrs.scalar
  relu,
  sigmoid,
  sqrt,                   // subgradient 0 at 0
  hinge,                  // max(x, 0)
  mean_rows,              // [R,C] -> [1,C]
  sum_axis,               // [N,M] -> [1,M] (axis 0) or [N,1] (axis 1)
  concat,                 // 2-D, along attrs.axis
  transpose,              // 2-D
  slice_rows,             // leading axis [begin, end)
  l2_normalize,           // each row of [N,D] to unit norm
  squared_l2_distance,    // rows of [N,D], [N,D] -> [N,1]
  softmax_cross_entropy,  // logits [N,C], attrs.labels -> [1,1] mean
  conv2d,                 // x[N,Ci,H,W], w[Co,Ci,K,K], b[Co] -> [N,Co,H,W]
  avg_pool,               // [N,C,H,W] -> [N,C,H/p,W/p], p = attrs.window
  region_pool,            // [N,C,H,W] -> [N,C], mean over rows [begin, end)
};

std::string_view op_name(OpKind kind);

struct OpAttrs {
  double scalar = 1.0;
  std::size_t axis = 0;
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t window = 2;
  std::vector<std::size_t> labels;
};

// Output shape of `kind` applied to `inputs`; throws ShapeError naming the
// kind and the offending shapes.
Shape infer_shape(OpKind kind, const std::vector<const Shape*>& inputs, const OpAttrs& attrs);

Tensor forward_primitive(OpKind kind, const std::vector<const Tensor*>& inputs,
                         const OpAttrs& attrs = {});

// Accumulates d(loss)/d(input_k) into grads[k] (skipped when null) given the
// upstream gradient of the primitive's output.
void backward_primitive(OpKind kind, const std::vector<const Tensor*>& inputs,
                        const Tensor& output, const Tensor& grad_output,
                        const std::vector<Tensor*>& grads, const OpAttrs& attrs = {});

// Named trainable arrays with matching gradient accumulators. Iteration order
// is the lexicographic order of names.
class ParamStore {
 public:
  void add(const std::string& name, Tensor value);
  bool contains(const std::string& name) const { return entries_.count(name) != 0; }

  Tensor& value(const std::string& name);
  const Tensor& value(const std::string& name) const;
  Tensor& grad(const std::string& name);
  const Tensor& grad(const std::string& name) const;

  std::vector<std::string> names() const;
  std::size_t scalar_count() const;
  std::size_t size() const { return entries_.size(); }
  void zero_grad();

  bool operator==(const ParamStore& other) const;

 private:
  struct Entry {
    Tensor value;
    Tensor grad;
    bool operator==(const Entry&) const = default;
  };
  std::map<std::string, Entry> entries_;
};

class Graph;

struct Var {
  Graph* graph = nullptr;
  std::size_t id = 0;

  const Shape& shape() const;
  const Tensor& value() const;
};

class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var input(Tensor value, bool requires_grad = false);
  Var parameter(ParamStore& store, const std::string& name);
  // Read-only parameter: takes part in forward() but receives no gradient.
  Var parameter(const ParamStore& store, const std::string& name);
  Var apply(OpKind kind, const std::vector<Var>& inputs, OpAttrs attrs = {});

  // Replaces the value of an input node; the graph must be re-evaluated.
  void set_input(Var v, Tensor value);

  // Evaluates every node; throws NumericError on the first non-finite value.
  void forward();
  bool evaluated() const { return evaluated_; }

  // Reverse sweep from a scalar node. Gradients of parameter nodes are added
  // to their ParamStore accumulators.
  void backward(Var loss);

  // Which side of its kink every input of a relu, hinge or sqrt node was on
  // during the last forward(). Two evaluations with equal patterns lie on the
  // same smooth piece of the loss.
  std::vector<bool> kink_pattern() const;

  const Shape& shape(Var v) const { return node(v).shape; }
  const Tensor& value(Var v) const;
  const Tensor& grad(Var v) const;
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    OpKind kind = OpKind::input;
    std::vector<std::size_t> inputs;
    OpAttrs attrs;
    Shape shape;
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    const ParamStore* store = nullptr;
    ParamStore* grad_store = nullptr;  // null for read-only parameters
    std::string param_name;
  };

  const Node& node(Var v) const;
  Var push(Node n);

  std::vector<Node> nodes_;
  std::map<std::pair<const ParamStore*, std::string>, std::size_t> param_nodes_;
  bool evaluated_ = false;
  bool has_grads_ = false;
};

// Graph-building shorthands.
namespace ad {

Var matmul(Var a, Var b);
Var add_bias(Var x, Var bias);
Var add(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var scale(Var x, double factor);
Var relu(Var x);
Var sigmoid(Var x);
Var sqrt(Var x);
Var hinge(Var x);
Var mean_rows(Var x);
Var sum_axis(Var x, std::size_t axis);
Var concat(const std::vector<Var>& parts, std::size_t axis);
Var transpose(Var x);
Var slice_rows(Var x, std::size_t begin, std::size_t end);
Var l2_normalize(Var x);
Var squared_l2_distance(Var a, Var b);
Var softmax_cross_entropy(Var logits, std::vector<std::size_t> labels);
Var conv2d(Var x, Var weight, Var bias);
Var avg_pool(Var x, std::size_t window);
Var region_pool(Var x, std::size_t row_begin, std::size_t row_end);

}  // namespace ad

}  // namespace rqen
