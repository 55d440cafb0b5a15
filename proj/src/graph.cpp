#include <stdexcept>

#include "rqen/autodiff.hpp"
#include "rqen/errors.hpp"

namespace rqen {

void ParamStore::add(const std::string& name, Tensor value) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter name '" + name + "'");
  Tensor grad(value.shape());
  entries_.emplace(name, Entry{std::move(value), std::move(grad)});
}

namespace {
template <typename Map>
auto& lookup(Map& entries, const std::string& name) {
  auto it = entries.find(name);
  if (it == entries.end()) throw std::out_of_range("unknown parameter '" + name + "'");
  return it->second;
}
}  // namespace

Tensor& ParamStore::value(const std::string& name) { return lookup(entries_, name).value; }
const Tensor& ParamStore::value(const std::string& name) const {
  return lookup(entries_, name).value;
}
Tensor& ParamStore::grad(const std::string& name) { return lookup(entries_, name).grad; }
const Tensor& ParamStore::grad(const std::string& name) const {
  return lookup(entries_, name).grad;
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, _] : entries_) out.push_back(name);
  return out;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, e] : entries_) n += e.value.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& [_, e] : entries_) e.grad.fill(0.0);
}

bool ParamStore::operator==(const ParamStore& other) const { return entries_ == other.entries_; }

const Shape& Var::shape() const { return graph->shape(*this); }
const Tensor& Var::value() const { return graph->value(*this); }

const Graph::Node& Graph::node(Var v) const {
  if (v.graph != this || v.id >= nodes_.size()) {
    throw std::invalid_argument("variable does not belong to this graph");
  }
  return nodes_[v.id];
}

Var Graph::push(Node n) {
  nodes_.push_back(std::move(n));
  evaluated_ = false;
  return Var{this, nodes_.size() - 1};
}

Var Graph::input(Tensor value, bool requires_grad) {
  Node n;
  n.kind = OpKind::input;
  n.shape = value.shape();
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  return push(std::move(n));
}

Var Graph::parameter(ParamStore& store, const std::string& name) {
  Var v = parameter(static_cast<const ParamStore&>(store), name);
  Node& n = nodes_[v.id];
  n.requires_grad = true;
  n.grad_store = &store;
  return v;
}

Var Graph::parameter(const ParamStore& store, const std::string& name) {
  const auto key = std::make_pair(&store, name);
  if (auto it = param_nodes_.find(key); it != param_nodes_.end()) return Var{this, it->second};
  Node n;
  n.kind = OpKind::parameter;
  n.shape = store.value(name).shape();
  n.store = &store;
  n.param_name = name;
  Var v = push(std::move(n));
  param_nodes_.emplace(key, v.id);
  return v;
}

Var Graph::apply(OpKind kind, const std::vector<Var>& inputs, OpAttrs attrs) {
  Node n;
  n.kind = kind;
  std::vector<const Shape*> shapes;
  for (Var v : inputs) {
    const Node& in = node(v);
    shapes.push_back(&in.shape);
    n.inputs.push_back(v.id);
    n.requires_grad = n.requires_grad || in.requires_grad;
  }
  n.shape = infer_shape(kind, shapes, attrs);
  n.attrs = std::move(attrs);
  return push(std::move(n));
}

void Graph::set_input(Var v, Tensor value) {
  node(v);
  Node& n = nodes_[v.id];
  if (n.kind != OpKind::input) throw std::invalid_argument("set_input on a non-input node");
  if (value.shape() != n.shape) {
    throw ShapeError("set_input: expected " + shape_string(n.shape) + ", got " +
                     shape_string(value.shape()));
  }
  n.value = std::move(value);
  evaluated_ = false;
}

void Graph::forward() {
  std::vector<const Tensor*> args;
  for (Node& n : nodes_) {
    if (n.kind == OpKind::parameter) {
      const Tensor& v = n.store->value(n.param_name);
      if (v.shape() != n.shape) {
        throw ShapeError("parameter '" + n.param_name + "' changed shape since graph build");
      }
      n.value = v;
    } else if (n.kind != OpKind::input) {
      args.clear();
      for (std::size_t id : n.inputs) args.push_back(&nodes_[id].value);
      n.value = forward_primitive(n.kind, args, n.attrs);
    }
    if (!n.value.all_finite()) {
      evaluated_ = false;
      throw NumericError(std::string("non-finite value produced by ") +
                         std::string(op_name(n.kind)) +
                         (n.param_name.empty() ? "" : " '" + n.param_name + "'"));
    }
  }
  evaluated_ = true;
  has_grads_ = false;
}

void Graph::backward(Var loss) {
  const Node& root = node(loss);
  if (!evaluated_) throw std::logic_error("backward called before forward");
  if (root.value.size() != 1) {
    throw ShapeError("backward needs a scalar loss, got " + shape_string(root.shape));
  }
  for (std::size_t i = 0; i <= loss.id; ++i) {
    Node& n = nodes_[i];
    if (n.requires_grad) {
      if (n.grad.shape() != n.shape) {
        n.grad = Tensor(n.shape);
      } else {
        n.grad.fill(0.0);
      }
    }
  }
  nodes_[loss.id].grad.fill(1.0);

  std::vector<const Tensor*> args;
  std::vector<Tensor*> grads;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad) continue;
    if (n.kind == OpKind::parameter) {
      Tensor& acc = n.grad_store->grad(n.param_name);
      for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += n.grad[k];
      continue;
    }
    if (n.kind == OpKind::input) continue;
    args.clear();
    grads.clear();
    for (std::size_t id : n.inputs) {
      args.push_back(&nodes_[id].value);
      grads.push_back(nodes_[id].requires_grad ? &nodes_[id].grad : nullptr);
    }
    backward_primitive(n.kind, args, n.value, n.grad, grads, n.attrs);
  }
  has_grads_ = true;
}

std::vector<bool> Graph::kink_pattern() const {
  if (!evaluated_) throw std::logic_error("kink pattern requested before forward");
  std::vector<bool> out;
  for (const Node& n : nodes_) {
    if (n.kind != OpKind::relu && n.kind != OpKind::hinge && n.kind != OpKind::sqrt) continue;
    for (double x : nodes_[n.inputs[0]].value.data()) out.push_back(x > 0.0);
  }
  return out;
}

const Tensor& Graph::value(Var v) const {
  const Node& n = node(v);
  if (!evaluated_ && n.kind != OpKind::input) {
    throw std::logic_error("value requested before forward");
  }
  return n.value;
}

const Tensor& Graph::grad(Var v) const {
  const Node& n = node(v);
  if (!has_grads_ || !n.requires_grad) {
    throw std::logic_error("no gradient available for this node");
  }
  return n.grad;
}

namespace ad {

namespace {
Var op(OpKind kind, const std::vector<Var>& in, OpAttrs attrs = {}) {
  if (in.empty() || in[0].graph == nullptr) throw std::invalid_argument("detached variable");
  return in[0].graph->apply(kind, in, std::move(attrs));
}
}  // namespace

Var matmul(Var a, Var b) { return op(OpKind::matmul, {a, b}); }
Var add_bias(Var x, Var bias) { return op(OpKind::add_bias, {x, bias}); }
Var add(Var a, Var b) { return op(OpKind::add, {a, b}); }
Var mul(Var a, Var b) { return op(OpKind::mul, {a, b}); }
Var div(Var a, Var b) { return op(OpKind::div, {a, b}); }
Var scale(Var x, double factor) {
  OpAttrs a;
  a.scalar = factor;
  return op(OpKind::scale, {x}, a);
}
Var relu(Var x) { return op(OpKind::relu, {x}); }
Var sigmoid(Var x) { return op(OpKind::sigmoid, {x}); }
Var sqrt(Var x) { return op(OpKind::sqrt, {x}); }
Var hinge(Var x) { return op(OpKind::hinge, {x}); }
Var mean_rows(Var x) { return op(OpKind::mean_rows, {x}); }
Var sum_axis(Var x, std::size_t axis) {
  OpAttrs a;
  a.axis = axis;
  return op(OpKind::sum_axis, {x}, a);
}
Var concat(const std::vector<Var>& parts, std::size_t axis) {
  OpAttrs a;
  a.axis = axis;
  return op(OpKind::concat, parts, a);
}
Var transpose(Var x) { return op(OpKind::transpose, {x}); }
Var slice_rows(Var x, std::size_t begin, std::size_t end) {
  OpAttrs a;
  a.begin = begin;
  a.end = end;
  return op(OpKind::slice_rows, {x}, a);
}
Var l2_normalize(Var x) { return op(OpKind::l2_normalize, {x}); }
Var squared_l2_distance(Var a, Var b) { return op(OpKind::squared_l2_distance, {a, b}); }
Var softmax_cross_entropy(Var logits, std::vector<std::size_t> labels) {
  OpAttrs a;
  a.labels = std::move(labels);
  return op(OpKind::softmax_cross_entropy, {logits}, a);
}
Var conv2d(Var x, Var weight, Var bias) { return op(OpKind::conv2d, {x, weight, bias}); }
Var avg_pool(Var x, std::size_t window) {
  OpAttrs a;
  a.window = window;
  return op(OpKind::avg_pool, {x}, a);
}
Var region_pool(Var x, std::size_t row_begin, std::size_t row_end) {
  OpAttrs a;
  a.begin = row_begin;
  a.end = row_end;
  return op(OpKind::region_pool, {x}, a);
}

}  // namespace ad

}  // namespace rqen
