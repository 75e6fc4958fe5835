#include "xmlc/autodiff.hpp"

#include "xmlc/errors.hpp"

namespace xmlc {

const Tensor& Var::value() const { return tape_->value(id_); }

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), std::nullopt, {}, nullptr, false, nullptr});
  return Var(this, nodes_.size() - 1);
}

Var Tape::input(Tensor value) {
  nodes_.push_back(
      Node{std::move(value), std::nullopt, {}, nullptr, record_grad_, nullptr});
  return Var(this, nodes_.size() - 1);
}

Var Tape::param(Parameter& p) {
  const bool rg = record_grad_ && p.trainable;
  nodes_.push_back(Node{p.value, std::nullopt, {}, nullptr, rg, rg ? &p : nullptr});
  if (rg) param_leaves_.push_back(nodes_.size() - 1);
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::vector<std::size_t> inputs, BackwardFn fn) {
  bool rg = false;
  if (record_grad_) {
    for (std::size_t in : inputs) rg = rg || nodes_[in].requires_grad;
  }
  if (!rg) {
    inputs.clear();
    fn = nullptr;
  }
  nodes_.push_back(Node{std::move(value), std::nullopt, std::move(inputs),
                        std::move(fn), rg, nullptr});
  return Var(this, nodes_.size() - 1);
}

void Tape::backward(Var loss) {
  if (loss.value().size() != 1) {
    throw ArgumentError("backward() needs a scalar loss, got shape " +
                        to_string(loss.shape()));
  }
  backward(loss, Tensor(loss.shape(), 1.0));
}

void Tape::backward(Var out, const Tensor& seed) {
  if (&out.tape() != this) throw ArgumentError("variable belongs to another tape");
  if (!record_grad_) throw ArgumentError("backward() on a tape built without gradients");
  if (backward_done_) throw ArgumentError("backward() called twice on the same tape");
  if (seed.shape() != out.shape()) {
    throw DimensionError("seed gradient " + to_string(seed.shape()) +
                         " does not match output " + to_string(out.shape()));
  }
  backward_done_ = true;
  if (!nodes_[out.id()].requires_grad) return;
  grad_buffer(out.id()) += seed;
  // Nodes after `out` cannot contribute to it.
  nodes_.resize(out.id() + 1);
  sweep();
}

void Tape::rewind(std::size_t size) {
  if (size > nodes_.size()) throw ArgumentError("cannot rewind a tape forward");
  if (backward_done_) throw ArgumentError("cannot rewind after backward()");
  nodes_.resize(size);
  while (!param_leaves_.empty() && param_leaves_.back() >= size) param_leaves_.pop_back();
}

void Tape::sweep() {
  for (std::size_t id = nodes_.size(); id-- > 0;) {
    Node& node = nodes_[id];
    if (node.backward && node.grad) node.backward(*this, id);
  }
}

const Tensor* Tape::grad(Var v) const {
  const auto& g = nodes_[v.id()].grad;
  return g ? &*g : nullptr;
}

Tensor& Tape::grad_buffer(std::size_t id) {
  Node& node = nodes_[id];
  if (!node.grad) node.grad.emplace(node.value.shape());
  return *node.grad;
}

void Tape::accumulate_param_grads() {
  for (std::size_t id : param_leaves_) {
    if (id >= nodes_.size()) continue;
    Node& node = nodes_[id];
    if (!node.grad) continue;
    if (node.param->grad.shape() != node.param->value.shape()) node.param->zero_grad();
    node.param->grad += *node.grad;
  }
}

}  // namespace xmlc
