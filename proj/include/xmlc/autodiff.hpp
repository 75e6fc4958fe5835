#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "xmlc/tensor.hpp"

namespace xmlc {

// A trainable weight. The tape never owns parameters; it binds leaves to them
// and writes gradients back on request.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;

  Parameter() = default;
  Parameter(std::string n, Tensor v)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}
  void zero_grad() { grad = Tensor(value.shape()); }
};

class Tape;

// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  Tape& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Reverse-mode gradient tape. Nodes are appended in evaluation order, so the
// insertion order is already topological and backward is a reverse sweep.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  // record_grad=false builds values only (inference).
  explicit Tape(bool record_grad = true) : record_grad_(record_grad) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var input(Tensor value);  // differentiable leaf, read back with grad()
  Var param(Parameter& p);

  Var record(Tensor value, std::vector<std::size_t> inputs, BackwardFn fn);

  // Seeds d(loss)/d(loss) = 1 and sweeps. Loss must be a single element.
  void backward(Var loss);
  // Seeds an arbitrary upstream gradient on `out`.
  void backward(Var out, const Tensor& seed);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  const Tensor* grad(Var v) const;
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  // Zero-initialised on first touch.
  Tensor& grad_buffer(std::size_t id);
  const std::vector<std::size_t>& inputs(std::size_t id) const {
    return nodes_[id].inputs;
  }

  // Adds every bound parameter's leaf gradient into Parameter::grad.
  void accumulate_param_grads();

  std::size_t size() const noexcept { return nodes_.size(); }
  // Drops every node from `size` on; handles past that point become invalid.
  // Lets inference reuse one tape across many documents.
  void rewind(std::size_t size);
  bool records_grad() const noexcept { return record_grad_; }

 private:
  struct Node {
    Tensor value;
    std::optional<Tensor> grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
    Parameter* param = nullptr;
  };

  void sweep();

  std::deque<Node> nodes_;
  std::vector<std::size_t> param_leaves_;
  bool record_grad_;
  bool backward_done_ = false;
};

}  // namespace xmlc
