#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "compnet/tensor.hpp"

namespace compnet::ad {

using NodeId = std::size_t;

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid as long as the
/// tape it points into is alive.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  NodeId id() const noexcept { return id_; }
  bool tracked() const;
  Tape& tape() const;
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, NodeId id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  NodeId id_ = 0;
};

/// Reverse-mode gradients produced by Tape::backward.
class Gradients {
 public:
  /// Gradient of the loss with respect to `v`. Tracked nodes the loss does
  /// not depend on yield zeros; untracked nodes throw TapeError.
  const Tensor& operator[](const Var& v) const;
  const Tensor& at(NodeId id) const;
  bool has(NodeId id) const { return id < grads_.size() && grads_[id].has_value(); }

 private:
  friend class Tape;
  std::vector<std::optional<Tensor>> grads_;
};

/// Records operations in execution order so that the reverse sweep is a plain
/// backwards walk over the node list.
class Tape {
 public:
  /// Accumulates the gradient of one recorded op into its inputs. The span
  /// holds one slot per input; untracked inputs get nullptr.
  using BackwardFn = std::function<void(const Tensor& grad_out, std::span<Tensor* const> input_grads)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that receives a gradient.
  Var leaf(Tensor value);
  /// Leaf excluded from differentiation (input data, designed features).
  Var constant(Tensor value);
  /// Result of an operation; tracked iff any input is tracked.
  Var record(Tensor value, std::vector<Var> inputs, BackwardFn backward);

  Gradients backward(const Var& loss) const;

  const Tensor& value(NodeId id) const { return nodes_.at(id).value; }
  bool tracked(NodeId id) const { return nodes_.at(id).tracked; }
  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    std::vector<NodeId> inputs;
    BackwardFn backward;
    bool tracked = false;
  };

  void check_owned(const Var& v) const;

  std::vector<Node> nodes_;
};

}  // namespace compnet::ad
