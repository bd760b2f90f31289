#include "compnet/tape.hpp"

#include <string>

#include "compnet/error.hpp"

namespace compnet::ad {

const Tensor& Var::value() const { return tape().value(id_); }

bool Var::tracked() const { return tape().tracked(id_); }

Tape& Var::tape() const {
  if (tape_ == nullptr) {
    throw TapeError("use of an unbound Var");
  }
  return *tape_;
}

const Tensor& Gradients::operator[](const Var& v) const { return at(v.id()); }

const Tensor& Gradients::at(NodeId id) const {
  if (!has(id)) {
    throw TapeError("no gradient for node " + std::to_string(id) + " (untracked)");
  }
  return *grads_[id];
}

Var Tape::leaf(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, true});
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, false});
  return Var(this, nodes_.size() - 1);
}

void Tape::check_owned(const Var& v) const {
  if (&v.tape() != this || v.id() >= nodes_.size()) {
    throw TapeError("Var does not belong to this tape");
  }
}

Var Tape::record(Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  Node node{std::move(value), {}, std::move(backward), false};
  node.inputs.reserve(inputs.size());
  for (const Var& in : inputs) {
    check_owned(in);
    node.inputs.push_back(in.id());
    node.tracked = node.tracked || nodes_[in.id()].tracked;
  }
  if (!node.tracked) {
    node.backward = nullptr;
  }
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Gradients Tape::backward(const Var& loss) const {
  check_owned(loss);
  const Node& root = nodes_[loss.id()];
  if (root.value.size() != 1) {
    throw ShapeError("backward needs a scalar loss, got shape " + to_string(root.value.shape()));
  }
  if (!root.tracked) {
    throw TapeError("loss does not depend on any tracked leaf");
  }

  Gradients out;
  out.grads_.resize(nodes_.size());
  out.grads_[loss.id()] = Tensor::full(root.value.shape(), 1.0);

  std::vector<Tensor*> slots;
  for (NodeId id = loss.id() + 1; id-- > 0;) {
    const Node& node = nodes_[id];
    if (!node.tracked || !out.grads_[id] || !node.backward) {
      continue;
    }
    slots.assign(node.inputs.size(), nullptr);
    for (std::size_t i = 0; i < node.inputs.size(); ++i) {
      const NodeId in = node.inputs[i];
      if (!nodes_[in].tracked) continue;
      if (!out.grads_[in]) {
        out.grads_[in] = Tensor::zeros(nodes_[in].value.shape());
      }
      slots[i] = &*out.grads_[in];
    }
    node.backward(*out.grads_[id], slots);
  }

  // Tracked nodes the loss never reached still get a (zero) gradient.
  for (NodeId id = 0; id < nodes_.size(); ++id) {
    if (nodes_[id].tracked && !out.grads_[id]) {
      out.grads_[id] = Tensor::zeros(nodes_[id].value.shape());
    }
  }
  return out;
}

}  // namespace compnet::ad
