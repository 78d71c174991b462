#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "lsbpan/nn/tensor.hpp"

namespace lsbpan::nn {

// A value in the computation graph. Leaves with requires_grad are trainable
// parameters; interior nodes carry a closure that pushes their gradient to
// their parents.
struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  Tensor& grad_buffer() {
    if (grad.empty()) grad = Tensor::zeros_like(value);
    return grad;
  }
  Node& parent(std::size_t i) { return *parents[i]; }
};

using Var = std::shared_ptr<Node>;

Var constant(Tensor value);
Var parameter(Tensor value);

// Records `fn` when gradients are enabled and some parent needs one.
Var make_node(Tensor value, std::vector<Var> parents, std::function<void(Node&)> fn);

// Accumulates d(root)/d(leaf) into every reachable leaf's grad. `root` must
// hold a single element.
void backward(const Var& root);

bool grad_enabled();

// Disables graph recording for its lifetime (inference).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

}  // namespace lsbpan::nn
