#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "astn/tensor.hpp"

namespace astn::ag {

// Records executed primitives in execution order (which is a topological
// order of the DAG) and replays them once, in reverse, on backward().
// One tape per forward/backward pass; not shared across threads.
template <typename T>
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}

  bool recording() const { return recording_; }
  std::size_t size() const { return nodes_.size(); }

  void record(Tensor<T> out, std::function<void()> backward) {
    nodes_.push_back(Node{std::move(out), std::move(backward)});
  }

  // Seeds d(loss)/d(loss)=1 and accumulates gradients into every tensor on
  // the path to a requires_grad leaf. A second call is an error: gradients
  // would silently double-accumulate otherwise.
  void backward(const Tensor<T>& loss) {
    if (!recording_) throw std::logic_error("backward: tape was created non-recording");
    if (backward_called_) throw std::logic_error("backward: already called on this tape");
    if (loss.numel() != 1)
      throw std::invalid_argument("backward: loss must be scalar, got " + shape_str(loss.shape()));
    if (!loss.needs_grad())
      throw std::logic_error("backward: loss does not depend on any requires_grad tensor");
    backward_called_ = true;
    loss.data()->grad.assign(1, T(1));
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      // Nodes whose output never received a gradient contribute nothing.
      if (!it->out.has_grad()) continue;
      it->backward();
    }
  }

  bool backward_called() const { return backward_called_; }

 private:
  struct Node {
    Tensor<T> out;  // keeps the subgraph alive
    std::function<void()> backward;
  };
  std::vector<Node> nodes_;
  bool recording_ = true;
  bool backward_called_ = false;
};

}  // namespace astn::ag
