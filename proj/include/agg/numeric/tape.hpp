#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "agg/numeric/param_tensor.hpp"

namespace agg::nn {

class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const;

  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }
  bool requires_grad() const;

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Reverse-mode recorder. Every op appends a node holding its value and a
// closure that pushes the node's gradient into its inputs.
//
// Parameter leaves read through to the ParamTensor, so parameters must not be
// mutated while a tape that references them is still in use. One tape per
// thread; a frozen model may be shared by several tapes concurrently.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var param(ParamTensor& p);
  // Later param(p) calls on this tape read p's value but record no gradient.
  void freeze(const ParamTensor& p) { frozen_.insert(&p); }

  // Appends an op node. `fn` is only stored when some input needs a gradient.
  Var record(Matrix value, std::initializer_list<Var> inputs, BackwardFn fn);
  Var record(Matrix value, const std::vector<Var>& inputs, BackwardFn fn);

  const Matrix& value(std::size_t id) const;
  const Matrix& grad(std::size_t id) const { return nodes_[id].grad; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  // Adds `g` into the gradient of node `id`; no-op for constants.
  template <typename Expr>
  void accumulate(std::size_t id, const Expr& g) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (!n.has_grad) {
      n.grad = g;
      n.has_grad = true;
    } else {
      n.grad += g;
    }
  }

  // Runs the reverse sweep from a 1x1 loss and adds the results into each
  // participating ParamTensor's grad. Calling it again accumulates again.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

  // Sign pattern of every relu / leaky-relu input seen while tracking is on.
  // Two evaluations with equal patterns lie on the same linear piece.
  void track_kinks(bool on) { track_kinks_ = on; }
  void note_kinks(const Matrix& input) {
    if (!track_kinks_) return;
    for (Eigen::Index i = 0; i < input.size(); ++i) kink_signs_.push_back(input.data()[i] > 0.0);
  }
  const std::vector<bool>& kink_signs() const { return kink_signs_; }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    BackwardFn fn;
    ParamTensor* param = nullptr;
    bool requires_grad = false;
    bool has_grad = false;
  };

  std::vector<Node> nodes_;
  std::unordered_map<const ParamTensor*, std::size_t> param_nodes_;
  std::unordered_set<const ParamTensor*> frozen_;
  bool track_kinks_ = false;
  std::vector<bool> kink_signs_;
};

}  // namespace agg::nn
