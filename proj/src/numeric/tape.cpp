#include "agg/numeric/tape.hpp"

#include "agg/error.hpp"

namespace agg::nn {

const Matrix& Var::value() const { return tape_->value(id_); }

double Var::scalar() const {
  const Matrix& v = value();
  require(v.size() == 1, ErrorKind::dimension, "scalar() on a non-1x1 value");
  return v(0, 0);
}

bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::param(ParamTensor& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var(this, it->second);
  Node n;
  n.param = &p;
  n.requires_grad = !frozen_.contains(&p);
  nodes_.push_back(std::move(n));
  param_nodes_.emplace(&p, nodes_.size() - 1);
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Matrix value, std::initializer_list<Var> inputs, BackwardFn fn) {
  bool needs = false;
  for (const Var& v : inputs) {
    require(v.tape_ == this, ErrorKind::input, "op mixes values from different tapes");
    needs = needs || nodes_[v.id_].requires_grad;
  }
  Node n;
  n.value = std::move(value);
  n.requires_grad = needs;
  if (needs) n.fn = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Matrix value, const std::vector<Var>& inputs, BackwardFn fn) {
  bool needs = false;
  for (const Var& v : inputs) {
    require(v.tape_ == this, ErrorKind::input, "op mixes values from different tapes");
    needs = needs || nodes_[v.id_].requires_grad;
  }
  Node n;
  n.value = std::move(value);
  n.requires_grad = needs;
  if (needs) n.fn = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

const Matrix& Tape::value(std::size_t id) const {
  const Node& n = nodes_[id];
  return n.param != nullptr ? n.param->value() : n.value;
}

void Tape::backward(Var loss) {
  require(loss.tape_ == this, ErrorKind::input, "backward on a value from another tape");
  require(value(loss.id_).size() == 1, ErrorKind::dimension, "backward needs a scalar loss");
  for (Node& n : nodes_) {
    n.has_grad = false;
    n.grad.resize(0, 0);
  }
  if (!nodes_[loss.id_].requires_grad) return;
  accumulate(loss.id_, Matrix::Ones(1, 1));
  for (std::size_t i = loss.id_ + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.has_grad) continue;
    if (n.param != nullptr) {
      n.param->accumulate_grad(n.grad);
    } else if (n.fn) {
      n.fn(*this, i);
    }
  }
}

}  // namespace agg::nn
