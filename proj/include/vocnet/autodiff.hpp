#pragma once

// Define-by-run reverse-mode differentiation over Tensor values.
//
// A Tape is rebuilt for every training step. Each recorded node keeps its
// value, the ids of its inputs and a closure that pushes its gradient to
// those inputs. Nodes are appended in evaluation order, so the node list is
// already topologically sorted and backward() is a single reverse sweep.

#include <cstddef>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "vocnet/tensor.hpp"

namespace vocnet {

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string name, Tensor value)
      : name(std::move(name)), value(std::move(value)), grad(this->value.shape()) {}

  void zero_grad() { grad = Tensor(value.shape()); }
};

class Tape;

// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t id() const { return id_; }
  Tape& tape() const { return *tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaf that does not receive gradients.
  Var constant(Tensor value);
  // Leaf that receives gradients but is not tied to a Parameter.
  Var watch(Tensor value);
  // Leaf whose gradient is added to p.grad by backward().
  Var parameter(Parameter& p);

  Var record(Tensor value, std::vector<std::size_t> inputs, Backward backward);

  // Seeds d(loss)/d(loss) = 1 and sweeps the tape in reverse. Throws
  // ContractViolation if loss is not a single element.
  void backward(const Var& loss);

  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  // Gradient accumulated at a node; all-zero when nothing reached it.
  Tensor grad(std::size_t id) const;
  Tensor grad(const Var& v) const { return grad(v.id()); }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  void accumulate(std::size_t id, const Tensor& g);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<std::size_t> inputs;
    Backward backward;
    Parameter* parameter = nullptr;
    bool requires_grad = false;
  };

  std::vector<Node> nodes_;
};

inline const Tensor& Var::value() const { return tape_->value(id_); }

namespace ad {

Var conv1d(const Var& input, const Var& kernels, const Var& bias, Index stride,
           Index padding);
Var conv1d_transpose(const Var& input, const Var& kernels, const Var& bias,
                     Index stride, Index padding);
Var avg_pool1d(const Var& input, Index window);
Var linear(const Var& input, const Var& weight, const Var& bias);

Var relu(const Var& x);
Var exp(const Var& x);
Var softmax(const Var& x);
// Inverted dropout: in training mode zeroes each element with probability p
// and scales survivors by 1/(1-p); identity otherwise.
Var dropout(const Var& x, double p, std::mt19937_64& rng, bool training);

Var reshape(const Var& x, Shape shape);
// Concatenates along axis 1 (features for rank 2, channels for rank 3).
Var concat(const Var& a, const Var& b);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& x, double factor);
Var sum(const Var& x);
Var mean(const Var& x);

// Mean of squared residuals over every element.
Var mse(const Var& prediction, const Var& target);
// Batch mean of -sum(y log p) with log clamped at log(1e-12).
Var cross_entropy(const Var& probs, const Var& one_hot);
// Batch mean of 0.5 * sum(mu^2 + exp(lv) - 1 - lv).
Var kl_divergence(const Var& mu, const Var& log_variance);

}  // namespace ad

}  // namespace vocnet
