#include "vocnet/optim.hpp"

#include <string>

#include "vocnet/errors.hpp"

namespace vocnet {

std::string_view optimizer_name(OptimizerKind kind) {
  return kind == OptimizerKind::adam ? "adam" : "sgd";
}

OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "adam") return OptimizerKind::adam;
  if (name == "sgd") return OptimizerKind::sgd;
  throw DomainError("unknown optimizer '" + std::string(name) + "'");
}

Optimizer::Optimizer(std::vector<Parameter*> params, OptimizerOptions options)
    : params_(std::move(params)), options_(options) {
  if (!(options_.learning_rate > 0.0)) throw DomainError("learning rate must be positive");
  for (Parameter* p : params_) {
    first_.push_back(Eigen::ArrayXd::Zero(p->value.size()));
    second_.push_back(Eigen::ArrayXd::Zero(p->value.size()));
  }
  zero_grad();
}

void Optimizer::zero_grad() {
  for (Parameter* p : params_) p->zero_grad();
}

void Optimizer::step() {
  ++steps_;
  const double lr = options_.learning_rate;
  if (options_.kind == OptimizerKind::sgd) {
    for (Parameter* p : params_) p->value.array() -= lr * p->grad.array();
    zero_grad();
    return;
  }
  const double b1 = options_.beta1;
  const double b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto& g = params_[i]->grad.array();
    first_[i] = b1 * first_[i] + (1.0 - b1) * g;
    second_[i] = b2 * second_[i] + (1.0 - b2) * g.square();
    params_[i]->value.array() -=
        lr * (first_[i] / c1) / ((second_[i] / c2).sqrt() + options_.epsilon);
  }
  zero_grad();
}

}  // namespace vocnet
