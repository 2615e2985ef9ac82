#pragma once

#include <Eigen/Core>

#include <cmath>
#include <string_view>
#include <vector>

#include "vocnet/autodiff.hpp"

namespace vocnet {

enum class OptimizerKind { adam, sgd };

std::string_view optimizer_name(OptimizerKind kind);
OptimizerKind parse_optimizer(std::string_view name);

struct OptimizerOptions {
  OptimizerKind kind = OptimizerKind::adam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adam with bias correction, or plain SGD. step() consumes and clears the
// gradients held by the parameters.
class Optimizer {
 public:
  Optimizer(std::vector<Parameter*> params, OptimizerOptions options);

  void zero_grad();
  void step();

  long steps() const { return steps_; }

 private:
  std::vector<Parameter*> params_;
  OptimizerOptions options_;
  std::vector<Eigen::ArrayXd> first_;
  std::vector<Eigen::ArrayXd> second_;
  long steps_ = 0;
};

}  // namespace vocnet
