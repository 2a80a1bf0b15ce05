#pragma once

#include <string>
#include <vector>

#include "netrecast/param_set.hpp"

namespace netrecast {

enum class OptimizerKind { sgd_nesterov, adam };

std::string to_string(OptimizerKind kind);
OptimizerKind parse_optimizer_kind(const std::string& name);

// From `epoch` onwards the learning rate is divided by `divisor` (stacking
// with earlier milestones).
struct LrMilestone {
  int epoch = 0;
  double divisor = 1.0;
};

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double learning_rate = 5e-4;
  double momentum = 0.9;  // sgd
  double beta1 = 0.9;     // adam
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;
  std::vector<LrMilestone> schedule;

  // Throws ConfigError when a field is outside its valid range.
  void validate() const;
  double lr_at(int epoch) const;

  static OptimizerConfig sgd(double lr, double momentum = 0.9, double weight_decay = 0.0);
  static OptimizerConfig adam(double lr);
};

// Applies one update to every entry of `params` using its gradient.
// SGD-Nesterov (PyTorch formulation): g += wd*w; v = mu*v + g; w -= lr*(g + mu*v).
// Adam (L2 weight decay added to the gradient): bias-corrected moments,
// w -= lr * m_hat / (sqrt(v_hat) + eps).
// Throws MissingGradientError naming the first parameter without a gradient.
template <typename T>
void optimizer_step(ParamSet<T>& params, const OptimizerConfig& config, int epoch);

}  // namespace netrecast
