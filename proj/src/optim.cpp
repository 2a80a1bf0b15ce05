#include "netrecast/optim.hpp"

#include <cmath>

namespace netrecast {

std::string to_string(OptimizerKind kind) {
  return kind == OptimizerKind::adam ? "adam" : "sgd-nesterov";
}

OptimizerKind parse_optimizer_kind(const std::string& name) {
  if (name == "adam") return OptimizerKind::adam;
  if (name == "sgd-nesterov" || name == "sgd") return OptimizerKind::sgd_nesterov;
  throw ConfigError("unknown optimizer '" + name + "' (expected sgd-nesterov or adam)");
}

void OptimizerConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must be in [0, 1)");
  if (!(beta1 > 0.0 && beta1 < 1.0)) throw ConfigError("beta1 must be in (0, 1)");
  if (!(beta2 > 0.0 && beta2 < 1.0)) throw ConfigError("beta2 must be in (0, 1)");
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be > 0");
  if (weight_decay < 0.0) throw ConfigError("weight decay must be >= 0");
  for (const auto& m : schedule) {
    if (m.epoch < 0 || !(m.divisor > 0.0)) throw ConfigError("invalid lr milestone");
  }
}

double OptimizerConfig::lr_at(int epoch) const {
  double lr = learning_rate;
  for (const auto& m : schedule) {
    if (epoch >= m.epoch) lr /= m.divisor;
  }
  return lr;
}

OptimizerConfig OptimizerConfig::sgd(double lr, double momentum, double weight_decay) {
  OptimizerConfig c;
  c.kind = OptimizerKind::sgd_nesterov;
  c.learning_rate = lr;
  c.momentum = momentum;
  c.weight_decay = weight_decay;
  return c;
}

OptimizerConfig OptimizerConfig::adam(double lr) {
  OptimizerConfig c;
  c.kind = OptimizerKind::adam;
  c.learning_rate = lr;
  return c;
}

template <typename T>
void optimizer_step(ParamSet<T>& params, const OptimizerConfig& config, int epoch) {
  for (const auto& e : params) {
    if (!e.value.has_grad()) {
      throw MissingGradientError("parameter '" + e.name + "' has no gradient");
    }
  }
  const double lr = config.lr_at(epoch);
  const double wd = config.weight_decay;
  for (auto& e : params) {
    auto w = e.value.mutable_data();
    auto g = e.value.grad();
    auto& st = e.state;
    const std::size_t n = w.size();
    if (config.kind == OptimizerKind::sgd_nesterov) {
      const double mu = config.momentum;
      if (st.momentum.empty()) st.momentum.assign(n, T{0});
      for (std::size_t i = 0; i < n; ++i) {
        const double gi = static_cast<double>(g[i]) + wd * w[i];
        const double v = mu * st.momentum[i] + gi;
        st.momentum[i] = static_cast<T>(v);
        w[i] = static_cast<T>(w[i] - lr * (gi + mu * v));
      }
    } else {
      if (st.first.empty()) {
        st.first.assign(n, T{0});
        st.second.assign(n, T{0});
      }
      ++st.step;
      const double b1 = config.beta1, b2 = config.beta2;
      const double c1 = 1.0 - std::pow(b1, static_cast<double>(st.step));
      const double c2 = 1.0 - std::pow(b2, static_cast<double>(st.step));
      for (std::size_t i = 0; i < n; ++i) {
        const double gi = static_cast<double>(g[i]) + wd * w[i];
        const double m = b1 * st.first[i] + (1.0 - b1) * gi;
        const double v = b2 * st.second[i] + (1.0 - b2) * gi * gi;
        st.first[i] = static_cast<T>(m);
        st.second[i] = static_cast<T>(v);
        w[i] = static_cast<T>(w[i] - lr * (m / c1) / (std::sqrt(v / c2) + config.epsilon));
      }
    }
  }
}

template void optimizer_step(ParamSet<float>&, const OptimizerConfig&, int);
template void optimizer_step(ParamSet<double>&, const OptimizerConfig&, int);

}  // namespace netrecast
