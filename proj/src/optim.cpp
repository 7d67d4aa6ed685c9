#include "dmtf/optim.hpp"

#include <cmath>

#include "dmtf/errors.hpp"

namespace dmtf::nd {

Adam::Adam(std::vector<NamedParam>& params, AdamConfig cfg) : params_(&params), cfg_(cfg) {
  if (!(cfg_.lr > 0.0)) throw ConfigError("adam: lr must be positive");
  for (const NamedParam& p : *params_) {
    m_.emplace_back(p.value.size(), 0.0);
    v_.emplace_back(p.value.size(), 0.0);
  }
}

void Adam::step() {
  ++step_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
  for (size_t pi = 0; pi < params_->size(); ++pi) {
    NamedParam& p = (*params_)[pi];
    std::vector<double>& data = p.value.data();
    std::vector<double>& grad = p.value.grad();
    std::vector<double>& m = m_[pi];
    std::vector<double>& v = v_[pi];
    for (size_t i = 0; i < data.size(); ++i) {
      const double g = grad[i];
      if (!std::isfinite(g)) {
        throw NumericError("adam: non-finite gradient in parameter '" + p.name + "'");
      }
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      data[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
      data[i] = snap_f32(data[i]);
      m[i] = snap_f32(m[i]);
      v[i] = snap_f32(v[i]);
    }
    p.value.zero_grad();
  }
}

std::vector<NamedParam> Adam::state_tensors() const {
  std::vector<NamedParam> out;
  for (size_t pi = 0; pi < params_->size(); ++pi) {
    const NamedParam& p = (*params_)[pi];
    out.push_back({p.name + ".m", Tensor::from_data(p.value.shape(), m_[pi])});
    out.push_back({p.name + ".v", Tensor::from_data(p.value.shape(), v_[pi])});
  }
  return out;
}

void Adam::load_state(int64_t step, std::vector<NamedParam>& moments) {
  if (step < 0) throw DataError("adam: negative step count in state");
  if (moments.size() != params_->size() * 2) {
    throw DataError("adam: moment tensor count does not match parameter count");
  }
  step_ = step;
  for (size_t pi = 0; pi < params_->size(); ++pi) {
    const NamedParam& pm = moments[pi * 2];
    const NamedParam& pv = moments[pi * 2 + 1];
    const std::string& base = (*params_)[pi].name;
    if (pm.name != base + ".m" || pv.name != base + ".v") {
      throw DataError("adam: state tensor order mismatch at '" + base + "'");
    }
    m_[pi] = pm.value.data();
    v_[pi] = pv.value.data();
  }
}

}  // namespace dmtf::nd
