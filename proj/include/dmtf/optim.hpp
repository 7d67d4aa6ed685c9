#pragma once

#include <cstdint>
#include <vector>

#include "dmtf/tensor.hpp"

namespace dmtf::nd {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction over a named parameter list. After every step the
// parameters and moment buffers are narrowed to f32 precision so that the
// persisted training state (32-bit on disk) round-trips bitwise and resumed
// runs replay exactly.
class Adam {
 public:
  Adam(std::vector<NamedParam>& params, AdamConfig cfg);

  // Applies one update from the parameters' current grads. Grads are zeroed
  // afterwards. Throws NumericError on non-finite gradients.
  void step();

  int64_t step_count() const { return step_; }
  const AdamConfig& config() const { return cfg_; }

  // Moment buffers as named tensors ("<param>.m" / "<param>.v") for
  // persistence alongside checkpoints.
  std::vector<NamedParam> state_tensors() const;
  void load_state(int64_t step, std::vector<NamedParam>& moments);

 private:
  std::vector<NamedParam>* params_;
  AdamConfig cfg_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  int64_t step_ = 0;
};

}  // namespace dmtf::nd
