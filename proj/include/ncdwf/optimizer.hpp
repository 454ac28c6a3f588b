#pragma once

#include <vector>

#include "ncdwf/graph.hpp"
#include "ncdwf/tensor.hpp"

namespace ncdwf {

// Classic (heavy-ball) momentum: v <- momentum*v + g; p <- p - lr*v.
// Velocity buffers are positional: step() must receive the same parameters
// in the same order every call.
class SgdMomentum {
 public:
  SgdMomentum(double learning_rate, double momentum)
      : lr_(learning_rate), momentum_(momentum) {
    if (!(lr_ > 0.0)) throw ConfigError("SgdMomentum: learning_rate must be positive");
    if (momentum_ < 0.0 || momentum_ >= 1.0)
      throw ConfigError("SgdMomentum: momentum must be in [0,1)");
  }

  void step(const std::vector<Parameter*>& params) {
    if (velocity_.empty()) {
      velocity_.reserve(params.size());
      for (const Parameter* p : params)
        velocity_.emplace_back(p->value.rows(), p->value.cols());
    }
    if (velocity_.size() != params.size())
      throw ShapeError("SgdMomentum: parameter list size changed between steps");
    const kernels::Ops& o = kernels::active();
    for (std::size_t i = 0; i < params.size(); ++i) {
      Parameter& p = *params[i];
      Tensor& v = velocity_[i];
      if (!v.same_shape(p.value) || !p.grad.same_shape(p.value))
        throw ShapeError("SgdMomentum: shape mismatch for parameter " + p.name);
      o.scal(momentum_, v.data(), v.data(), v.size());
      o.axpy(1.0, p.grad.data(), v.data(), v.size());
      o.axpy(-lr_, v.data(), p.value.data(), p.value.size());
    }
  }

  double learning_rate() const { return lr_; }
  double momentum() const { return momentum_; }

 private:
  double lr_, momentum_;
  std::vector<Tensor> velocity_;
};

inline void zero_grads(const std::vector<Parameter*>& params) {
  for (Parameter* p : params) p->zero_grad();
}

}  // namespace ncdwf
