#pragma once

#include <string>
#include <utility>
#include <vector>

#include "driftmeta/autodiff.hpp"
#include "driftmeta/optim.hpp"

namespace driftmeta {

// Connects parameter matrices owned by model structs to leaf nodes on a
// tape for one forward/backward pass, and collects their gradients for the
// optimizer afterwards.
class Binder {
 public:
  explicit Binder(ad::Tape& tape) : tape_(tape) {}

  ad::Tensor bind(const std::string& name, Matrix& param) {
    ad::Tensor v = tape_.leaf(param);
    bound_.push_back({name, &param});
    vars_.push_back(v);
    return v;
  }

  // Data / frozen values: on the tape but not tracked for updates.
  ad::Tensor constant(Matrix value) { return tape_.leaf(std::move(value)); }

  ad::Tape& tape() { return tape_; }

  const std::vector<ParamRef>& params() const { return bound_; }

  // Valid after tape().backward(...).
  std::vector<const Matrix*> grads() const {
    std::vector<const Matrix*> out;
    out.reserve(vars_.size());
    for (const ad::Tensor& v : vars_) out.push_back(&v.grad());
    return out;
  }

 private:
  ad::Tape& tape_;
  std::vector<ParamRef> bound_;
  std::vector<ad::Tensor> vars_;
};

}  // namespace driftmeta
