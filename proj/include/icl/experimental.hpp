#pragma once

// Joint (value, key_query) descent by central finite differences.
//
// EXPERIMENTAL: no convergence guarantee backs this path. The main
// trainers (sft_gd, os_gd) keep key_query fixed to the identity; this utility
// exists to explore what happens when both blocks move.

#include <functional>
#include <vector>

#include "icl/lsa_model.hpp"

namespace icl::experimental {

using ParamsLoss = std::function<double(const LsaParams&)>;

/// Central-difference gradient of `loss` in both blocks, step h * max(1, |entry|).
LsaParams fd_gradient(const ParamsLoss& loss, const LsaParams& at, double h = 1e-6);

struct FdDescentResult {
  LsaParams params;
  std::vector<double> loss;
};

/// `steps` iterations of params -= step * fd_gradient(loss, params).
/// Throws DivergenceError if the loss stops being finite.
FdDescentResult fd_descent(const ParamsLoss& loss, const LsaParams& init, double step, Index steps,
                           double h = 1e-6);

}  // namespace icl::experimental
