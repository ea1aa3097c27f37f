#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "textsr/params.hpp"

namespace textsr {

struct GradCheckResult {
  int checked = 0;
  double max_rel_err = 0.0;
  bool pass = false;
  std::string worst;  // "name[idx] analytic=.. numeric=.."
};

// Central finite-difference check of analytic parameter gradients.
// eval(store, grads): computes the scalar loss from current store values;
// when grads != nullptr it must also run backward and fill per-name grads.
// n_samples coordinates are drawn across the named tensors (weighted by
// size); each must satisfy |a - n| / max(|a|, |n|, 1e-4) < tol.
GradCheckResult gradcheck(
    ParameterStore& store, const std::vector<std::string>& names,
    const std::function<double(ParameterStore&, std::map<std::string, Tensor>*)>& eval,
    int n_samples, double step, double tol, Rng& rng);

}  // namespace textsr
