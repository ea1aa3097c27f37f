#include "textsr/gradcheck.hpp"

#include <cmath>
#include <cstdio>

namespace textsr {

GradCheckResult gradcheck(
    ParameterStore& store, const std::vector<std::string>& names,
    const std::function<double(ParameterStore&, std::map<std::string, Tensor>*)>& eval,
    int n_samples, double step, double tol, Rng& rng) {
  std::map<std::string, Tensor> grads;
  eval(store, &grads);

  long long total = 0;
  for (const auto& n : names) total += store.get(n).numel();

  GradCheckResult res;
  for (int s = 0; s < n_samples; ++s) {
    long long pick = static_cast<long long>(uniform01(rng) * total);
    if (pick >= total) pick = total - 1;
    std::string name;
    long long idx = pick;
    for (const auto& n : names) {
      long long sz = store.get(n).numel();
      if (idx < sz) {
        name = n;
        break;
      }
      idx -= sz;
    }

    Tensor& p = store.get(name);
    double orig = p.v[idx];
    p.v[idx] = orig + step;
    double fp = eval(store, nullptr);
    p.v[idx] = orig - step;
    double fm = eval(store, nullptr);
    p.v[idx] = orig;

    double numeric = (fp - fm) / (2.0 * step);
    auto it = grads.find(name);
    double analytic = it == grads.end() ? 0.0 : it->second.v[idx];
    // The 1e-4 floor keeps central-difference roundoff (~1e-9 absolute for
    // O(10) losses) from dominating coordinates with near-zero gradients.
    double rel = std::abs(analytic - numeric) /
                 std::max({std::abs(analytic), std::abs(numeric), 1e-4});
    ++res.checked;
    if (rel > res.max_rel_err) {
      res.max_rel_err = rel;
      char buf[256];
      std::snprintf(buf, sizeof(buf), "%s[%lld] analytic=%.10g numeric=%.10g rel=%.3g",
                    name.c_str(), idx, analytic, numeric, rel);
      res.worst = buf;
    }
  }
  res.pass = res.max_rel_err < tol;
  return res;
}

}  // namespace textsr
