#pragma once

#include <string>
#include <vector>

namespace textsr {

struct VerifyResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

// Exact-math oracle suites. posterior_bias perturbs the reverse-step
// posterior inside the Bayes suite (used to prove the suite catches a broken
// formula); 0 leaves the computation untouched.
VerifyResult verify_posterior_bayes(double posterior_bias = 0.0);
VerifyResult verify_forward_composition();
VerifyResult verify_t1_inversion();
VerifyResult verify_gradient_checks();
VerifyResult verify_roundtrips(const std::string& scratch_dir);
VerifyResult verify_metric_units();
VerifyResult verify_mc_sampling_law();

std::vector<VerifyResult> run_verify_suites(const std::string& scratch_dir,
                                            double posterior_bias = 0.0);

}  // namespace textsr
