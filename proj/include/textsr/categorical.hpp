#pragma once

#include <cstdint>
#include <vector>

#include "textsr/rng.hpp"
#include "textsr/schedule.hpp"

namespace textsr {

// Character alphabet of K symbols including one dedicated PAD symbol.
struct CharAlphabet {
  int K = 0;
  std::vector<uint32_t> symbols;  // ordered, distinct glyph identifiers
  int pad_index = 0;

  static CharAlphabet make(int K);  // identity symbols, PAD at K-1
  void validate() const;
};

// Sequence of symbol indices in [0, K). Clean sequences (labels, recognizer
// outputs) carry PAD only as a contiguous suffix; intermediate diffusion
// states may contain PAD anywhere.
using CharSequence = std::vector<int>;

bool pad_suffix_wellformed(const CharSequence& seq, int pad_index);
CharSequence strip_pad(const CharSequence& seq, int pad_index);
CharSequence pad_to(const CharSequence& content, int slots, int pad_index);

// Per-position categorical distributions: L rows over K symbols.
struct CategoricalDistribution {
  int L = 0, K = 0;
  std::vector<double> p;  // row-major (L, K)

  CategoricalDistribution() = default;
  CategoricalDistribution(int l, int k) : L(l), K(k), p(static_cast<size_t>(l) * k, 0.0) {}
  double& at(int i, int k) { return p[static_cast<size_t>(i) * K + k]; }
  double at(int i, int k) const { return p[static_cast<size_t>(i) * K + k]; }

  static CategoricalDistribution onehot(const CharSequence& seq, int K);
  void validate_rows(double tol = 1e-9) const;  // rows sum to 1
};

// Single-step forward transition rows: alpha_t * onehot(c_prev) + (1-alpha_t)/K.
CategoricalDistribution q_step_probs(const CharSequence& c_prev, double alpha_t, int K);

// Marginal rows after t steps: same affine family with alpha_bar_t.
CategoricalDistribution q_marginal_probs(const CharSequence& c0, double alpha_bar_t, int K);

// Independent inverse-CDF draw per position over the fixed symbol order.
CharSequence sample_categorical(const CategoricalDistribution& dist, Rng& rng);

// Reverse-step posterior for t >= 2:
//   pi ~ [alpha_t c_t + (1-alpha_t)/K] . [alpha_bar_{t-1} c_pred + (1-alpha_bar_{t-1})/K]
// renormalized per row. Row sums are accumulated over value-sorted copies so
// renormalization is invariant under symbol permutation.
CategoricalDistribution posterior(const CharSequence& c_t, const CategoricalDistribution& c_pred,
                                  int t, const NoiseSchedule& schedule, int K);

// Ancestral step: t > 1 samples from posterior(); t == 1 samples from c_pred.
CharSequence sample_step(const CharSequence& c_t, const CategoricalDistribution& c_pred, int t,
                         const NoiseSchedule& schedule, Rng& rng);

// Testing oracle: Bayes rule q(c_{t-1}|c_t,c0) by enumerating all K candidate
// values per position through the forward kernels. Requires K <= 16.
CategoricalDistribution brute_force_posterior(const CharSequence& c_t, const CharSequence& c0,
                                              int t, const NoiseSchedule& schedule, int K);

}  // namespace textsr
