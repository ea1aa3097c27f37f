#include "textsr/categorical.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace textsr {

namespace {

void check_indices(const CharSequence& seq, int K, const char* where) {
  for (int c : seq)
    if (c < 0 || c >= K)
      throw std::invalid_argument(std::string(where) + ": index out of range");
}

// Permutation-invariant row sum: accumulate over a sorted copy.
double sorted_row_sum(const double* row, int K) {
  std::vector<double> tmp(row, row + K);
  std::sort(tmp.begin(), tmp.end());
  double s = 0.0;
  for (double x : tmp) s += x;
  return s;
}

CategoricalDistribution affine_mix(const CharSequence& seq, double a, int K, const char* where) {
  if (!(a >= 0.0 && a <= 1.0))
    throw std::domain_error(std::string(where) + ": mixing factor outside [0,1]");
  check_indices(seq, K, where);
  CategoricalDistribution d(static_cast<int>(seq.size()), K);
  double off = (1.0 - a) / K;
  for (size_t i = 0; i < seq.size(); ++i) {
    for (int k = 0; k < K; ++k) d.at(static_cast<int>(i), k) = off;
    d.at(static_cast<int>(i), seq[i]) += a;
  }
  return d;
}

}  // namespace

CharAlphabet CharAlphabet::make(int K) {
  CharAlphabet a;
  a.K = K;
  a.symbols.resize(K);
  for (int i = 0; i < K; ++i) a.symbols[i] = static_cast<uint32_t>(i);
  a.pad_index = K - 1;
  a.validate();
  return a;
}

void CharAlphabet::validate() const {
  if (K < 2) throw std::invalid_argument("CharAlphabet: K must be >= 2");
  if (static_cast<int>(symbols.size()) != K)
    throw std::invalid_argument("CharAlphabet: symbol count != K");
  std::set<uint32_t> uniq(symbols.begin(), symbols.end());
  if (static_cast<int>(uniq.size()) != K)
    throw std::invalid_argument("CharAlphabet: symbols not unique");
  if (pad_index < 0 || pad_index >= K)
    throw std::invalid_argument("CharAlphabet: pad_index out of range");
}

bool pad_suffix_wellformed(const CharSequence& seq, int pad_index) {
  bool seen_pad = false;
  for (int c : seq) {
    if (c == pad_index) seen_pad = true;
    else if (seen_pad) return false;
  }
  return true;
}

CharSequence strip_pad(const CharSequence& seq, int pad_index) {
  CharSequence out;
  out.reserve(seq.size());
  for (int c : seq)
    if (c != pad_index) out.push_back(c);
  return out;
}

CharSequence pad_to(const CharSequence& content, int slots, int pad_index) {
  if (static_cast<int>(content.size()) > slots)
    throw std::invalid_argument("pad_to: content longer than slot count");
  CharSequence out = content;
  out.resize(slots, pad_index);
  return out;
}

CategoricalDistribution CategoricalDistribution::onehot(const CharSequence& seq, int K) {
  check_indices(seq, K, "onehot");
  CategoricalDistribution d(static_cast<int>(seq.size()), K);
  for (size_t i = 0; i < seq.size(); ++i) d.at(static_cast<int>(i), seq[i]) = 1.0;
  return d;
}

void CategoricalDistribution::validate_rows(double tol) const {
  for (int i = 0; i < L; ++i) {
    double s = 0.0;
    for (int k = 0; k < K; ++k) {
      double x = at(i, k);
      if (!(x >= 0.0) || !std::isfinite(x))
        throw std::runtime_error("CategoricalDistribution: negative or non-finite entry");
      s += x;
    }
    if (std::abs(s - 1.0) > tol)
      throw std::runtime_error("CategoricalDistribution: row does not sum to 1");
  }
}

CategoricalDistribution q_step_probs(const CharSequence& c_prev, double alpha_t, int K) {
  return affine_mix(c_prev, alpha_t, K, "q_step_probs");
}

CategoricalDistribution q_marginal_probs(const CharSequence& c0, double alpha_bar_t, int K) {
  return affine_mix(c0, alpha_bar_t, K, "q_marginal_probs");
}

CharSequence sample_categorical(const CategoricalDistribution& dist, Rng& rng) {
  dist.validate_rows(1e-6);
  CharSequence out(dist.L);
  for (int i = 0; i < dist.L; ++i) {
    double u = uniform01(rng);
    double acc = 0.0;
    int chosen = dist.K - 1;
    for (int k = 0; k < dist.K; ++k) {
      acc += dist.at(i, k);
      if (u < acc) {
        chosen = k;
        break;
      }
    }
    out[i] = chosen;
  }
  return out;
}

CategoricalDistribution posterior(const CharSequence& c_t, const CategoricalDistribution& c_pred,
                                  int t, const NoiseSchedule& schedule, int K) {
  if (t < 2) throw std::invalid_argument("posterior: requires t >= 2 (t=1 handled by sample_step)");
  if (c_pred.K != K || c_pred.L != static_cast<int>(c_t.size()))
    throw std::invalid_argument("posterior: c_pred dims mismatch");
  check_indices(c_t, K, "posterior");
  double alpha_t = schedule.alpha(t);
  double ab_prev = schedule.alpha_bar_prev(t);
  double off_t = (1.0 - alpha_t) / K;
  double off_prev = (1.0 - ab_prev) / K;

  CategoricalDistribution post(c_pred.L, K);
  for (int i = 0; i < post.L; ++i) {
    for (int k = 0; k < K; ++k) {
      double f1 = off_t + (k == c_t[i] ? alpha_t : 0.0);
      double f2 = ab_prev * c_pred.at(i, k) + off_prev;
      post.at(i, k) = f1 * f2;
    }
    double s = sorted_row_sum(&post.p[static_cast<size_t>(i) * K], K);
    if (!(s > 0.0))
      throw std::runtime_error("posterior: degenerate all-zero row");
    for (int k = 0; k < K; ++k) post.at(i, k) /= s;
  }
  return post;
}

CharSequence sample_step(const CharSequence& c_t, const CategoricalDistribution& c_pred, int t,
                         const NoiseSchedule& schedule, Rng& rng) {
  if (t < 1 || t > schedule.T) throw std::out_of_range("sample_step: t outside 1..T");
  if (t == 1) return sample_categorical(c_pred, rng);
  return sample_categorical(posterior(c_t, c_pred, t, schedule, c_pred.K), rng);
}

CategoricalDistribution brute_force_posterior(const CharSequence& c_t, const CharSequence& c0,
                                              int t, const NoiseSchedule& schedule, int K) {
  if (K > 16) throw std::invalid_argument("brute_force_posterior: K > 16 enumeration guard");
  if (t < 2) throw std::invalid_argument("brute_force_posterior: requires t >= 2");
  if (c_t.size() != c0.size())
    throw std::invalid_argument("brute_force_posterior: length mismatch");
  check_indices(c_t, K, "brute_force_posterior");
  check_indices(c0, K, "brute_force_posterior");

  int L = static_cast<int>(c_t.size());
  CategoricalDistribution post(L, K);
  for (int i = 0; i < L; ++i) {
    // Enumerate candidate values j for c_{t-1} at this position and score
    // q(c_t | c_{t-1}=j) * q(c_{t-1}=j | c0) through the forward kernels.
    for (int j = 0; j < K; ++j) {
      CategoricalDistribution step = q_step_probs({j}, schedule.alpha(t), K);
      CategoricalDistribution marg =
          q_marginal_probs({c0[i]}, schedule.alpha_bar_prev(t), K);
      post.at(i, j) = step.at(0, c_t[i]) * marg.at(0, j);
    }
    double s = sorted_row_sum(&post.p[static_cast<size_t>(i) * K], K);
    if (!(s > 0.0)) throw std::runtime_error("brute_force_posterior: all-zero row");
    for (int j = 0; j < K; ++j) post.at(i, j) /= s;
  }
  return post;
}

}  // namespace textsr
