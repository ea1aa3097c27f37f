#include "textsr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "textsr/image.hpp"

namespace textsr {

double psnr(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "psnr");
  double m = mse(a, b);
  if (m < 1e-10) return 99.0;
  return 10.0 * std::log10(1.0 / m);
}

int levenshtein(const CharSequence& a, const CharSequence& b) {
  const size_t n = b.size();
  std::vector<int> costs(n + 1);
  std::iota(costs.begin(), costs.end(), 0);
  for (size_t i = 0; i < a.size(); ++i) {
    costs[0] = static_cast<int>(i) + 1;
    int corner = static_cast<int>(i);
    for (size_t j = 0; j < n; ++j) {
      int upper = costs[j + 1];
      if (a[i] == b[j]) {
        costs[j + 1] = corner;
      } else {
        costs[j + 1] = std::min({costs[j], upper, corner}) + 1;
      }
      corner = upper;
    }
  }
  return costs[n];
}

double ned(const CharSequence& pred, const CharSequence& gt, int pad_index) {
  CharSequence p = strip_pad(pred, pad_index);
  CharSequence g = strip_pad(gt, pad_index);
  if (p.empty() && g.empty()) return 1.0;
  double d = levenshtein(p, g);
  return 1.0 - d / static_cast<double>(std::max(p.size(), g.size()));
}

int seq_accuracy(const CharSequence& pred, const CharSequence& gt, int pad_index) {
  return strip_pad(pred, pad_index) == strip_pad(gt, pad_index) ? 1 : 0;
}

}  // namespace textsr
