#pragma once

#include "textsr/categorical.hpp"
#include "textsr/tensor.hpp"

namespace textsr {

// 10*log10(1/MSE) over [0,1] images; capped at 99.0 dB when MSE < 1e-10.
double psnr(const Tensor& a, const Tensor& b);

int levenshtein(const CharSequence& a, const CharSequence& b);

// 1 - lev(pred, gt)/max(|pred|, |gt|) on PAD-stripped sequences; 1 when both
// are empty.
double ned(const CharSequence& pred, const CharSequence& gt, int pad_index);

// 1 iff PAD-stripped content matches exactly.
int seq_accuracy(const CharSequence& pred, const CharSequence& gt, int pad_index);

}  // namespace textsr
