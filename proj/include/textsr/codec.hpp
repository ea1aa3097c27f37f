#pragma once

#include <vector>

#include "textsr/tensor.hpp"

namespace textsr {

// Lossless latent codec: space-to-depth rearrangement (3,H,W) ->
// (3*p*p, H/p, W/p) followed by a per-channel affine (v - shift) * scale.
// decode(encode(x)) must be bit-exact, which restricts the affine to
// power-of-two scales with zero shift; the default is the identity affine.
// Diffusion-side value standardization happens in the pipeline instead.
struct LatentCodec {
  int patch = 4;
  std::vector<double> scale;  // per latent channel
  std::vector<double> shift;

  static LatentCodec make(int patch);  // identity affine
  void validate() const;               // enforces exact invertibility
};

Tensor codec_encode(const Tensor& x, const LatentCodec& codec);
Tensor codec_decode(const Tensor& z, const LatentCodec& codec);

}  // namespace textsr
