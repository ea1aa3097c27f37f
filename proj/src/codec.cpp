#include "textsr/codec.hpp"

#include <cmath>
#include <stdexcept>

namespace textsr {

LatentCodec LatentCodec::make(int patch) {
  LatentCodec c;
  c.patch = patch;
  c.scale.assign(static_cast<size_t>(3) * patch * patch, 1.0);
  c.shift.assign(static_cast<size_t>(3) * patch * patch, 0.0);
  c.validate();
  return c;
}

void LatentCodec::validate() const {
  if (patch < 1) throw std::invalid_argument("LatentCodec: patch must be >= 1");
  size_t ch = static_cast<size_t>(3) * patch * patch;
  if (scale.size() != ch || shift.size() != ch)
    throw std::invalid_argument("LatentCodec: affine size mismatch");
  for (size_t i = 0; i < ch; ++i) {
    int exp = 0;
    double m = std::frexp(scale[i], &exp);
    if (m != 0.5 || shift[i] != 0.0)
      throw std::invalid_argument(
          "LatentCodec: affine must use a power-of-two scale and zero shift "
          "for bit-exact inversion");
  }
}

Tensor codec_encode(const Tensor& x, const LatentCodec& codec) {
  if (x.rank() != 3 || x.shape[0] != 3)
    throw std::invalid_argument("codec_encode: expected (3,H,W)");
  int p = codec.patch;
  int H = x.shape[1], W = x.shape[2];
  if (H % p != 0 || W % p != 0)
    throw std::invalid_argument("codec_encode: dims not divisible by patch");
  int Ho = H / p, Wo = W / p;
  Tensor z({3 * p * p, Ho, Wo});
  for (int c = 0; c < 3; ++c)
    for (int dy = 0; dy < p; ++dy)
      for (int dx = 0; dx < p; ++dx) {
        int zc = (c * p + dy) * p + dx;
        for (int y = 0; y < Ho; ++y)
          for (int xx = 0; xx < Wo; ++xx)
            z.at(zc, y, xx) =
                (x.at(c, y * p + dy, xx * p + dx) - codec.shift[zc]) * codec.scale[zc];
      }
  return z;
}

Tensor codec_decode(const Tensor& z, const LatentCodec& codec) {
  int p = codec.patch;
  if (z.rank() != 3 || z.shape[0] != 3 * p * p)
    throw std::invalid_argument("codec_decode: latent channel count mismatch");
  int Ho = z.shape[1], Wo = z.shape[2];
  Tensor x({3, Ho * p, Wo * p});
  for (int c = 0; c < 3; ++c)
    for (int dy = 0; dy < p; ++dy)
      for (int dx = 0; dx < p; ++dx) {
        int zc = (c * p + dy) * p + dx;
        for (int y = 0; y < Ho; ++y)
          for (int xx = 0; xx < Wo; ++xx)
            x.at(c, y * p + dy, xx * p + dx) = z.at(zc, y, xx) / codec.scale[zc] + codec.shift[zc];
      }
  return x;
}

}  // namespace textsr
