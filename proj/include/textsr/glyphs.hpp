#pragma once

#include <cstdint>
#include <vector>

#include "textsr/categorical.hpp"
#include "textsr/rng.hpp"
#include "textsr/tensor.hpp"

namespace textsr {

// Procedurally generated binary glyph set. Content glyphs are bitmaps of
// g_h x g_w cells with pairwise Hamming distance >= min_hamming; PAD has no
// bitmap and renders blank.
struct GlyphFont {
  int rows = 7, cols = 5;
  int n_glyphs = 0;  // content glyphs, K - 1
  uint64_t seed = 0;
  std::vector<std::vector<uint8_t>> bitmaps;  // n_glyphs x (rows*cols), 0/1

  int on_bits(int glyph) const;
};

GlyphFont make_font(int n_glyphs, int rows, int cols, int min_hamming, uint64_t seed);
int glyph_hamming(const GlyphFont& f, int a, int b);

struct StyleRanges {
  double min_luminance_gap = 0.2;
  int glyph_scale_min = 2, glyph_scale_max = 3;
  int max_jitter = 2;
  double dilate_prob = 0.3;
};

struct StyleDescriptor {
  double fg[3] = {0, 0, 0};
  double bg[3] = {1, 1, 1};
  int scale = 2;       // integer pixel replication factor
  int jitter = 0;      // per-image horizontal offset
  int dilate = 0;      // stroke dilation radius, 0 or 1
};

double luminance(const double rgb[3]);
StyleDescriptor sample_style(const StyleRanges& ranges, Rng& rng);

// True when a glyph in this style stays inside its slot for every position.
bool style_fits(const GlyphFont& font, const StyleDescriptor& style, int height, int width,
                int slots);

// Deterministic composite of scaled glyph bitmaps onto a solid background.
// Characters occupy fixed-pitch slots (canvas width / slots); PAD slots stay
// blank. Throws std::invalid_argument when a glyph overflows the canvas.
Tensor render_text_image(const CharSequence& text, const GlyphFont& font,
                         const StyleDescriptor& style, int height, int width, int slots,
                         int pad_index);

}  // namespace textsr
