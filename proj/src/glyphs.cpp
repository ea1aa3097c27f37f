#include "textsr/glyphs.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace textsr {

int GlyphFont::on_bits(int glyph) const {
  int n = 0;
  for (uint8_t b : bitmaps.at(glyph)) n += b;
  return n;
}

int glyph_hamming(const GlyphFont& f, int a, int b) {
  const auto& ba = f.bitmaps.at(a);
  const auto& bb = f.bitmaps.at(b);
  int d = 0;
  for (size_t i = 0; i < ba.size(); ++i) d += ba[i] != bb[i];
  return d;
}

GlyphFont make_font(int n_glyphs, int rows, int cols, int min_hamming, uint64_t seed) {
  if (n_glyphs < 1 || rows < 1 || cols < 1)
    throw std::invalid_argument("make_font: bad dimensions");
  GlyphFont font;
  font.rows = rows;
  font.cols = cols;
  font.n_glyphs = n_glyphs;
  font.seed = seed;
  Rng rng(splitmix64(seed));
  int cells = rows * cols;
  int lo_bits = cells * 3 / 10, hi_bits = cells * 7 / 10;
  int attempts = 0;
  while (static_cast<int>(font.bitmaps.size()) < n_glyphs) {
    if (++attempts > 200000)
      throw std::runtime_error("make_font: rejection sampling failed; relax min_hamming");
    std::vector<uint8_t> bm(cells);
    int on = 0;
    for (int i = 0; i < cells; ++i) {
      bm[i] = uniform01(rng) < 0.45 ? 1 : 0;
      on += bm[i];
    }
    if (on < lo_bits || on > hi_bits) continue;
    bool ok = true;
    for (const auto& prev : font.bitmaps) {
      int d = 0;
      for (int i = 0; i < cells; ++i) d += bm[i] != prev[i];
      if (d < min_hamming) {
        ok = false;
        break;
      }
    }
    if (ok) font.bitmaps.push_back(std::move(bm));
  }
  return font;
}

double luminance(const double rgb[3]) {
  return 0.299 * rgb[0] + 0.587 * rgb[1] + 0.114 * rgb[2];
}

StyleDescriptor sample_style(const StyleRanges& ranges, Rng& rng) {
  StyleDescriptor st;
  for (int tries = 0; tries < 10000; ++tries) {
    for (int i = 0; i < 3; ++i) st.fg[i] = uniform01(rng);
    for (int i = 0; i < 3; ++i) st.bg[i] = uniform01(rng);
    if (std::abs(luminance(st.fg) - luminance(st.bg)) >= ranges.min_luminance_gap) break;
  }
  st.scale = uniform_int(rng, ranges.glyph_scale_min, ranges.glyph_scale_max);
  st.jitter = uniform_int(rng, -ranges.max_jitter, ranges.max_jitter);
  st.dilate = uniform01(rng) < ranges.dilate_prob ? 1 : 0;
  return st;
}

bool style_fits(const GlyphFont& font, const StyleDescriptor& style, int height, int width,
                int slots) {
  if (slots < 1 || width % slots != 0) return false;
  int pitch = width / slots;
  int bh = font.rows * style.scale + 2 * style.dilate;
  int bw = font.cols * style.scale + 2 * style.dilate;
  int off = (pitch - bw) / 2 + style.jitter;
  int y0 = (height - bh) / 2;
  return off >= 0 && off + bw <= pitch && y0 >= 0 && y0 + bh <= height;
}

Tensor render_text_image(const CharSequence& text, const GlyphFont& font,
                         const StyleDescriptor& style, int height, int width, int slots,
                         int pad_index) {
  if (slots < 1 || width % slots != 0)
    throw std::invalid_argument("render_text_image: width must divide into slots");
  if (static_cast<int>(text.size()) > slots)
    throw std::invalid_argument("render_text_image: text longer than slot count");

  Tensor img({3, height, width});
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < height * width; ++i) img.v[static_cast<size_t>(c) * height * width + i] = style.bg[c];

  int pitch = width / slots;
  for (size_t pos = 0; pos < text.size(); ++pos) {
    int ch = text[pos];
    if (ch == pad_index) continue;
    if (ch < 0 || ch >= font.n_glyphs)
      throw std::invalid_argument("render_text_image: glyph index out of range");

    // Scale by pixel replication, then optionally dilate by one pixel
    // (4-neighborhood) for stroke thickness.
    int gh = font.rows * style.scale, gw = font.cols * style.scale;
    int pad = style.dilate;
    int bh = gh + 2 * pad, bw = gw + 2 * pad;
    std::vector<uint8_t> mask(static_cast<size_t>(bh) * bw, 0);
    const auto& bm = font.bitmaps[ch];
    for (int r = 0; r < font.rows; ++r)
      for (int cgl = 0; cgl < font.cols; ++cgl) {
        if (!bm[static_cast<size_t>(r) * font.cols + cgl]) continue;
        for (int dy = 0; dy < style.scale; ++dy)
          for (int dx = 0; dx < style.scale; ++dx)
            mask[static_cast<size_t>(r * style.scale + dy + pad) * bw +
                 (cgl * style.scale + dx + pad)] = 1;
      }
    if (style.dilate) {
      std::vector<uint8_t> dil = mask;
      for (int y = 0; y < bh; ++y)
        for (int x = 0; x < bw; ++x) {
          if (mask[static_cast<size_t>(y) * bw + x]) continue;
          bool near = (y > 0 && mask[static_cast<size_t>(y - 1) * bw + x]) ||
                      (y + 1 < bh && mask[static_cast<size_t>(y + 1) * bw + x]) ||
                      (x > 0 && mask[static_cast<size_t>(y) * bw + x - 1]) ||
                      (x + 1 < bw && mask[static_cast<size_t>(y) * bw + x + 1]);
          if (near) dil[static_cast<size_t>(y) * bw + x] = 1;
        }
      mask.swap(dil);
    }

    int x0 = static_cast<int>(pos) * pitch + (pitch - bw) / 2 + style.jitter;
    int y0 = (height - bh) / 2;
    if (x0 < 0 || x0 + bw > width || y0 < 0 || y0 + bh > height)
      throw std::invalid_argument("render_text_image: glyph overflows canvas at slot " +
                                  std::to_string(pos));
    for (int y = 0; y < bh; ++y)
      for (int x = 0; x < bw; ++x) {
        if (!mask[static_cast<size_t>(y) * bw + x]) continue;
        for (int c = 0; c < 3; ++c) img.at(c, y0 + y, x0 + x) = style.fg[c];
      }
  }
  return img;
}

}  // namespace textsr
