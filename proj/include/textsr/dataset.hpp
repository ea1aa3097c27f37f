#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "textsr/categorical.hpp"
#include "textsr/degrade.hpp"
#include "textsr/glyphs.hpp"
#include "textsr/image.hpp"

namespace textsr {

struct DatasetConfig {
  int alphabet_size = 17;  // K including PAD (PAD index K-1)
  int seq_slots = 8;
  int max_content_len = 6;
  int hr_h = 32, hr_w = 128;
  int scale = 4;
  uint64_t font_seed = 77;
  int glyph_rows = 7, glyph_cols = 5;
  int glyph_min_hamming = 6;
  StyleRanges style;
  DegradeConfig degrade;
};

struct SampleRecord {
  ByteImage hr, lr;
  CharSequence content;  // PAD-free label
  uint64_t seed = 0;
};

struct Dataset {
  DatasetConfig cfg;
  uint64_t master_seed = 0;
  GlyphFont font;
  std::vector<SampleRecord> samples;

  int pad_index() const { return cfg.alphabet_size - 1; }
  CharSequence padded_label(int i) const {
    return pad_to(samples[i].content, cfg.seq_slots, pad_index());
  }
};

// Generates one sample in memory (HR quantized to 8 bits before degradation
// so stored pairs reproduce bit-exactly from the per-sample seed).
SampleRecord generate_sample(const DatasetConfig& cfg, const GlyphFont& font, uint64_t seed);

// Writes manifest.json, hr/%06d.ppm, lr/%06d.ppm and labels.tsv under dir.
void build_dataset(const DatasetConfig& cfg, int n, uint64_t master_seed,
                   const std::string& dir);

Dataset load_dataset(const std::string& dir);

// 64-bit FNV-1a over manifest.json and labels.tsv, hex-encoded.
std::string dataset_fingerprint(const std::string& dir);

uint64_t fnv1a64(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ULL);

}  // namespace textsr
