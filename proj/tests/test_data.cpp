#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "textsr/dataset.hpp"
#include "textsr/degrade.hpp"
#include "textsr/glyphs.hpp"
#include "textsr/image.hpp"

using namespace textsr;
namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  REQUIRE(f.good());
  return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

DatasetConfig tiny_config() {
  DatasetConfig cfg;
  cfg.alphabet_size = 9;
  cfg.seq_slots = 4;
  cfg.max_content_len = 3;
  cfg.hr_h = 16;
  cfg.hr_w = 32;
  cfg.scale = 2;
  cfg.style.glyph_scale_min = 1;
  cfg.style.glyph_scale_max = 1;
  cfg.style.max_jitter = 1;
  return cfg;
}

}  // namespace

TEST_SUITE("data") {

TEST_CASE("font glyphs are distinct with minimum hamming distance") {
  GlyphFont f = make_font(16, 7, 5, 6, 1234);
  CHECK(f.bitmaps.size() == 16);
  for (int a = 0; a < 16; ++a)
    for (int b = a + 1; b < 16; ++b) CHECK(glyph_hamming(f, a, b) >= 6);
  GlyphFont g = make_font(16, 7, 5, 6, 1234);
  CHECK(f.bitmaps == g.bitmaps);
}

TEST_CASE("style sampling respects luminance gap") {
  Rng rng(5);
  StyleRanges ranges;
  for (int i = 0; i < 100; ++i) {
    StyleDescriptor st = sample_style(ranges, rng);
    CHECK(std::abs(luminance(st.fg) - luminance(st.bg)) >= 0.2);
  }
}

TEST_CASE("render empty text gives constant background") {
  GlyphFont f = make_font(4, 7, 5, 6, 9);
  StyleDescriptor st;
  st.bg[0] = 0.3;
  st.bg[1] = 0.6;
  st.bg[2] = 0.9;
  Tensor img = render_text_image({}, f, st, 32, 128, 8, 3);
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 32 * 128; ++i)
      CHECK(img.v[static_cast<size_t>(c) * 32 * 128 + i] == st.bg[c]);
}

TEST_CASE("render is deterministic") {
  GlyphFont f = make_font(8, 7, 5, 6, 2);
  StyleDescriptor st;
  st.scale = 2;
  st.jitter = 1;
  Tensor a = render_text_image({0, 3, 7}, f, st, 32, 128, 8, 8);
  Tensor b = render_text_image({0, 3, 7}, f, st, 32, 128, 8, 8);
  CHECK(a.v == b.v);
}

TEST_CASE("foreground pixel count is scale^2 times glyph on-bits") {
  GlyphFont f = make_font(4, 7, 5, 6, 31);
  StyleDescriptor st;
  st.fg[0] = 0.1;
  st.fg[1] = 0.2;
  st.fg[2] = 0.3;
  st.bg[0] = st.bg[1] = st.bg[2] = 0.95;
  st.scale = 2;
  st.jitter = 0;
  st.dilate = 0;
  Tensor img = render_text_image({1}, f, st, 32, 128, 8, 4);
  int fg_count = 0;
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 128; ++x)
      if (img.at(0, y, x) == st.fg[0] && img.at(1, y, x) == st.fg[1] &&
          img.at(2, y, x) == st.fg[2])
        ++fg_count;
  CHECK(fg_count == 4 * f.on_bits(1));
}

TEST_CASE("oversized glyph overflows the canvas") {
  GlyphFont f = make_font(4, 7, 5, 6, 31);
  StyleDescriptor st;
  st.scale = 9;  // 45 px wide against a 16 px slot
  CHECK_THROWS_AS(render_text_image({0}, f, st, 32, 128, 8, 4), std::invalid_argument);
}

TEST_CASE("degrade with everything disabled is a pure area downsample") {
  Rng rng(3);
  GlyphFont f = make_font(4, 7, 5, 6, 7);
  StyleDescriptor st;
  st.scale = 2;
  Tensor hr = render_text_image({0, 1}, f, st, 32, 128, 8, 4);
  DegradeConfig cfg;
  cfg.blur_prob = cfg.noise_prob = cfg.contrast_prob = cfg.occlude_prob = 0.0;
  cfg.second_noise_prob = 0.0;
  Tensor lr = degrade(hr, 2, cfg, rng);
  Tensor expect = area_downsample(hr, 2);
  CHECK(lr.v == expect.v);
}

TEST_CASE("degrade determinism and output dims") {
  Rng seedgen(77);
  GlyphFont f = make_font(4, 7, 5, 6, 7);
  StyleDescriptor st;
  st.scale = 2;
  Tensor hr = render_text_image({0, 1, 2}, f, st, 32, 128, 8, 4);
  DegradeConfig cfg;
  for (int rep = 0; rep < 100; ++rep) {
    uint64_t seed = seedgen();
    int s = rep % 2 == 0 ? 2 : 4;
    Rng r1(seed), r2(seed);
    Tensor a = degrade(hr, s, cfg, r1);
    Tensor b = degrade(hr, s, cfg, r2);
    CHECK(a.v == b.v);
    CHECK(a.shape == std::vector<int>{3, 32 / s, 128 / s});
  }
  Rng rng(1);
  CHECK_THROWS_AS(degrade(hr, 3, cfg, rng), std::invalid_argument);
}

TEST_CASE("ppm quantization uses half-up rounding and round-trips") {
  Tensor img({3, 2, 2});
  img.v = {0.0, 0.5 / 255.0, 1.5 / 255.0, 1.0, 0.999, 0.25, 0.5, 0.75,
           0.1, 0.2, 0.3, 2.0};
  ByteImage q = quantize_image(img);
  CHECK(q.bytes[0] == 0);
  CHECK(q.bytes[1] == 1);  // exactly .5 rounds up
  CHECK(q.bytes[2] == 2);
  CHECK(q.bytes[3] == 255);
  CHECK(q.bytes[11] == 255);  // clamped

  fs::path dir = fs::temp_directory_path() / "textsr_ppm_test";
  fs::create_directories(dir);
  write_ppm((dir / "img.ppm").string(), q);
  ByteImage back = read_ppm((dir / "img.ppm").string());
  CHECK(back.bytes == q.bytes);
  CHECK(back.h == 2);
  CHECK(back.w == 2);
}

TEST_CASE("bicubic resize reproduces constants and dims") {
  Tensor img({3, 8, 16}, 0.37);
  Tensor up = bicubic_resize(img, 32, 64);
  CHECK(up.shape == std::vector<int>{3, 32, 64});
  for (double x : up.v) CHECK(x == doctest::Approx(0.37).epsilon(1e-12));
}

TEST_CASE("dataset regeneration is byte-identical and reproducible") {
  DatasetConfig cfg = tiny_config();
  fs::path base = fs::temp_directory_path() / "textsr_ds_test";
  fs::remove_all(base);
  build_dataset(cfg, 12, 999, (base / "a").string());
  build_dataset(cfg, 12, 999, (base / "b").string());

  for (const char* rel : {"manifest.json", "labels.tsv", "hr/000000.ppm", "hr/000011.ppm",
                          "lr/000005.ppm"}) {
    CHECK(read_file(base / "a" / rel) == read_file(base / "b" / rel));
  }
  CHECK(dataset_fingerprint((base / "a").string()) == dataset_fingerprint((base / "b").string()));

  Dataset ds = load_dataset((base / "a").string());
  CHECK(ds.samples.size() == 12);
  CHECK(ds.cfg.alphabet_size == cfg.alphabet_size);
  CHECK(ds.cfg.scale == cfg.scale);
  for (const auto& s : ds.samples) {
    CHECK(!s.content.empty());
    CHECK(static_cast<int>(s.content.size()) <= cfg.max_content_len);
    for (int c : s.content) CHECK(c < cfg.alphabet_size - 1);
    CHECK(pad_suffix_wellformed(ds.padded_label(0), ds.pad_index()));
    CHECK(s.lr.h == cfg.hr_h / cfg.scale);
    CHECK(s.lr.w == cfg.hr_w / cfg.scale);
  }
}

TEST_CASE("stored lr reproduces from stored hr and per-sample seed") {
  DatasetConfig cfg = tiny_config();
  fs::path dir = fs::temp_directory_path() / "textsr_ds_repro";
  fs::remove_all(dir);
  build_dataset(cfg, 6, 4242, dir.string());
  Dataset ds = load_dataset(dir.string());
  for (int i = 0; i < 6; ++i) {
    Rng rng(derive_seed(ds.samples[i].seed, kStreamDegrade));
    Tensor lr = degrade(dequantize_image(ds.samples[i].hr), cfg.scale, cfg.degrade, rng);
    CHECK(quantize_image(lr).bytes == ds.samples[i].lr.bytes);
  }
}

TEST_CASE("character marginals are uniform") {
  DatasetConfig cfg = tiny_config();
  GlyphFont font = make_font(cfg.alphabet_size - 1, cfg.glyph_rows, cfg.glyph_cols,
                             cfg.glyph_min_hamming, cfg.font_seed);
  const int n = 10000;
  std::vector<long long> counts(cfg.alphabet_size - 1, 0);
  long long total = 0;
  for (int i = 0; i < n; ++i) {
    SampleRecord rec = generate_sample(cfg, font, sample_seed(31337, i));
    for (int c : rec.content) {
      ++counts[c];
      ++total;
    }
  }
  double p = 1.0 / (cfg.alphabet_size - 1);
  for (int k = 0; k < cfg.alphabet_size - 1; ++k) {
    double freq = counts[k] / static_cast<double>(total);
    double se = std::sqrt(p * (1 - p) / total);
    CHECK(std::abs(freq - p) <= 3 * se);
  }
}

}  // TEST_SUITE
