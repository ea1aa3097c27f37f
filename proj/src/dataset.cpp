#include "textsr/dataset.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace textsr {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string index_name(int i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%06d.ppm", i);
  return buf;
}

json degrade_to_json(const DegradeConfig& d) {
  return json{{"blur_prob", d.blur_prob},
              {"blur_sigma_min", d.blur_sigma_min},
              {"blur_sigma_max", d.blur_sigma_max},
              {"noise_prob", d.noise_prob},
              {"noise_sigma_min", d.noise_sigma_min},
              {"noise_sigma_max", d.noise_sigma_max},
              {"contrast_prob", d.contrast_prob},
              {"contrast_min", d.contrast_min},
              {"contrast_max", d.contrast_max},
              {"brightness_min", d.brightness_min},
              {"brightness_max", d.brightness_max},
              {"occlude_prob", d.occlude_prob},
              {"occlude_max_area", d.occlude_max_area},
              {"second_noise_prob", d.second_noise_prob},
              {"second_noise_sigma_min", d.second_noise_sigma_min},
              {"second_noise_sigma_max", d.second_noise_sigma_max}};
}

DegradeConfig degrade_from_json(const json& j) {
  DegradeConfig d;
  d.blur_prob = j.at("blur_prob");
  d.blur_sigma_min = j.at("blur_sigma_min");
  d.blur_sigma_max = j.at("blur_sigma_max");
  d.noise_prob = j.at("noise_prob");
  d.noise_sigma_min = j.at("noise_sigma_min");
  d.noise_sigma_max = j.at("noise_sigma_max");
  d.contrast_prob = j.at("contrast_prob");
  d.contrast_min = j.at("contrast_min");
  d.contrast_max = j.at("contrast_max");
  d.brightness_min = j.at("brightness_min");
  d.brightness_max = j.at("brightness_max");
  d.occlude_prob = j.at("occlude_prob");
  d.occlude_max_area = j.at("occlude_max_area");
  d.second_noise_prob = j.at("second_noise_prob");
  d.second_noise_sigma_min = j.at("second_noise_sigma_min");
  d.second_noise_sigma_max = j.at("second_noise_sigma_max");
  return d;
}

json style_to_json(const StyleRanges& s) {
  return json{{"min_luminance_gap", s.min_luminance_gap},
              {"glyph_scale_min", s.glyph_scale_min},
              {"glyph_scale_max", s.glyph_scale_max},
              {"max_jitter", s.max_jitter},
              {"dilate_prob", s.dilate_prob}};
}

StyleRanges style_from_json(const json& j) {
  StyleRanges s;
  s.min_luminance_gap = j.at("min_luminance_gap");
  s.glyph_scale_min = j.at("glyph_scale_min");
  s.glyph_scale_max = j.at("glyph_scale_max");
  s.max_jitter = j.at("max_jitter");
  s.dilate_prob = j.at("dilate_prob");
  return s;
}

}  // namespace

uint64_t fnv1a64(const void* data, size_t n, uint64_t h) {
  const uint8_t* p = static_cast<const uint8_t*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

SampleRecord generate_sample(const DatasetConfig& cfg, const GlyphFont& font, uint64_t seed) {
  SampleRecord rec;
  rec.seed = seed;
  Rng render_rng(derive_seed(seed, kStreamRender));
  int len = uniform_int(render_rng, 1, cfg.max_content_len);
  rec.content.resize(len);
  for (int i = 0; i < len; ++i) rec.content[i] = uniform_int(render_rng, 0, cfg.alphabet_size - 2);
  StyleDescriptor style;
  int tries = 0;
  do {
    if (++tries > 1000)
      throw std::runtime_error("generate_sample: no fitting style for this canvas");
    style = sample_style(cfg.style, render_rng);
  } while (!style_fits(font, style, cfg.hr_h, cfg.hr_w, cfg.seq_slots));

  Tensor hr = render_text_image(rec.content, font, style, cfg.hr_h, cfg.hr_w, cfg.seq_slots,
                                cfg.alphabet_size - 1);
  rec.hr = quantize_image(hr);

  // Degrade the dequantized stored HR so lr reproduces from (hr file, seed).
  Rng degrade_rng(derive_seed(seed, kStreamDegrade));
  Tensor lr = degrade(dequantize_image(rec.hr), cfg.scale, cfg.degrade, degrade_rng);
  rec.lr = quantize_image(lr);
  return rec;
}

void build_dataset(const DatasetConfig& cfg, int n, uint64_t master_seed,
                   const std::string& dir) {
  if (n < 1) throw std::invalid_argument("build_dataset: n must be >= 1");
  if (cfg.scale != 2 && cfg.scale != 4)
    throw std::invalid_argument("build_dataset: scale must be 2 or 4");
  if (cfg.hr_h % cfg.scale != 0 || cfg.hr_w % cfg.scale != 0)
    throw std::invalid_argument("build_dataset: HR dims not divisible by scale");

  GlyphFont font = make_font(cfg.alphabet_size - 1, cfg.glyph_rows, cfg.glyph_cols,
                             cfg.glyph_min_hamming, cfg.font_seed);

  std::error_code ec;
  fs::create_directories(fs::path(dir) / "hr", ec);
  fs::create_directories(fs::path(dir) / "lr", ec);
  if (ec) throw std::runtime_error("build_dataset: cannot create " + dir);

  std::ofstream labels(fs::path(dir) / "labels.tsv");
  if (!labels) throw std::runtime_error("build_dataset: cannot write labels.tsv");
  for (int i = 0; i < n; ++i) {
    SampleRecord rec = generate_sample(cfg, font, sample_seed(master_seed, i));
    write_ppm((fs::path(dir) / "hr" / index_name(i)).string(), rec.hr);
    write_ppm((fs::path(dir) / "lr" / index_name(i)).string(), rec.lr);
    labels << i << "\t";
    for (size_t k = 0; k < rec.content.size(); ++k) {
      if (k) labels << " ";
      labels << rec.content[k];
    }
    labels << "\n";
  }
  labels.close();

  json manifest{
      {"format", "textsr-dataset-v1"},
      {"n", n},
      {"master_seed", master_seed},
      {"alphabet_size", cfg.alphabet_size},
      {"pad_index", cfg.alphabet_size - 1},
      {"seq_slots", cfg.seq_slots},
      {"max_content_len", cfg.max_content_len},
      {"hr_h", cfg.hr_h},
      {"hr_w", cfg.hr_w},
      {"scale", cfg.scale},
      {"font", json{{"seed", cfg.font_seed},
                    {"rows", cfg.glyph_rows},
                    {"cols", cfg.glyph_cols},
                    {"min_hamming", cfg.glyph_min_hamming}}},
      {"style", style_to_json(cfg.style)},
      {"degrade", degrade_to_json(cfg.degrade)},
      {"degrade_note",
       "degradation parameter ranges are desk-scale stand-ins, not calibrated "
       "against an external pipeline"},
      {"per_sample_seed", "master_seed XOR (index * 0x9E3779B97F4A7C15)"},
  };
  std::ofstream mf(fs::path(dir) / "manifest.json");
  if (!mf) throw std::runtime_error("build_dataset: cannot write manifest.json");
  mf << manifest.dump(2) << "\n";
}

Dataset load_dataset(const std::string& dir) {
  std::ifstream mf(fs::path(dir) / "manifest.json");
  if (!mf) throw std::runtime_error("load_dataset: missing manifest.json in " + dir);
  json manifest = json::parse(mf);

  Dataset ds;
  ds.master_seed = manifest.at("master_seed");
  ds.cfg.alphabet_size = manifest.at("alphabet_size");
  ds.cfg.seq_slots = manifest.at("seq_slots");
  ds.cfg.max_content_len = manifest.at("max_content_len");
  ds.cfg.hr_h = manifest.at("hr_h");
  ds.cfg.hr_w = manifest.at("hr_w");
  ds.cfg.scale = manifest.at("scale");
  ds.cfg.font_seed = manifest.at("font").at("seed");
  ds.cfg.glyph_rows = manifest.at("font").at("rows");
  ds.cfg.glyph_cols = manifest.at("font").at("cols");
  ds.cfg.glyph_min_hamming = manifest.at("font").at("min_hamming");
  ds.cfg.style = style_from_json(manifest.at("style"));
  ds.cfg.degrade = degrade_from_json(manifest.at("degrade"));
  int n = manifest.at("n");

  ds.font = make_font(ds.cfg.alphabet_size - 1, ds.cfg.glyph_rows, ds.cfg.glyph_cols,
                      ds.cfg.glyph_min_hamming, ds.cfg.font_seed);

  std::ifstream labels(fs::path(dir) / "labels.tsv");
  if (!labels) throw std::runtime_error("load_dataset: missing labels.tsv");
  ds.samples.resize(n);
  std::string line;
  int row = 0;
  while (std::getline(labels, line)) {
    if (line.empty()) continue;
    if (row >= n) throw std::runtime_error("load_dataset: extra label rows");
    std::istringstream ss(line);
    int idx;
    ss >> idx;
    if (idx != row) throw std::runtime_error("load_dataset: label index out of order");
    int ch;
    while (ss >> ch) ds.samples[row].content.push_back(ch);
    ++row;
  }
  if (row != n) throw std::runtime_error("load_dataset: label count mismatch");

  for (int i = 0; i < n; ++i) {
    ds.samples[i].seed = sample_seed(ds.master_seed, i);
    ds.samples[i].hr = read_ppm((fs::path(dir) / "hr" / index_name(i)).string());
    ds.samples[i].lr = read_ppm((fs::path(dir) / "lr" / index_name(i)).string());
  }
  return ds;
}

std::string dataset_fingerprint(const std::string& dir) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (const char* name : {"manifest.json", "labels.tsv"}) {
    std::ifstream f(fs::path(dir) / name, std::ios::binary);
    if (!f) throw std::runtime_error(std::string("dataset_fingerprint: missing ") + name);
    std::stringstream ss;
    ss << f.rdbuf();
    std::string s = ss.str();
    h = fnv1a64(s.data(), s.size(), h);
  }
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace textsr
