#pragma once

#include <string>
#include <vector>

#include "textsr/categorical.hpp"
#include "textsr/layers.hpp"

namespace textsr {

struct ModelConfig {
  int latent_patch = 4;
  int latent_h = 8, latent_w = 32;  // HR dims / patch
  int seq_slots = 8;                // L
  int alphabet_size = 17;           // K including PAD
  int time_dim = 32;
  int idm_channels = 24;  // UNet base width
  int cond_dim = 32;      // text-conditioning feature dim (Ccond)
  int tdm_dim = 48;
  int tdm_blocks = 2;
  int icond_dim = 48;  // image-conditioning feature dim (Icond)
  int mom_channels = 16;
  int rec_c1 = 12, rec_c2 = 24, rec_c3 = 32;

  int latent_channels() const { return 3 * latent_patch * latent_patch; }
  int icond_len() const { return (latent_h / 2) * (latent_w / 2); }
};

// Noise-prediction UNet over concatenated [Z_t, Z_LR] with sinusoidal time
// embedding per block and one text cross-attention per resolution. The
// output convolution is zero-initialized unless rand_head is set (used by
// gradient checks, which need generically nonzero gradients).
struct IdmUnet {
  ModelConfig cfg;
  std::string prefix = "idm";
  void init(ParameterStore& s, Rng& rng, bool rand_head = false) const;
  // z_t, z_lr: (B,Zc,h,w) nodes; ccond: (B*L, cond_dim) node.
  int forward(Graph& g, Binder& b, int z_t, int z_lr, int ccond, const std::vector<int>& t) const;
};

// Transformer decoder over hard one-hot text states with cross-attention to
// the image condition; returns per-position logits (B*L, K).
struct TdmDecoder {
  ModelConfig cfg;
  std::string prefix = "tdm";
  void init(ParameterStore& s, Rng& rng, bool rand_head = false) const;
  int forward(Graph& g, Binder& b, const std::vector<int>& c_t_flat, int icond, int icond_len,
              const std::vector<int>& t, int B) const;
};

// Fusion module: a time-aware UNet over [Z_LR, Z_t] with text cross-attention
// produces Icond; a transformer encoder over embedded c_t produces Ccond.
// Both output projections are zero-initialized unless rand_head is set.
struct MomModule {
  ModelConfig cfg;
  std::string prefix = "mom";
  void init(ParameterStore& s, Rng& rng, bool rand_head = false) const;
  struct Out {
    int icond;  // (B*icond_len, icond_dim)
    int ccond;  // (B*L, cond_dim)
  };
  Out forward(Graph& g, Binder& b, int z_lr, int z_t, const std::vector<int>& c_t_flat,
              const std::vector<int>& t, int B) const;
};

// Fixed-slot convolutional column classifier; logits (B*slots, K).
struct Recognizer {
  ModelConfig cfg;
  int img_h = 32, img_w = 128;
  std::string prefix = "rec";
  void init(ParameterStore& s, Rng& rng, bool rand_head = false) const;
  int forward(Graph& g, Binder& b, int img) const;
};

// Baseline text-prior encoder F: embeds a sequence into Ccond space.
struct TextPriorEncoder {
  ModelConfig cfg;
  std::string prefix = "fpsi";
  void init(ParameterStore& s, Rng& rng) const;
  int forward(Graph& g, Binder& b, const std::vector<int>& c_flat, int B) const;
};

// Image condition from Z_LR alone (TDM pretraining and the no-fusion variant).
struct LrCondEncoder {
  ModelConfig cfg;
  std::string prefix = "lrenc";
  void init(ParameterStore& s, Rng& rng) const;
  int forward(Graph& g, Binder& b, int z_lr) const;
};

// --- single-sample convenience wrappers (fresh graph per call) ---

Tensor idm_denoise(const Tensor& z_t, const Tensor& z_lr, const Tensor& ccond, int t,
                   const IdmUnet& net, ParameterStore& store);
CategoricalDistribution tdm_denoise(const CharSequence& c_t, const Tensor& icond, int t,
                                    const TdmDecoder& net, ParameterStore& store);
// Returns (Icond (icond_len, icond_dim), Ccond (L, cond_dim)).
std::pair<Tensor, Tensor> mom_forward(const Tensor& z_lr, const Tensor& z_t,
                                      const CharSequence& c_t, int t, const MomModule& net,
                                      ParameterStore& store);
// Argmax per slot with first-index tie break; PAD forced to a suffix.
CharSequence recognize(const Tensor& x_hr_grid, const Recognizer& net, ParameterStore& store);
Tensor text_prior_encode(const CharSequence& c, const TextPriorEncoder& net,
                         ParameterStore& store);

// Row-wise softmax of a logits tensor into a distribution.
CategoricalDistribution softmax_distribution(const Tensor& logits);

}  // namespace textsr
