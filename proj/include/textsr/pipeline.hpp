#pragma once

#include <optional>
#include <string>
#include <vector>

#include "textsr/codec.hpp"
#include "textsr/dataset.hpp"
#include "textsr/gaussian.hpp"
#include "textsr/networks.hpp"

namespace textsr {

enum class Variant { EXP1, EXP2, EXP3, FULL };
Variant variant_from_string(const std::string& s);
std::string variant_to_string(Variant v);

// All networks plus the codec behind one parameter store. A bank produced by
// the final training stage serves every variant; require_for() checks the
// subset a variant needs.
struct ModelBank {
  ModelConfig cfg;
  int img_h = 32, img_w = 128;
  LatentCodec codec;
  IdmUnet idm;
  TdmDecoder tdm;
  MomModule mom;
  Recognizer rec;
  TextPriorEncoder fpsi;
  LrCondEncoder lrenc;
  ParameterStore store;

  static ModelBank make(const ModelConfig& cfg, int img_h, int img_w);
  void init_network(const std::string& which, Rng& rng);  // "idm+fpsi", "tdm+lrenc", ...
  bool has_network(const std::string& prefix) const;
  void require_for(Variant v) const;  // throws std::invalid_argument when missing
};

// Latents are standardized to about [-1,1] at the diffusion boundary; the
// codec itself stays an exact transform.
Tensor standardize_latent(Tensor z);
Tensor unstandardize_latent(Tensor z);

// Bicubic LR -> HR-grid preprocessing shared by the recognizer and encoder.
Tensor upsample_lr_to_hr(const ByteImage& lr, int hr_h, int hr_w);

struct TraceRow {
  int t = 0;
  CharSequence c_t;          // text state entering step t (empty for EXP1)
  double mean_entropy = 0.0;  // mean per-position entropy of c_pred rows
};

struct SampleTrace {
  std::vector<TraceRow> rows;  // t = T down to 1
};

struct SampleResult {
  Tensor x0;
  CharSequence text;
  SampleTrace trace;
};

// Reverse loop over both branches. x_lr_up entries live on the HR grid.
// Per-sample noise streams derive from seeds[i], so results are independent
// of how samples are grouped into batches.
std::vector<SampleResult> sample_batch(ModelBank& bank, const std::vector<Tensor>& x_lr_up,
                                       const NoiseSchedule& sched_idm,
                                       const NoiseSchedule& sched_tdm,
                                       const std::vector<uint64_t>& seeds, Variant variant,
                                       const std::vector<CharSequence>* force_text,
                                       bool keep_trace);

SampleResult difftsr_sample(ModelBank& bank, const Tensor& x_lr_up,
                            const NoiseSchedule& sched_idm, const NoiseSchedule& sched_tdm,
                            uint64_t seed, Variant variant,
                            const CharSequence* force_text = nullptr);

struct TrainConfig {
  int batch = 16;
  double lr = 1e-3;
  double adam_beta1 = 0.9, adam_beta2 = 0.999, adam_eps = 1e-8;
  double clip_norm = 1.0;
  double cond_dropout = 0.2;     // IDM text-condition dropout probability
  double rec_clean_prob = 0.3;   // recognizer sees clean HR this often
  double lambda_tdm = 1.0;       // joint loss weight
  bool freeze_branches_in_joint = true;
  int steps_recognizer = 1500;
  int steps_idm = 3000;
  int steps_tdm = 1500;
  int steps_joint = 2000;
  int log_every = 50;

  AdamConfig adam() const {
    return AdamConfig{lr, adam_beta1, adam_beta2, adam_eps, clip_norm};
  }
};

struct TrainStats {
  std::vector<std::pair<long long, double>> loss_log;  // (step, loss)
  double first_loss = 0.0, final_loss = 0.0;
  bool diverged = false;
};

// Per-step batch draws are a pure function of (seed, step), which makes
// resumed runs reproduce the continuous run exactly.
struct JointBatch {
  std::vector<int> sample_idx;
  std::vector<Tensor> z0, z_lr;  // standardized latents
  std::vector<int> t;            // shared loop index, drawn once per sample
  std::vector<Tensor> eps;
  std::vector<CharSequence> c_t;  // corrupted labels under the TDM schedule
  std::vector<CharSequence> c0;   // padded labels
};
JointBatch draw_joint_batch(const Dataset& ds, const ModelBank& bank, const TrainConfig& cfg,
                            const NoiseSchedule& sched_idm, const NoiseSchedule& sched_tdm,
                            uint64_t seed, long long step);

TrainStats train_recognizer(ModelBank& bank, const Dataset& ds, const TrainConfig& cfg,
                            uint64_t seed, int steps, const std::string& loss_csv,
                            long long start_step = 0);
TrainStats train_idm(ModelBank& bank, const Dataset& ds, const NoiseSchedule& sched_idm,
                     const TrainConfig& cfg, uint64_t seed, int steps,
                     const std::string& loss_csv, long long start_step = 0);
TrainStats train_tdm(ModelBank& bank, const Dataset& ds, const NoiseSchedule& sched_tdm,
                     const TrainConfig& cfg, uint64_t seed, int steps,
                     const std::string& loss_csv, long long start_step = 0);
TrainStats train_joint(ModelBank& bank, const Dataset& ds, const NoiseSchedule& sched_idm,
                       const NoiseSchedule& sched_tdm, const TrainConfig& cfg, uint64_t seed,
                       int steps, const std::string& loss_csv, long long start_step = 0);

}  // namespace textsr
