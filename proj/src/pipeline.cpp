#include "textsr/pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "textsr/image.hpp"
#include "textsr/metrics.hpp"

namespace textsr {

namespace {

enum : uint64_t { kStageRec = 1, kStageIdm = 2, kStageTdm = 3, kStageJoint = 4 };

Rng step_rng(uint64_t seed, uint64_t stage, long long step) {
  return Rng(derive_seed(derive_seed(seed, kStreamTrain + stage), static_cast<uint64_t>(step)));
}

Tensor stack(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("stack: empty batch");
  std::vector<int> shape = parts[0].shape;
  shape.insert(shape.begin(), static_cast<int>(parts.size()));
  Tensor out(shape);
  size_t n = parts[0].v.size();
  for (size_t i = 0; i < parts.size(); ++i) {
    if (parts[i].v.size() != n) throw std::invalid_argument("stack: ragged batch");
    std::copy(parts[i].v.begin(), parts[i].v.end(), out.v.begin() + i * n);
  }
  return out;
}

Tensor slice_batch(const Tensor& batch, int i) {
  std::vector<int> shape(batch.shape.begin() + 1, batch.shape.end());
  Tensor out(shape);
  size_t n = out.v.size();
  std::copy(batch.v.begin() + i * n, batch.v.begin() + (i + 1) * n, out.v.begin());
  return out;
}

Tensor slice_rows_tensor(const Tensor& t, int r0, int n) {
  Tensor out({n, t.shape[1]});
  std::copy(t.v.begin() + static_cast<size_t>(r0) * t.shape[1],
            t.v.begin() + static_cast<size_t>(r0 + n) * t.shape[1], out.v.begin());
  return out;
}

std::vector<int> flatten_all(const std::vector<CharSequence>& seqs) {
  std::vector<int> out;
  for (const auto& s : seqs) out.insert(out.end(), s.begin(), s.end());
  return out;
}

double mean_row_entropy(const CategoricalDistribution& d) {
  double acc = 0.0;
  for (int i = 0; i < d.L; ++i)
    for (int k = 0; k < d.K; ++k) {
      double p = d.at(i, k);
      if (p > 0.0) acc -= p * std::log(p);
    }
  return acc / d.L;
}

void append_loss(std::ofstream* csv, long long step, double loss, double a = NAN,
                 double b = NAN) {
  if (!csv || !csv->is_open()) return;
  char buf[128];
  if (std::isnan(a))
    std::snprintf(buf, sizeof(buf), "%lld,%.9g\n", step, loss);
  else
    std::snprintf(buf, sizeof(buf), "%lld,%.9g,%.9g,%.9g\n", step, loss, a, b);
  (*csv) << buf;
}

}  // namespace

Variant variant_from_string(const std::string& s) {
  if (s == "exp1") return Variant::EXP1;
  if (s == "exp2") return Variant::EXP2;
  if (s == "exp3") return Variant::EXP3;
  if (s == "full") return Variant::FULL;
  throw std::invalid_argument("unknown variant: " + s);
}

std::string variant_to_string(Variant v) {
  switch (v) {
    case Variant::EXP1: return "exp1";
    case Variant::EXP2: return "exp2";
    case Variant::EXP3: return "exp3";
    case Variant::FULL: return "full";
  }
  return "?";
}

ModelBank ModelBank::make(const ModelConfig& cfg, int img_h, int img_w) {
  if (img_h % cfg.latent_patch != 0 || img_w % cfg.latent_patch != 0)
    throw std::invalid_argument("ModelBank: image dims not divisible by latent patch");
  ModelBank bank;
  bank.cfg = cfg;
  bank.cfg.latent_h = img_h / cfg.latent_patch;
  bank.cfg.latent_w = img_w / cfg.latent_patch;
  if (bank.cfg.latent_h % 2 != 0 || bank.cfg.latent_w % 2 != 0)
    throw std::invalid_argument("ModelBank: latent dims must be even for pooling");
  bank.img_h = img_h;
  bank.img_w = img_w;
  bank.codec = LatentCodec::make(cfg.latent_patch);
  bank.idm.cfg = bank.cfg;
  bank.tdm.cfg = bank.cfg;
  bank.mom.cfg = bank.cfg;
  bank.rec.cfg = bank.cfg;
  bank.rec.img_h = img_h;
  bank.rec.img_w = img_w;
  bank.fpsi.cfg = bank.cfg;
  bank.lrenc.cfg = bank.cfg;
  return bank;
}

void ModelBank::init_network(const std::string& which, Rng& rng) {
  if (which == "rec") {
    rec.init(store, rng);
  } else if (which == "idm") {
    idm.init(store, rng);
    fpsi.init(store, rng);
  } else if (which == "tdm") {
    tdm.init(store, rng);
    lrenc.init(store, rng);
  } else if (which == "mom") {
    mom.init(store, rng);
  } else {
    throw std::invalid_argument("init_network: unknown group " + which);
  }
}

bool ModelBank::has_network(const std::string& prefix) const {
  return !store.names_with_prefix(prefix + ".").empty();
}

void ModelBank::require_for(Variant v) const {
  auto need = [&](const char* p) {
    if (!has_network(p))
      throw std::invalid_argument(std::string("checkpoint is missing the '") + p +
                                  "' network required by variant " + variant_to_string(v));
  };
  need("rec");
  need("idm");
  if (v == Variant::EXP2 || v == Variant::EXP3) need("fpsi");
  if (v == Variant::EXP3 || v == Variant::FULL) need("tdm");
  if (v == Variant::EXP3) need("lrenc");
  if (v == Variant::FULL) need("mom");
}

Tensor standardize_latent(Tensor z) {
  for (double& x : z.v) x = 2.0 * x - 1.0;
  return z;
}

Tensor unstandardize_latent(Tensor z) {
  for (double& x : z.v) x = (x + 1.0) / 2.0;
  return z;
}

Tensor upsample_lr_to_hr(const ByteImage& lr, int hr_h, int hr_w) {
  return clamp01(bicubic_resize(dequantize_image(lr), hr_h, hr_w));
}

// ---------------------------------------------------------------------------
// Sampling: encode Z_LR, draw Z_T, read the initial text from the LR image,
// then walk t = T..1 through both branches and decode.
// ---------------------------------------------------------------------------

std::vector<SampleResult> sample_batch(ModelBank& bank, const std::vector<Tensor>& x_lr_up,
                                       const NoiseSchedule& sched_idm,
                                       const NoiseSchedule& sched_tdm,
                                       const std::vector<uint64_t>& seeds, Variant variant,
                                       const std::vector<CharSequence>* force_text,
                                       bool keep_trace) {
  bank.require_for(variant);
  if (sched_idm.T != sched_tdm.T)
    throw std::invalid_argument("sample_batch: branches must share the step count T");
  int B = static_cast<int>(x_lr_up.size());
  if (B == 0 || seeds.size() != x_lr_up.size())
    throw std::invalid_argument("sample_batch: batch/seed size mismatch");
  const ModelConfig& cfg = bank.cfg;
  int L = cfg.seq_slots, T = sched_idm.T;
  std::vector<int> latent_shape{cfg.latent_channels(), cfg.latent_h, cfg.latent_w};

  std::vector<Rng> rngs;
  std::vector<Tensor> z_lr(B), z_t(B);
  std::vector<CharSequence> c_T(B), c_t(B);
  for (int i = 0; i < B; ++i) {
    const Tensor& x = x_lr_up[i];
    if (x.rank() != 3 || x.shape[0] != 3 || x.shape[1] != bank.img_h || x.shape[2] != bank.img_w)
      throw std::invalid_argument("sample_batch: LR input must be on the HR grid");
    rngs.emplace_back(derive_seed(seeds[i], kStreamSample));
    z_lr[i] = standardize_latent(codec_encode(x, bank.codec));
    z_t[i] = randn(latent_shape, rngs[i]);
    if (variant != Variant::EXP1) {
      c_T[i] = force_text ? pad_to(strip_pad((*force_text)[i], cfg.alphabet_size - 1), L,
                                   cfg.alphabet_size - 1)
                          : recognize(x, bank.rec, bank.store);
      c_t[i] = c_T[i];
    }
  }

  Tensor ccond_fixed;
  if (variant == Variant::EXP2) {
    Graph g;
    Binder b(g, bank.store, false);
    ccond_fixed = g.val(bank.fpsi.forward(g, b, flatten_all(c_T), B));
  }

  std::vector<SampleTrace> traces(B);
  for (int t = T; t >= 1; --t) {
    // Gaussian perturbation for this step, drawn first in each stream.
    std::vector<Tensor> noise(B);
    for (int i = 0; i < B; ++i)
      noise[i] = t > 1 ? randn(latent_shape, rngs[i]) : Tensor(latent_shape);

    Graph g;
    Binder b(g, bank.store, false);
    int z_t_node = g.constant(stack(z_t));
    int z_lr_node = g.constant(stack(z_lr));
    std::vector<int> t_vec(B, t);

    int ccond = -1, icond = -1;
    switch (variant) {
      case Variant::EXP1:
        ccond = g.constant(Tensor({B * L, cfg.cond_dim}));
        break;
      case Variant::EXP2:
        ccond = g.constant(ccond_fixed);
        break;
      case Variant::EXP3:
        ccond = bank.fpsi.forward(g, b, flatten_all(c_t), B);
        icond = bank.lrenc.forward(g, b, z_lr_node);
        break;
      case Variant::FULL: {
        auto out = bank.mom.forward(g, b, z_lr_node, z_t_node, flatten_all(c_t), t_vec, B);
        icond = out.icond;
        ccond = out.ccond;
        break;
      }
    }

    int eps_node = bank.idm.forward(g, b, z_t_node, z_lr_node, ccond, t_vec);
    int logits = -1;
    if (variant == Variant::EXP3 || variant == Variant::FULL)
      logits = bank.tdm.forward(g, b, flatten_all(c_t), icond, cfg.icond_len(), t_vec, B);
    // Node storage can reallocate while the graph grows, so values are read
    // only after the last op was created.
    const Tensor& eps_val = g.val(eps_node);

    std::vector<double> entropies(B, 0.0);
    std::vector<CharSequence> c_next = c_t;
    if (logits >= 0) {
      const Tensor& lg = g.val(logits);
      for (int i = 0; i < B; ++i) {
        CategoricalDistribution pred = softmax_distribution(slice_rows_tensor(lg, i * L, L));
        entropies[i] = mean_row_entropy(pred);
        c_next[i] = sample_step(c_t[i], pred, t, sched_tdm, rngs[i]);
      }
    }

    if (keep_trace)
      for (int i = 0; i < B; ++i) traces[i].rows.push_back({t, c_t[i], entropies[i]});

    for (int i = 0; i < B; ++i)
      z_t[i] = ddpm_step(z_t[i], slice_batch(eps_val, i), t, sched_idm, noise[i]);
    c_t = std::move(c_next);
  }

  std::vector<SampleResult> results(B);
  for (int i = 0; i < B; ++i) {
    results[i].x0 = clamp01(codec_decode(unstandardize_latent(z_t[i]), bank.codec));
    switch (variant) {
      case Variant::EXP1:
        results[i].text = recognize(results[i].x0, bank.rec, bank.store);
        break;
      case Variant::EXP2:
        results[i].text = c_T[i];
        break;
      default:
        results[i].text = c_t[i];
    }
    results[i].trace = std::move(traces[i]);
  }
  return results;
}

SampleResult difftsr_sample(ModelBank& bank, const Tensor& x_lr_up,
                            const NoiseSchedule& sched_idm, const NoiseSchedule& sched_tdm,
                            uint64_t seed, Variant variant, const CharSequence* force_text) {
  std::vector<CharSequence> forced;
  if (force_text) forced.push_back(*force_text);
  auto res = sample_batch(bank, {x_lr_up}, sched_idm, sched_tdm, {seed}, variant,
                          force_text ? &forced : nullptr, /*keep_trace=*/true);
  return std::move(res[0]);
}

// ---------------------------------------------------------------------------
// Training stages
// ---------------------------------------------------------------------------

namespace {

struct StageLogger {
  std::ofstream csv;
  TrainStats stats;
  int log_every;

  StageLogger(const std::string& path, int every, bool joint = false)
      : log_every(std::max(1, every)) {
    if (!path.empty()) {
      csv.open(path);
      if (!csv) throw std::runtime_error("cannot open loss log " + path);
      csv << (joint ? "step,loss,loss_idm,loss_tdm\n" : "step,loss\n");
    }
  }

  // Returns false when the loss diverged.
  bool record(long long step, double loss, double a = NAN, double b = NAN) {
    if (stats.loss_log.empty()) stats.first_loss = loss;
    stats.final_loss = loss;
    stats.loss_log.emplace_back(step, loss);
    if (stats.loss_log.size() == 1 || step % log_every == 0 || !std::isfinite(loss))
      append_loss(&csv, step, loss, a, b);
    if (!std::isfinite(loss)) {
      stats.diverged = true;
      return false;
    }
    return true;
  }
};

std::vector<int> draw_indices(Rng& rng, int n, int batch) {
  std::vector<int> idx(batch);
  for (int& i : idx) i = uniform_int(rng, 0, n - 1);
  return idx;
}

}  // namespace

JointBatch draw_joint_batch(const Dataset& ds, const ModelBank& bank, const TrainConfig& cfg,
                            const NoiseSchedule& sched_idm, const NoiseSchedule& sched_tdm,
                            uint64_t seed, long long step) {
  Rng rng = step_rng(seed, kStageJoint, step);
  JointBatch batch;
  batch.sample_idx = draw_indices(rng, static_cast<int>(ds.samples.size()), cfg.batch);
  std::vector<int> latent_shape{bank.cfg.latent_channels(), bank.cfg.latent_h,
                                bank.cfg.latent_w};
  for (int idx : batch.sample_idx) {
    const SampleRecord& rec = ds.samples[idx];
    batch.z0.push_back(
        standardize_latent(codec_encode(dequantize_image(rec.hr), bank.codec)));
    batch.z_lr.push_back(standardize_latent(
        codec_encode(upsample_lr_to_hr(rec.lr, bank.img_h, bank.img_w), bank.codec)));
    int t = uniform_int(rng, 1, sched_idm.T);
    batch.t.push_back(t);
    batch.eps.push_back(randn(latent_shape, rng));
    CharSequence c0 = pad_to(rec.content, bank.cfg.seq_slots, bank.cfg.alphabet_size - 1);
    batch.c0.push_back(c0);
    batch.c_t.push_back(sample_categorical(
        q_marginal_probs(c0, sched_tdm.alpha_bar(t), bank.cfg.alphabet_size), rng));
  }
  return batch;
}

TrainStats train_recognizer(ModelBank& bank, const Dataset& ds, const TrainConfig& cfg,
                            uint64_t seed, int steps, const std::string& loss_csv,
                            long long start_step) {
  if (!bank.has_network("rec")) {
    Rng init_rng(derive_seed(seed, 0xC0DE));
    bank.init_network("rec", init_rng);
  }
  Adam opt(cfg.adam());
  opt.set_step_count(start_step);
  StageLogger log(loss_csv, cfg.log_every);
  int n = static_cast<int>(ds.samples.size());
  for (long long s = start_step; s < start_step + steps; ++s) {
    Rng rng = step_rng(seed, kStageRec, s);
    std::vector<int> idx = draw_indices(rng, n, cfg.batch);
    std::vector<Tensor> imgs;
    std::vector<int> targets;
    for (int i : idx) {
      bool clean = uniform01(rng) < cfg.rec_clean_prob;
      imgs.push_back(clean ? dequantize_image(ds.samples[i].hr)
                           : upsample_lr_to_hr(ds.samples[i].lr, bank.img_h, bank.img_w));
      CharSequence c0 = ds.padded_label(i);
      targets.insert(targets.end(), c0.begin(), c0.end());
    }
    Graph g;
    Binder b(g, bank.store);
    int logits = bank.rec.forward(g, b, g.constant(stack(imgs)));
    int loss = g.softmax_ce_loss(logits, targets);
    if (!log.record(s, g.val(loss).v[0])) break;
    g.backward(loss);
    opt.step(bank.store, b.collect_grads());
  }
  return log.stats;
}

TrainStats train_idm(ModelBank& bank, const Dataset& ds, const NoiseSchedule& sched_idm,
                     const TrainConfig& cfg, uint64_t seed, int steps,
                     const std::string& loss_csv, long long start_step) {
  if (!bank.has_network("idm")) {
    Rng init_rng(derive_seed(seed, 0x1D41));
    bank.init_network("idm", init_rng);
  }
  Adam opt(cfg.adam());
  opt.set_step_count(start_step);
  StageLogger log(loss_csv, cfg.log_every);
  int n = static_cast<int>(ds.samples.size());
  int L = bank.cfg.seq_slots;
  std::vector<int> latent_shape{bank.cfg.latent_channels(), bank.cfg.latent_h,
                                bank.cfg.latent_w};

  for (long long s = start_step; s < start_step + steps; ++s) {
    Rng rng = step_rng(seed, kStageIdm, s);
    std::vector<int> idx = draw_indices(rng, n, cfg.batch);
    std::vector<Tensor> zts, zlrs, epss;
    std::vector<int> ts;
    std::vector<CharSequence> labels;
    Tensor mask({cfg.batch * L, bank.cfg.cond_dim});
    for (int bi = 0; bi < cfg.batch; ++bi) {
      const SampleRecord& rec = ds.samples[idx[bi]];
      Tensor z0 = standardize_latent(codec_encode(dequantize_image(rec.hr), bank.codec));
      zlrs.push_back(standardize_latent(
          codec_encode(upsample_lr_to_hr(rec.lr, bank.img_h, bank.img_w), bank.codec)));
      int t = uniform_int(rng, 1, sched_idm.T);
      ts.push_back(t);
      epss.push_back(randn(latent_shape, rng));
      zts.push_back(q_sample(z0, t, epss.back(), sched_idm));
      labels.push_back(ds.padded_label(idx[bi]));
      // Per-sample text-condition dropout; the null condition is all-zero.
      double keep = uniform01(rng) < cfg.cond_dropout ? 0.0 : 1.0;
      for (int r = 0; r < L; ++r)
        for (int c = 0; c < bank.cfg.cond_dim; ++c) mask.at(bi * L + r, c) = keep;
    }

    Graph g;
    Binder b(g, bank.store);
    int ccond = bank.fpsi.forward(g, b, flatten_all(labels), cfg.batch);
    ccond = g.mul(ccond, g.constant(mask));
    int eps_pred =
        bank.idm.forward(g, b, g.constant(stack(zts)), g.constant(stack(zlrs)), ccond, ts);
    int loss = g.mse_loss(eps_pred, stack(epss));
    if (!log.record(s, g.val(loss).v[0])) break;
    g.backward(loss);
    opt.step(bank.store, b.collect_grads());
  }
  return log.stats;
}

TrainStats train_tdm(ModelBank& bank, const Dataset& ds, const NoiseSchedule& sched_tdm,
                     const TrainConfig& cfg, uint64_t seed, int steps,
                     const std::string& loss_csv, long long start_step) {
  if (!bank.has_network("tdm")) {
    Rng init_rng(derive_seed(seed, 0x7D41));
    bank.init_network("tdm", init_rng);
  }
  Adam opt(cfg.adam());
  opt.set_step_count(start_step);
  StageLogger log(loss_csv, cfg.log_every);
  int n = static_cast<int>(ds.samples.size());
  int K = bank.cfg.alphabet_size;

  for (long long s = start_step; s < start_step + steps; ++s) {
    Rng rng = step_rng(seed, kStageTdm, s);
    std::vector<int> idx = draw_indices(rng, n, cfg.batch);
    std::vector<Tensor> zlrs;
    std::vector<int> ts, targets;
    std::vector<CharSequence> cts;
    for (int bi = 0; bi < cfg.batch; ++bi) {
      const SampleRecord& rec = ds.samples[idx[bi]];
      zlrs.push_back(standardize_latent(
          codec_encode(upsample_lr_to_hr(rec.lr, bank.img_h, bank.img_w), bank.codec)));
      int t = uniform_int(rng, 1, sched_tdm.T);
      ts.push_back(t);
      CharSequence c0 = ds.padded_label(idx[bi]);
      targets.insert(targets.end(), c0.begin(), c0.end());
      cts.push_back(sample_categorical(q_marginal_probs(c0, sched_tdm.alpha_bar(t), K), rng));
    }
    Graph g;
    Binder b(g, bank.store);
    int icond = bank.lrenc.forward(g, b, g.constant(stack(zlrs)));
    int logits =
        bank.tdm.forward(g, b, flatten_all(cts), icond, bank.cfg.icond_len(), ts, cfg.batch);
    int loss = g.softmax_ce_loss(logits, targets);
    if (!log.record(s, g.val(loss).v[0])) break;
    g.backward(loss);
    opt.step(bank.store, b.collect_grads());
  }
  return log.stats;
}

TrainStats train_joint(ModelBank& bank, const Dataset& ds, const NoiseSchedule& sched_idm,
                       const NoiseSchedule& sched_tdm, const TrainConfig& cfg, uint64_t seed,
                       int steps, const std::string& loss_csv, long long start_step) {
  for (const char* p : {"rec", "idm", "tdm"})
    if (!bank.has_network(p))
      throw std::invalid_argument("train_joint: pretrained branches required (missing " +
                                  std::string(p) + ")");
  if (!bank.has_network("mom")) {
    Rng init_rng(derive_seed(seed, 0x0F0F));
    bank.init_network("mom", init_rng);
  }
  Adam opt(cfg.adam());
  opt.set_step_count(start_step);
  StageLogger log(loss_csv, cfg.log_every, /*joint=*/true);

  for (long long s = start_step; s < start_step + steps; ++s) {
    JointBatch batch = draw_joint_batch(ds, bank, cfg, sched_idm, sched_tdm, seed, s);
    std::vector<Tensor> zts(cfg.batch);
    for (int bi = 0; bi < cfg.batch; ++bi)
      zts[bi] = q_sample(batch.z0[bi], batch.t[bi], batch.eps[bi], sched_idm);

    Graph g;
    Binder b_mom(g, bank.store, /*trainable=*/true);
    Binder b_frozen(g, bank.store, /*trainable=*/!cfg.freeze_branches_in_joint);
    int z_t_node = g.constant(stack(zts));
    int z_lr_node = g.constant(stack(batch.z_lr));
    auto conds = bank.mom.forward(g, b_mom, z_lr_node, z_t_node, flatten_all(batch.c_t),
                                  batch.t, cfg.batch);
    int eps_pred = bank.idm.forward(g, b_frozen, z_t_node, z_lr_node, conds.ccond, batch.t);
    int logits = bank.tdm.forward(g, b_frozen, flatten_all(batch.c_t), conds.icond,
                                  bank.cfg.icond_len(), batch.t, cfg.batch);
    int l_idm = g.mse_loss(eps_pred, stack(batch.eps));
    int l_tdm = g.softmax_ce_loss(logits, flatten_all(batch.c0));
    int loss = g.add(l_idm, g.scale(l_tdm, cfg.lambda_tdm));
    if (!log.record(s, g.val(loss).v[0], g.val(l_idm).v[0], g.val(l_tdm).v[0])) break;
    g.backward(loss);
    auto grads = b_mom.collect_grads();
    if (!cfg.freeze_branches_in_joint) {
      auto extra = b_frozen.collect_grads();
      grads.insert(extra.begin(), extra.end());
    }
    opt.step(bank.store, grads);
  }
  return log.stats;
}

}  // namespace textsr
