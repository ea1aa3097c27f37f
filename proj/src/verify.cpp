#include "textsr/verify.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "textsr/dataset.hpp"
#include "textsr/gaussian.hpp"
#include "textsr/gradcheck.hpp"
#include "textsr/metrics.hpp"
#include "textsr/pipeline.hpp"

namespace textsr {

namespace fs = std::filesystem;

namespace {

NoiseSchedule random_schedule(int T, Rng& rng) {
  NoiseSchedule s;
  s.branch = Branch::TDM;
  s.T = T;
  double bar = 1.0;
  for (int t = 1; t <= T; ++t) {
    s.alphas.push_back(uniform_range(rng, 0.3, 0.999));
    bar *= s.alphas.back();
    s.alpha_bars.push_back(bar);
  }
  s.sigmas.assign(T, 0.0);
  return s;
}

std::string read_file_bytes(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("verify: cannot read " + p.string());
  return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

// Micro model bank used by the gradient-check suite: 16x32 canvas, K=5.
ModelConfig micro_model() {
  ModelConfig m;
  m.latent_patch = 4;
  m.latent_h = 4;
  m.latent_w = 8;
  m.seq_slots = 4;
  m.alphabet_size = 5;
  m.time_dim = 8;
  m.idm_channels = 6;
  m.cond_dim = 6;
  m.tdm_dim = 8;
  m.tdm_blocks = 1;
  m.icond_dim = 8;
  m.mom_channels = 4;
  m.rec_c1 = 4;
  m.rec_c2 = 6;
  m.rec_c3 = 8;
  return m;
}

}  // namespace

VerifyResult verify_posterior_bayes(double posterior_bias) {
  auto start = std::chrono::steady_clock::now();
  Rng rng(0xBA1E5);
  double max_diff = 0.0;
  long long cases = 0;
  for (int K = 2; K <= 4; ++K)
    for (int L = 1; L <= 3; ++L)
      for (int T : {4, 8})
        for (int rep = 0; rep < 100; ++rep) {
          NoiseSchedule s = random_schedule(T, rng);
          for (int t = 2; t <= T; ++t) {
            CharSequence ct(L), c0(L);
            for (int i = 0; i < L; ++i) {
              ct[i] = uniform_int(rng, 0, K - 1);
              c0[i] = uniform_int(rng, 0, K - 1);
            }
            CategoricalDistribution post =
                posterior(ct, CategoricalDistribution::onehot(c0, K), t, s, K);
            if (posterior_bias != 0.0) {
              for (int i = 0; i < L; ++i) {
                post.at(i, 0) += posterior_bias;
                double sum = 0.0;
                for (int k = 0; k < K; ++k) sum += post.at(i, k);
                for (int k = 0; k < K; ++k) post.at(i, k) /= sum;
              }
            }
            CategoricalDistribution oracle = brute_force_posterior(ct, c0, t, s, K);
            for (size_t i = 0; i < post.p.size(); ++i)
              max_diff = std::max(max_diff, std::abs(post.p[i] - oracle.p[i]));
            ++cases;
          }
        }
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%lld cases, max |diff| = %.3g, %.2fs", cases, max_diff, secs);
  return {"categorical posterior vs Bayes oracle", max_diff < 1e-12 && secs < 10.0, buf};
}

VerifyResult verify_forward_composition() {
  auto start = std::chrono::steady_clock::now();
  Rng rng(0xC0);
  double max_diff = 0.0;
  for (int K = 2; K <= 4; ++K)
    for (int T : {4, 8})
      for (int rep = 0; rep < 100; ++rep) {
        NoiseSchedule s = random_schedule(T, rng);
        int c0 = uniform_int(rng, 0, K - 1);
        std::vector<double> p(K, 0.0);
        p[c0] = 1.0;
        for (int t = 1; t <= T; ++t) {
          double a = s.alpha(t);
          for (double& x : p) x = a * x + (1.0 - a) / K;
          CategoricalDistribution m = q_marginal_probs({c0}, s.alpha_bar(t), K);
          for (int k = 0; k < K; ++k) max_diff = std::max(max_diff, std::abs(p[k] - m.at(0, k)));
        }
      }
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  char buf[128];
  std::snprintf(buf, sizeof(buf), "max |diff| = %.3g, %.2fs", max_diff, secs);
  return {"forward-marginal composition", max_diff < 1e-12 && secs < 5.0, buf};
}

VerifyResult verify_t1_inversion() {
  auto start = std::chrono::steady_clock::now();
  Rng rng(0x71);
  double max_err = 0.0;
  for (int rep = 0; rep < 1000; ++rep) {
    NoiseSchedule s = random_schedule(2, rng);
    Tensor z0 = randn({2, 3, 4}, rng);
    Tensor eps = randn({2, 3, 4}, rng);
    Tensor z1 = q_sample(z0, 1, eps, s);
    Tensor rec = ddpm_step(z1, eps, 1, s, Tensor({2, 3, 4}));
    for (size_t i = 0; i < rec.v.size(); ++i)
      max_err = std::max(max_err, std::abs(rec.v[i] - z0.v[i]));
  }
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  char buf[128];
  std::snprintf(buf, sizeof(buf), "1000 instances, max |err| = %.3g, %.2fs", max_err, secs);
  return {"gaussian t=1 inversion", max_err < 1e-12 && secs < 5.0, buf};
}

VerifyResult verify_gradient_checks() {
  auto start = std::chrono::steady_clock::now();
  ModelConfig mc = micro_model();
  Rng rng(0x96AD);
  ModelBank bank = ModelBank::make(mc, 16, 32);
  bank.idm.init(bank.store, rng, /*rand_head=*/true);
  bank.tdm.init(bank.store, rng, /*rand_head=*/true);
  bank.mom.init(bank.store, rng, /*rand_head=*/true);
  bank.fpsi.init(bank.store, rng);

  int B = 2, L = mc.seq_slots;
  std::vector<int> lat{mc.latent_channels(), mc.latent_h, mc.latent_w};
  Tensor z_t({B, lat[0], lat[1], lat[2]});
  Tensor z_lr = z_t, eps_target = z_t;
  for (double& x : z_t.v) x = normal01(rng);
  for (double& x : z_lr.v) x = normal01(rng);
  for (double& x : eps_target.v) x = normal01(rng);
  std::vector<int> ts{2, 3};
  std::vector<int> c_flat(B * L), targets(B * L);
  for (int& c : c_flat) c = uniform_int(rng, 0, mc.alphabet_size - 1);
  for (int& c : targets) c = uniform_int(rng, 0, mc.alphabet_size - 1);
  Tensor icond_in({B * mc.icond_len(), mc.icond_dim});
  for (double& x : icond_in.v) x = normal01(rng);
  Tensor ccond_in({B * L, mc.cond_dim});
  for (double& x : ccond_in.v) x = normal01(rng);
  Tensor w_mom_i({B * mc.icond_len(), mc.icond_dim});
  Tensor w_mom_c({B * L, mc.cond_dim});
  for (double& x : w_mom_i.v) x = normal01(rng);
  for (double& x : w_mom_c.v) x = normal01(rng);
  Tensor w_fpsi = w_mom_c;

  struct Net {
    const char* label;
    std::vector<std::string> names;
    std::function<double(ParameterStore&, std::map<std::string, Tensor>*)> eval;
  };
  std::vector<Net> nets;
  nets.push_back({"idm", bank.store.names_with_prefix("idm."),
                  [&](ParameterStore& s, std::map<std::string, Tensor>* grads) {
                    Graph g;
                    Binder b(g, s);
                    int out = bank.idm.forward(g, b, g.constant(z_t), g.constant(z_lr),
                                               g.constant(ccond_in), ts);
                    int loss = g.mse_loss(out, eps_target);
                    double v = g.val(loss).v[0];
                    if (grads) {
                      g.backward(loss);
                      *grads = b.collect_grads();
                    }
                    return v;
                  }});
  nets.push_back({"tdm", bank.store.names_with_prefix("tdm."),
                  [&](ParameterStore& s, std::map<std::string, Tensor>* grads) {
                    Graph g;
                    Binder b(g, s);
                    int logits = bank.tdm.forward(g, b, c_flat, g.constant(icond_in),
                                                  mc.icond_len(), ts, B);
                    int loss = g.softmax_ce_loss(logits, targets);
                    double v = g.val(loss).v[0];
                    if (grads) {
                      g.backward(loss);
                      *grads = b.collect_grads();
                    }
                    return v;
                  }});
  nets.push_back({"mom", bank.store.names_with_prefix("mom."),
                  [&](ParameterStore& s, std::map<std::string, Tensor>* grads) {
                    Graph g;
                    Binder b(g, s);
                    auto out = bank.mom.forward(g, b, g.constant(z_lr), g.constant(z_t),
                                                c_flat, ts, B);
                    int loss = g.add(g.weighted_sum(out.icond, w_mom_i),
                                     g.weighted_sum(out.ccond, w_mom_c));
                    double v = g.val(loss).v[0];
                    if (grads) {
                      g.backward(loss);
                      *grads = b.collect_grads();
                    }
                    return v;
                  }});
  nets.push_back({"fpsi", bank.store.names_with_prefix("fpsi."),
                  [&](ParameterStore& s, std::map<std::string, Tensor>* grads) {
                    Graph g;
                    Binder b(g, s);
                    int out = bank.fpsi.forward(g, b, c_flat, B);
                    int loss = g.weighted_sum(out, w_fpsi);
                    double v = g.val(loss).v[0];
                    if (grads) {
                      g.backward(loss);
                      *grads = b.collect_grads();
                    }
                    return v;
                  }});

  bool all_pass = true;
  std::string detail;
  Rng pick(0x5EED);
  for (auto& net : nets) {
    GradCheckResult r = gradcheck(bank.store, net.names, net.eval, 120, 1e-5, 1e-4, pick);
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%s[%d checked, max rel %.2g] ", net.label, r.checked,
                  r.max_rel_err);
    detail += buf;
    if (!r.pass) {
      all_pass = false;
      detail += "WORST " + r.worst + " ";
    }
  }
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.1fs", secs);
  detail += buf;
  return {"gradient checks (idm, tdm, mom, fpsi)", all_pass && secs < 300.0, detail};
}

VerifyResult verify_roundtrips(const std::string& scratch_dir) {
  auto start = std::chrono::steady_clock::now();
  bool ok = true;
  std::string detail;

  // Codec on random-valued images of both scales.
  Rng rng(0xC0DEC);
  for (int p : {2, 4}) {
    LatentCodec codec = LatentCodec::make(p);
    Tensor img({3, 8 * p, 16 * p});
    for (double& x : img.v) x = uniform01(rng);
    if (codec_decode(codec_encode(img, codec), codec).v != img.v) {
      ok = false;
      detail += "codec round-trip failed; ";
    }
  }

  // Checkpoint bytes.
  fs::create_directories(scratch_dir);
  ParameterStore store;
  store.create("a.w", {7, 3}, [](Rng& r) { return normal01(r); }, rng);
  store.create("b.t", {4}, [](Rng& r) { return normal01(r); }, rng);
  std::string ck1 = scratch_dir + "/v1.dtsr", ck2 = scratch_dir + "/v2.dtsr";
  save_checkpoint(store, ck1);
  ParameterStore loaded = load_checkpoint(ck1);
  save_checkpoint(loaded, ck2);
  if (read_file_bytes(ck1) != read_file_bytes(ck2)) {
    ok = false;
    detail += "checkpoint bytes differ; ";
  }
  for (const auto& name : store.names())
    if (loaded.get(name).v != store.get(name).v) {
      ok = false;
      detail += "checkpoint values differ; ";
    }

  // Dataset regeneration.
  DatasetConfig dc;
  dc.alphabet_size = 9;
  dc.seq_slots = 4;
  dc.max_content_len = 3;
  dc.hr_h = 16;
  dc.hr_w = 32;
  dc.scale = 2;
  dc.style.glyph_scale_min = dc.style.glyph_scale_max = 1;
  dc.style.max_jitter = 1;
  std::string da = scratch_dir + "/ds_a", db = scratch_dir + "/ds_b";
  fs::remove_all(da);
  fs::remove_all(db);
  build_dataset(dc, 40, 777, da);
  build_dataset(dc, 40, 777, db);
  for (const auto& entry : fs::recursive_directory_iterator(da)) {
    if (!entry.is_regular_file()) continue;
    fs::path rel = fs::relative(entry.path(), da);
    if (read_file_bytes(entry.path()) != read_file_bytes(fs::path(db) / rel)) {
      ok = false;
      detail += "dataset file differs: " + rel.string() + "; ";
    }
  }

  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  char buf[96];
  std::snprintf(buf, sizeof(buf), "codec, checkpoint, 40-sample dataset regen: %.2fs", secs);
  detail += buf;
  return {"bit-exact round-trips", ok && secs < 60.0, detail};
}

VerifyResult verify_metric_units() {
  bool ok = true;
  std::string detail;
  double n = ned({0, 1, 3}, {0, 1, 2}, 9);
  if (std::abs(n - 2.0 / 3.0) > 1e-12) {
    ok = false;
    detail += "ned mismatch; ";
  }
  int acc = seq_accuracy({1}, {1}, 9) + seq_accuracy({2}, {2}, 9) + seq_accuracy({3}, {3}, 9) +
            seq_accuracy({0}, {1}, 9);
  if (acc != 3) {
    ok = false;
    detail += "acc batch mismatch; ";
  }
  Tensor a({3, 4, 4}, 0.25), b({3, 4, 4}, 0.75);
  if (std::abs(psnr(a, b) - 6.0206) > 1e-4 ||
      std::abs(psnr(a, b) - 10.0 * std::log10(4.0)) > 1e-6) {
    ok = false;
    detail += "psnr mismatch; ";
  }
  detail += "NED(abd,abc)=2/3, ACC batch=0.75, PSNR(0.5)=6.0206 dB";
  return {"metric units", ok, detail};
}

VerifyResult verify_mc_sampling_law() {
  auto start = std::chrono::steady_clock::now();
  Rng rng(0x5A11);
  bool ok = true;
  double worst_z = 0.0;
  for (int inst = 0; inst < 10; ++inst) {
    int K = uniform_int(rng, 2, 6);
    int T = uniform_int(rng, 3, 8);
    NoiseSchedule s = random_schedule(T, rng);
    int t = uniform_int(rng, 2, T);
    CharSequence ct{uniform_int(rng, 0, K - 1)};
    CategoricalDistribution pred(1, K);
    double sum = 0.0;
    for (int k = 0; k < K; ++k) {
      pred.at(0, k) = uniform01(rng) + 0.05;
      sum += pred.at(0, k);
    }
    for (int k = 0; k < K; ++k) pred.at(0, k) /= sum;
    CategoricalDistribution post = posterior(ct, pred, t, s, K);

    const int n = 100000;
    std::vector<int> counts(K, 0);
    for (int i = 0; i < n; ++i) ++counts[sample_step(ct, pred, t, s, rng)[0]];
    for (int k = 0; k < K; ++k) {
      double p = post.at(0, k);
      double se = std::sqrt(std::max(p * (1 - p) / n, 1e-300));
      double z = std::abs(counts[k] / static_cast<double>(n) - p) / se;
      worst_z = std::max(worst_z, z);
      if (z > 3.0) ok = false;
    }
  }
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  char buf[128];
  std::snprintf(buf, sizeof(buf), "10 instances x 1e5 draws, worst |z| = %.2f, %.2fs", worst_z,
                secs);
  return {"ancestral sampling law", ok && secs < 30.0, buf};
}

std::vector<VerifyResult> run_verify_suites(const std::string& scratch_dir,
                                            double posterior_bias) {
  return {verify_posterior_bayes(posterior_bias),
          verify_forward_composition(),
          verify_t1_inversion(),
          verify_gradient_checks(),
          verify_roundtrips(scratch_dir),
          verify_metric_units(),
          verify_mc_sampling_law()};
}

}  // namespace textsr
