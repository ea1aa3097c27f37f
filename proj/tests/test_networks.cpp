#include <doctest.h>

#include "textsr/networks.hpp"
#include "textsr/pipeline.hpp"
#include "textsr/verify.hpp"

using namespace textsr;

namespace {

ModelConfig micro_model() {
  ModelConfig m;
  m.latent_patch = 4;
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

ModelBank fresh_bank(bool rand_heads = false, uint64_t seed = 99) {
  ModelBank bank = ModelBank::make(micro_model(), 16, 32);
  Rng rng(seed);
  bank.idm.init(bank.store, rng, rand_heads);
  bank.tdm.init(bank.store, rng, rand_heads);
  bank.mom.init(bank.store, rng, rand_heads);
  bank.rec.init(bank.store, rng, rand_heads);
  bank.fpsi.init(bank.store, rng);
  bank.lrenc.init(bank.store, rng);
  return bank;
}

Tensor randu(std::vector<int> shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& x : t.v) x = uniform01(rng);
  return t;
}

}  // namespace

TEST_SUITE("networks") {

TEST_CASE("idm output matches input shape and is zero at init") {
  ModelBank bank = fresh_bank();
  Rng rng(1);
  const ModelConfig& cfg = bank.cfg;
  Tensor z_t = randn({cfg.latent_channels(), cfg.latent_h, cfg.latent_w}, rng);
  Tensor z_lr = randn({cfg.latent_channels(), cfg.latent_h, cfg.latent_w}, rng);
  Tensor ccond = randn({cfg.seq_slots, cfg.cond_dim}, rng);
  Tensor eps = idm_denoise(z_t, z_lr, ccond, 3, bank.idm, bank.store);
  CHECK(eps.shape == z_t.shape);
  for (double x : eps.v) CHECK(x == 0.0);  // zero-initialized output head

  ModelBank rnd = fresh_bank(/*rand_heads=*/true);
  Tensor eps2 = idm_denoise(z_t, z_lr, ccond, 3, rnd.idm, rnd.store);
  CHECK(eps2.shape == z_t.shape);
  double mag = 0.0;
  for (double x : eps2.v) mag += std::abs(x);
  CHECK(mag > 0.0);
}

TEST_CASE("idm forward is a pure function") {
  ModelBank bank = fresh_bank(true);
  Rng rng(2);
  const ModelConfig& cfg = bank.cfg;
  Tensor z_t = randn({cfg.latent_channels(), cfg.latent_h, cfg.latent_w}, rng);
  Tensor z_lr = randn({cfg.latent_channels(), cfg.latent_h, cfg.latent_w}, rng);
  Tensor ccond = randn({cfg.seq_slots, cfg.cond_dim}, rng);
  Tensor a = idm_denoise(z_t, z_lr, ccond, 2, bank.idm, bank.store);
  Tensor b = idm_denoise(z_t, z_lr, ccond, 2, bank.idm, bank.store);
  CHECK(a.v == b.v);
}

TEST_CASE("tdm rows are normalized distributions") {
  ModelBank bank = fresh_bank(true);
  Rng rng(3);
  const ModelConfig& cfg = bank.cfg;
  Tensor icond = randn({cfg.icond_len(), cfg.icond_dim}, rng);
  CharSequence c_t{0, 3, 1, 4};
  CategoricalDistribution pred = tdm_denoise(c_t, icond, 2, bank.tdm, bank.store);
  CHECK(pred.L == cfg.seq_slots);
  CHECK(pred.K == cfg.alphabet_size);
  pred.validate_rows(1e-6);

  // Zero-initialized head gives the uniform distribution.
  ModelBank zero = fresh_bank();
  CategoricalDistribution uni = tdm_denoise(c_t, icond, 2, zero.tdm, zero.store);
  for (double p : uni.p) CHECK(p == doctest::Approx(1.0 / cfg.alphabet_size).epsilon(1e-12));
}

TEST_CASE("mom outputs declared dims and zero at init") {
  ModelBank bank = fresh_bank();
  Rng rng(4);
  const ModelConfig& cfg = bank.cfg;
  Tensor z_lr = randn({cfg.latent_channels(), cfg.latent_h, cfg.latent_w}, rng);
  Tensor z_t = randn({cfg.latent_channels(), cfg.latent_h, cfg.latent_w}, rng);
  auto [icond, ccond] = mom_forward(z_lr, z_t, {1, 2, 0, 4}, 3, bank.mom, bank.store);
  CHECK(icond.shape == std::vector<int>{cfg.icond_len(), cfg.icond_dim});
  CHECK(ccond.shape == std::vector<int>{cfg.seq_slots, cfg.cond_dim});
  for (double x : icond.v) CHECK(x == 0.0);
  for (double x : ccond.v) CHECK(x == 0.0);
}

TEST_CASE("mom batch permutation carries no cross-sample leakage") {
  ModelBank bank = fresh_bank(true);
  Rng rng(5);
  const ModelConfig& cfg = bank.cfg;
  int B = 3, L = cfg.seq_slots;
  Tensor z_lr = randn({B, cfg.latent_channels(), cfg.latent_h, cfg.latent_w}, rng);
  Tensor z_t = randn({B, cfg.latent_channels(), cfg.latent_h, cfg.latent_w}, rng);
  std::vector<int> c_flat(B * L);
  for (int& c : c_flat) c = uniform_int(rng, 0, cfg.alphabet_size - 1);
  std::vector<int> ts{2, 5, 3};

  auto run = [&](const Tensor& zl, const Tensor& zt, const std::vector<int>& cf,
                 const std::vector<int>& t) {
    Graph g;
    Binder b(g, bank.store, false);
    auto out = bank.mom.forward(g, b, g.constant(zl), g.constant(zt), cf, t, B);
    return std::make_pair(g.val(out.icond), g.val(out.ccond));
  };
  auto [i0, c0] = run(z_lr, z_t, c_flat, ts);

  // Rotate the batch by one.
  std::vector<int> perm{1, 2, 0};
  Tensor z_lr_p = z_lr, z_t_p = z_t;
  std::vector<int> c_flat_p(B * L), ts_p(B);
  size_t n = z_lr.v.size() / B;
  for (int i = 0; i < B; ++i) {
    std::copy(z_lr.v.begin() + perm[i] * n, z_lr.v.begin() + (perm[i] + 1) * n,
              z_lr_p.v.begin() + i * n);
    std::copy(z_t.v.begin() + perm[i] * n, z_t.v.begin() + (perm[i] + 1) * n,
              z_t_p.v.begin() + i * n);
    std::copy(c_flat.begin() + perm[i] * L, c_flat.begin() + (perm[i] + 1) * L,
              c_flat_p.begin() + i * L);
    ts_p[i] = ts[perm[i]];
  }
  auto [i1, c1] = run(z_lr_p, z_t_p, c_flat_p, ts_p);

  size_t ni = i0.v.size() / B, nc = c0.v.size() / B;
  for (int i = 0; i < B; ++i) {
    CHECK(std::equal(i1.v.begin() + i * ni, i1.v.begin() + (i + 1) * ni,
                     i0.v.begin() + perm[i] * ni));
    CHECK(std::equal(c1.v.begin() + i * nc, c1.v.begin() + (i + 1) * nc,
                     c0.v.begin() + perm[i] * nc));
  }
}

TEST_CASE("recognizer tie-break and pad suffix") {
  ModelBank bank = fresh_bank();  // zero head -> all logits zero
  Rng rng(6);
  Tensor img = randu({3, 16, 32}, rng);
  CharSequence out = recognize(img, bank.rec, bank.store);
  CHECK(static_cast<int>(out.size()) == bank.cfg.seq_slots);
  for (int c : out) CHECK(c == 0);
  CHECK(pad_suffix_wellformed(out, bank.cfg.alphabet_size - 1));

  ModelBank rnd = fresh_bank(true, 123);
  CharSequence out2 = recognize(img, rnd.rec, rnd.store);
  CHECK(static_cast<int>(out2.size()) == bank.cfg.seq_slots);
  CHECK(pad_suffix_wellformed(out2, bank.cfg.alphabet_size - 1));
}

TEST_CASE("text prior encoder dims and purity") {
  ModelBank bank = fresh_bank(true);
  CharSequence c{2, 0, 4, 4};
  Tensor a = text_prior_encode(c, bank.fpsi, bank.store);
  Tensor b = text_prior_encode(c, bank.fpsi, bank.store);
  CHECK(a.shape == std::vector<int>{bank.cfg.seq_slots, bank.cfg.cond_dim});
  CHECK(a.v == b.v);
}

TEST_CASE("batch grouping does not change per-sample outputs") {
  ModelBank bank = fresh_bank(true);
  Rng rng(7);
  const ModelConfig& cfg = bank.cfg;
  int B = 3;
  Tensor z_t = randn({B, cfg.latent_channels(), cfg.latent_h, cfg.latent_w}, rng);
  Tensor z_lr = randn({B, cfg.latent_channels(), cfg.latent_h, cfg.latent_w}, rng);
  Tensor ccond = randn({B * cfg.seq_slots, cfg.cond_dim}, rng);
  std::vector<int> ts{1, 4, 6};

  Graph g;
  Binder b(g, bank.store, false);
  int out = bank.idm.forward(g, b, g.constant(z_t), g.constant(z_lr), g.constant(ccond), ts);
  const Tensor& batched = g.val(out);

  size_t n = z_t.v.size() / B;
  for (int i = 0; i < B; ++i) {
    Tensor zt1({1, cfg.latent_channels(), cfg.latent_h, cfg.latent_w});
    Tensor zl1 = zt1;
    std::copy(z_t.v.begin() + i * n, z_t.v.begin() + (i + 1) * n, zt1.v.begin());
    std::copy(z_lr.v.begin() + i * n, z_lr.v.begin() + (i + 1) * n, zl1.v.begin());
    Tensor cc1({cfg.seq_slots, cfg.cond_dim});
    std::copy(ccond.v.begin() + i * cfg.seq_slots * cfg.cond_dim,
              ccond.v.begin() + (i + 1) * cfg.seq_slots * cfg.cond_dim, cc1.v.begin());
    Graph g1;
    Binder b1(g1, bank.store, false);
    int o1 = bank.idm.forward(g1, b1, g1.constant(zt1), g1.constant(zl1), g1.constant(cc1),
                              {ts[i]});
    const Tensor& single = g1.val(o1);
    CHECK(std::equal(single.v.begin(), single.v.end(), batched.v.begin() + i * n));
  }
}

TEST_CASE("gradient checks pass for all four trainable networks") {
  VerifyResult r = verify_gradient_checks();
  INFO(r.detail);
  CHECK(r.pass);
}

}  // TEST_SUITE
