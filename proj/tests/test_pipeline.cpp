#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "textsr/evalharness.hpp"
#include "textsr/image.hpp"
#include "textsr/metrics.hpp"
#include "textsr/pipeline.hpp"

using namespace textsr;
namespace fs = std::filesystem;

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
  m.rec_c1 = 8;
  m.rec_c2 = 16;
  m.rec_c3 = 24;
  return m;
}

DatasetConfig micro_data() {
  DatasetConfig cfg;
  cfg.alphabet_size = 5;
  cfg.seq_slots = 4;
  cfg.max_content_len = 3;
  cfg.hr_h = 16;
  cfg.hr_w = 32;
  cfg.scale = 2;
  cfg.font_seed = 5;
  cfg.style.glyph_scale_min = 1;
  cfg.style.glyph_scale_max = 1;
  cfg.style.max_jitter = 1;
  cfg.style.dilate_prob = 0.0;  // scale-1 glyphs lose identity when dilated
  return cfg;
}

const Dataset& micro_train() {
  static Dataset ds = [] {
    std::string dir = (fs::temp_directory_path() / "textsr_pipe_train").string();
    fs::remove_all(dir);
    build_dataset(micro_data(), 600, 11, dir);
    return load_dataset(dir);
  }();
  return ds;
}

const Dataset& micro_test() {
  static Dataset ds = [] {
    std::string dir = (fs::temp_directory_path() / "textsr_pipe_test").string();
    fs::remove_all(dir);
    build_dataset(micro_data(), 24, 22, dir);
    return load_dataset(dir);
  }();
  return ds;
}

NoiseSchedule micro_idm_schedule(int T = 6) {
  return make_schedule(Branch::IDM, T, linear_params_scaled(T));
}

NoiseSchedule micro_tdm_schedule(int T = 6) {
  ScheduleParams p;
  p.kind = ScheduleKind::Cosine;
  p.cosine_power = 4.0;
  return make_schedule(Branch::TDM, T, p);
}

ModelBank fresh_bank(uint64_t seed = 77) {
  ModelBank bank = ModelBank::make(micro_model(), 16, 32);
  Rng rng(seed);
  bank.init_network("rec", rng);
  bank.init_network("idm", rng);
  bank.init_network("tdm", rng);
  bank.init_network("mom", rng);
  return bank;
}

TrainConfig micro_train_cfg() {
  TrainConfig cfg;
  cfg.batch = 8;
  cfg.lr = 2e-3;
  cfg.log_every = 10;
  return cfg;
}

double avg_range(const std::vector<std::pair<long long, double>>& log, size_t lo, size_t hi) {
  double acc = 0.0;
  for (size_t i = lo; i < hi; ++i) acc += log[i].second;
  return acc / (hi - lo);
}

Tensor lr_up(const Dataset& ds, int i) {
  return upsample_lr_to_hr(ds.samples[i].lr, ds.cfg.hr_h, ds.cfg.hr_w);
}

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("full variant sampling is seed deterministic") {
  ModelBank bank = fresh_bank();
  NoiseSchedule sid = micro_idm_schedule(), stdm = micro_tdm_schedule();
  Tensor x = lr_up(micro_test(), 0);
  SampleResult a = difftsr_sample(bank, x, sid, stdm, 42, Variant::FULL);
  SampleResult b = difftsr_sample(bank, x, sid, stdm, 42, Variant::FULL);
  CHECK(a.x0.v == b.x0.v);
  CHECK(a.text == b.text);
  SampleResult c = difftsr_sample(bank, x, sid, stdm, 43, Variant::FULL);
  CHECK(a.x0.v != c.x0.v);
}

TEST_CASE("exp1 ignores the text override entirely") {
  ModelBank bank = fresh_bank();
  NoiseSchedule sid = micro_idm_schedule(), stdm = micro_tdm_schedule();
  Tensor x = lr_up(micro_test(), 1);
  CharSequence forced{3, 3, 3};
  SampleResult plain = difftsr_sample(bank, x, sid, stdm, 9, Variant::EXP1);
  SampleResult overridden = difftsr_sample(bank, x, sid, stdm, 9, Variant::EXP1, &forced);
  CHECK(plain.x0.v == overridden.x0.v);
  CHECK(plain.text == overridden.text);

  // The same override does change a text-conditioned variant's trace state.
  SampleResult full = difftsr_sample(bank, x, sid, stdm, 9, Variant::FULL, &forced);
  CHECK(full.trace.rows.front().c_t == pad_to({3, 3, 3}, 4, 4));
}

TEST_CASE("trace has one row per step with decreasing t") {
  ModelBank bank = fresh_bank();
  NoiseSchedule sid = micro_idm_schedule(), stdm = micro_tdm_schedule();
  for (Variant v : {Variant::EXP1, Variant::EXP2, Variant::EXP3, Variant::FULL}) {
    SampleResult r = difftsr_sample(bank, lr_up(micro_test(), 2), sid, stdm, 5, v);
    REQUIRE(r.trace.rows.size() == 6);
    for (int i = 0; i < 6; ++i) CHECK(r.trace.rows[i].t == 6 - i);
  }
}

TEST_CASE("single-step loop collapses to one reverse update") {
  ModelBank bank = fresh_bank();
  NoiseSchedule sid = micro_idm_schedule(1), stdm = micro_tdm_schedule(1);
  Tensor x = lr_up(micro_test(), 3);
  uint64_t seed = 31;
  SampleResult got = difftsr_sample(bank, x, sid, stdm, seed, Variant::FULL);

  // Replicate the collapsed loop by hand.
  Rng rng(derive_seed(seed, kStreamSample));
  const ModelConfig& cfg = bank.cfg;
  Tensor z_lr = standardize_latent(codec_encode(x, bank.codec));
  Tensor z_T = randn({cfg.latent_channels(), cfg.latent_h, cfg.latent_w}, rng);
  CharSequence c_T = recognize(x, bank.rec, bank.store);

  auto [icond, ccond] = mom_forward(z_lr, z_T, c_T, 1, bank.mom, bank.store);
  Tensor eps = idm_denoise(z_T, z_lr, ccond, 1, bank.idm, bank.store);
  Tensor z0 = ddpm_step(z_T, eps, 1, sid, Tensor(z_T.shape));
  Tensor x0 = clamp01(codec_decode(unstandardize_latent(z0), bank.codec));
  CategoricalDistribution pred = tdm_denoise(c_T, icond, 1, bank.tdm, bank.store);
  CharSequence c0 = sample_categorical(pred, rng);

  CHECK(got.x0.v == x0.v);
  CHECK(got.text == c0);
}

TEST_CASE("first idm loss sits at the unit-noise level") {
  ModelBank bank = fresh_bank();
  TrainStats st = train_idm(bank, micro_train(), micro_idm_schedule(), micro_train_cfg(), 123,
                            1, "");
  CHECK(std::abs(st.first_loss - 1.0) < 0.05);
}

TEST_CASE("first tdm and recognizer losses equal ln K") {
  ModelBank bank = fresh_bank();
  double lnK = std::log(5.0);
  TrainStats t = train_tdm(bank, micro_train(), micro_tdm_schedule(), micro_train_cfg(), 5, 1,
                           "");
  CHECK(t.first_loss == doctest::Approx(lnK).epsilon(1e-12));
  TrainStats r = train_recognizer(bank, micro_train(), micro_train_cfg(), 5, 1, "");
  CHECK(r.first_loss == doctest::Approx(lnK).epsilon(1e-12));
}

TEST_CASE("losses decrease over early training") {
  ModelBank bank = fresh_bank();
  TrainConfig cfg = micro_train_cfg();
  TrainStats idm = train_idm(bank, micro_train(), micro_idm_schedule(), cfg, 7, 220, "");
  CHECK(avg_range(idm.loss_log, 0, 40) > avg_range(idm.loss_log, 180, 220));
  TrainStats tdm = train_tdm(bank, micro_train(), micro_tdm_schedule(), cfg, 7, 220, "");
  CHECK(avg_range(tdm.loss_log, 0, 40) > avg_range(tdm.loss_log, 180, 220));
  TrainStats rec = train_recognizer(bank, micro_train(), cfg, 7, 220, "");
  CHECK(avg_range(rec.loss_log, 0, 40) > avg_range(rec.loss_log, 180, 220));
  TrainStats joint = train_joint(bank, micro_train(), micro_idm_schedule(),
                                 micro_tdm_schedule(), cfg, 7, 220, "");
  CHECK(avg_range(joint.loss_log, 0, 40) > avg_range(joint.loss_log, 180, 220));
}

TEST_CASE("joint loss at zero-initialized fusion equals null-conditioned branches") {
  ModelBank bank = fresh_bank(31);
  TrainConfig cfg = micro_train_cfg();
  NoiseSchedule sid = micro_idm_schedule(), stdm = micro_tdm_schedule();
  // Briefly pretrain the branches so the contract is checked off-init too.
  train_idm(bank, micro_train(), sid, cfg, 3, 30, "");
  train_tdm(bank, micro_train(), stdm, cfg, 3, 30, "");

  TrainStats joint = train_joint(bank, micro_train(), sid, stdm, cfg, 3, 1, "");

  // Recompute both branch losses with explicit all-zero conditioning on the
  // identical batch draw.
  ModelBank bank2 = fresh_bank(31);
  train_idm(bank2, micro_train(), sid, cfg, 3, 30, "");
  train_tdm(bank2, micro_train(), stdm, cfg, 3, 30, "");
  JointBatch batch = draw_joint_batch(micro_train(), bank2, cfg, sid, stdm, 3, 0);
  std::vector<Tensor> zts(cfg.batch);
  for (int i = 0; i < cfg.batch; ++i)
    zts[i] = q_sample(batch.z0[i], batch.t[i], batch.eps[i], sid);

  Graph g;
  Binder b(g, bank2.store, false);
  std::vector<Tensor> stacked_z(zts), stacked_lr(batch.z_lr), stacked_eps(batch.eps);
  Tensor zt_all({cfg.batch, bank2.cfg.latent_channels(), bank2.cfg.latent_h, bank2.cfg.latent_w});
  Tensor zlr_all = zt_all, eps_all = zt_all;
  size_t n = zts[0].v.size();
  for (int i = 0; i < cfg.batch; ++i) {
    std::copy(zts[i].v.begin(), zts[i].v.end(), zt_all.v.begin() + i * n);
    std::copy(batch.z_lr[i].v.begin(), batch.z_lr[i].v.end(), zlr_all.v.begin() + i * n);
    std::copy(batch.eps[i].v.begin(), batch.eps[i].v.end(), eps_all.v.begin() + i * n);
  }
  std::vector<int> c_t_flat, c0_flat;
  for (int i = 0; i < cfg.batch; ++i) {
    c_t_flat.insert(c_t_flat.end(), batch.c_t[i].begin(), batch.c_t[i].end());
    c0_flat.insert(c0_flat.end(), batch.c0[i].begin(), batch.c0[i].end());
  }
  int null_ccond = g.constant(Tensor({cfg.batch * bank2.cfg.seq_slots, bank2.cfg.cond_dim}));
  int null_icond = g.constant(Tensor({cfg.batch * bank2.cfg.icond_len(), bank2.cfg.icond_dim}));
  int eps_pred = bank2.idm.forward(g, b, g.constant(zt_all), g.constant(zlr_all), null_ccond,
                                   batch.t);
  int logits = bank2.tdm.forward(g, b, c_t_flat, null_icond, bank2.cfg.icond_len(), batch.t,
                                 cfg.batch);
  double l_idm = g.val(g.mse_loss(eps_pred, eps_all)).v[0];
  double l_tdm = g.val(g.softmax_ce_loss(logits, c0_flat)).v[0];
  CHECK(joint.first_loss == l_idm + l_tdm * cfg.lambda_tdm);
}

TEST_CASE("resumed training reproduces the continuous run") {
  NoiseSchedule sid = micro_idm_schedule();
  TrainConfig cfg = micro_train_cfg();

  ModelBank full = fresh_bank(8);
  TrainStats whole = train_idm(full, micro_train(), sid, cfg, 99, 30, "");

  ModelBank half = fresh_bank(8);
  TrainStats first = train_idm(half, micro_train(), sid, cfg, 99, 15, "");
  fs::path dir = fs::temp_directory_path() / "textsr_resume";
  fs::create_directories(dir);
  save_checkpoint(half.store, (dir / "ck.dtsr").string());
  save_optimizer_state(half.store, 15, (dir / "ck.opt").string());

  ModelBank resumed = ModelBank::make(micro_model(), 16, 32);
  resumed.store = load_checkpoint((dir / "ck.dtsr").string());
  long long start = load_optimizer_state(resumed.store, (dir / "ck.opt").string());
  CHECK(start == 15);
  TrainStats second = train_idm(resumed, micro_train(), sid, cfg, 99, 15, "", start);

  REQUIRE(whole.loss_log.size() == 30);
  REQUIRE(second.loss_log.size() == 15);
  for (int i = 0; i < 15; ++i) {
    CHECK(second.loss_log[i].first == whole.loss_log[15 + i].first);
    CHECK(second.loss_log[i].second == whole.loss_log[15 + i].second);
  }
}

TEST_CASE("idm overfits a ten-sample set") {
  DatasetConfig dc = micro_data();
  std::string dir = (fs::temp_directory_path() / "textsr_tiny10").string();
  fs::remove_all(dir);
  build_dataset(dc, 10, 321, dir);
  Dataset tiny = load_dataset(dir);

  ModelBank bank = fresh_bank(4);
  TrainConfig cfg = micro_train_cfg();
  cfg.batch = 10;
  cfg.lr = 3e-3;
  cfg.cond_dropout = 0.0;
  NoiseSchedule sid = micro_idm_schedule(6);
  TrainStats st = train_idm(bank, tiny, sid, cfg, 55, 1500, "");
  double tail = avg_range(st.loss_log, st.loss_log.size() - 50, st.loss_log.size());
  INFO("final moving average ", tail);
  CHECK(tail < 0.05);
}

TEST_CASE("trained tdm is near lossless at the cleanest step") {
  ModelBank bank = fresh_bank(14);
  TrainConfig cfg = micro_train_cfg();
  NoiseSchedule stdm = micro_tdm_schedule();
  train_tdm(bank, micro_train(), stdm, cfg, 6, 600, "");

  // At t=1 the corrupted state is the label with overwhelming probability, so
  // cross-entropy collapses toward zero.
  const Dataset& ds = micro_train();
  double loss = 0.0;
  int count = 0;
  Rng rng(17);
  for (int i = 0; i < 16; ++i) {
    CharSequence c0 = ds.padded_label(i);
    CharSequence c1 =
        sample_categorical(q_marginal_probs(c0, stdm.alpha_bar(1), 5), rng);
    Tensor zlr = standardize_latent(
        codec_encode(upsample_lr_to_hr(ds.samples[i].lr, 16, 32), bank.codec));
    Graph g;
    Binder b(g, bank.store, false);
    int icond = bank.lrenc.forward(g, b, g.constant([&] {
      Tensor t({1, bank.cfg.latent_channels(), bank.cfg.latent_h, bank.cfg.latent_w});
      std::copy(zlr.v.begin(), zlr.v.end(), t.v.begin());
      return t;
    }()));
    int logits = bank.tdm.forward(g, b, c1, icond, bank.cfg.icond_len(), {1}, 1);
    loss += g.val(g.softmax_ce_loss(logits, c0)).v[0];
    ++count;
  }
  loss /= count;
  INFO("mean t=1 cross-entropy ", loss);
  CHECK(loss < 0.25);
}

TEST_CASE("recognizer reaches high clean accuracy and degrades under corruption") {
  ModelBank bank = fresh_bank(2);
  TrainConfig cfg = micro_train_cfg();
  cfg.batch = 16;
  cfg.lr = 1e-3;
  train_recognizer(bank, micro_train(), cfg, 44, 4000, "");

  const Dataset& held = micro_test();
  int pad = held.pad_index();
  int clean_ok = 0, degraded_ok = 0, n = static_cast<int>(held.samples.size());
  for (int i = 0; i < n; ++i) {
    CharSequence gt = held.samples[i].content;
    CharSequence c = recognize(dequantize_image(held.samples[i].hr), bank.rec, bank.store);
    clean_ok += seq_accuracy(c, gt, pad);
    CharSequence d = recognize(lr_up(held, i), bank.rec, bank.store);
    degraded_ok += seq_accuracy(d, gt, pad);
  }
  double clean_acc = clean_ok / static_cast<double>(n);
  double degraded_acc = degraded_ok / static_cast<double>(n);
  INFO("clean ", clean_acc, " degraded ", degraded_acc);
  CHECK(clean_acc >= 0.95);
  CHECK(degraded_acc < clean_acc);
}

TEST_CASE("evaluate_with oracle stubs") {
  const Dataset& ds = micro_test();
  // Perfect restorer: returns the stored HR image and the label.
  SamplerFn perfect = [&](const std::vector<int>& idx, const std::vector<uint64_t>&) {
    std::vector<SampleResult> out(idx.size());
    for (size_t i = 0; i < idx.size(); ++i) {
      out[i].x0 = dequantize_image(ds.samples[idx[i]].hr);
      out[i].text = ds.padded_label(idx[i]);
    }
    return out;
  };
  EvalReport r = evaluate_with(perfect, ds, "fp", Variant::FULL, 1, 4, false);
  CHECK(r.mean_acc == 1.0);
  CHECK(r.mean_ned == 1.0);
  CHECK(r.mean_psnr == 99.0);

  // Constant-image restorer with an empty text guess.
  SamplerFn constant = [&](const std::vector<int>& idx, const std::vector<uint64_t>&) {
    std::vector<SampleResult> out(idx.size());
    for (size_t i = 0; i < idx.size(); ++i) {
      out[i].x0 = Tensor({3, ds.cfg.hr_h, ds.cfg.hr_w}, 0.5);
      out[i].text = CharSequence(ds.cfg.seq_slots, ds.pad_index());
    }
    return out;
  };
  EvalReport rc = evaluate_with(constant, ds, "fp", Variant::EXP1, 1, 4, false);
  CHECK(rc.mean_acc == 0.0);

  // Determinism: identical seeds give byte-identical reports.
  ModelBank bank = fresh_bank();
  NoiseSchedule sid = micro_idm_schedule(), stdm = micro_tdm_schedule();
  EvalReport e1 = evaluate(bank, Variant::FULL, ds, "fp", sid, stdm, 9, 5, true);
  EvalReport e2 = evaluate(bank, Variant::FULL, ds, "fp", sid, stdm, 9, 5, true);
  CHECK(format_report_csv(e1) == format_report_csv(e2));
  CHECK(format_report_json(e1) == format_report_json(e2));

  // Aggregates equal row means.
  double acc = 0.0;
  for (const EvalRow& row : e1.rows) acc += row.ned;
  CHECK(std::abs(acc / e1.rows.size() - e1.mean_ned) < 1e-9);
}

TEST_CASE("variant model requirements") {
  ModelBank bank = ModelBank::make(micro_model(), 16, 32);
  Rng rng(1);
  bank.init_network("rec", rng);
  bank.init_network("idm", rng);
  NoiseSchedule sid = micro_idm_schedule(), stdm = micro_tdm_schedule();
  Tensor x = lr_up(micro_test(), 0);
  CHECK_NOTHROW(difftsr_sample(bank, x, sid, stdm, 1, Variant::EXP2));
  CHECK_THROWS_AS(difftsr_sample(bank, x, sid, stdm, 1, Variant::FULL), std::invalid_argument);
  CHECK_THROWS_AS(difftsr_sample(bank, x, sid, stdm, 1, Variant::EXP3), std::invalid_argument);
}

}  // TEST_SUITE
