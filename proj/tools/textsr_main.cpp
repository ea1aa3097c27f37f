#include <CLI11.hpp>
#include <Eigen/Core>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "textsr/config.hpp"
#include "textsr/verify.hpp"

using namespace textsr;
namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitDiverged = 4;
constexpr int kExitVerify = 5;

struct GlobalOpts {
  std::string config_path;
  std::string out_dir;
  std::string variant;
  uint64_t seed = 0;
  bool seed_set = false;
  int scale = 0;
  int threads = 0;
};

RunConfig resolve_config(const GlobalOpts& g) {
  RunConfig cfg = g.config_path.empty() ? default_config() : load_config(g.config_path);
  if (g.seed_set) cfg.seed = g.seed;
  if (!g.out_dir.empty()) cfg.out_dir = g.out_dir;
  if (!g.variant.empty()) cfg.variant = g.variant;
  if (g.scale != 0) cfg.data.scale = g.scale;
  if (g.threads != 0) cfg.threads = g.threads;
  cfg.finalize();
  if (cfg.threads > 0) Eigen::setNbThreads(cfg.threads);
  return cfg;
}

std::string ensure_run_dir(const RunConfig& cfg) {
  std::string dir = run_directory(cfg);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create run directory " + dir);
  write_text_file(dir + "/config.json", config_to_json(cfg) + "\n");
  return dir;
}

uint64_t split_seed(const RunConfig& cfg, uint64_t tag) { return derive_seed(cfg.seed, tag); }

ModelBank bank_from_checkpoint(const RunConfig& cfg, const std::string& ckpt) {
  if (!fs::exists(ckpt)) throw ConfigError("checkpoint not found: " + ckpt);
  ModelBank bank = make_bank(cfg);
  bank.store = load_checkpoint(ckpt);
  return bank;
}

Dataset load_split(const RunConfig& cfg, const std::string& split) {
  std::string dir = cfg.dataset_dir + "/" + split;
  if (!fs::exists(dir + "/manifest.json"))
    throw ConfigError("dataset split missing: " + dir + " (run gen-data first)");
  Dataset ds = load_dataset(dir);
  if (ds.cfg.scale != cfg.data.scale)
    throw ConfigError("dataset scale does not match config scale");
  if (ds.cfg.alphabet_size != cfg.data.alphabet_size ||
      ds.cfg.seq_slots != cfg.data.seq_slots || ds.cfg.hr_h != cfg.data.hr_h ||
      ds.cfg.hr_w != cfg.data.hr_w)
    throw ConfigError("dataset geometry does not match config");
  return ds;
}

CharSequence parse_text_arg(const std::string& s, int K) {
  CharSequence out;
  std::istringstream ss(s);
  int v;
  while (ss >> v) {
    if (v < 0 || v >= K) throw ConfigError("--force-text index out of range");
    out.push_back(v);
  }
  return out;
}

std::string seq_to_string(const CharSequence& s) {
  std::string out;
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += " ";
    out += std::to_string(s[i]);
  }
  return out;
}

int cmd_gen_data(const RunConfig& cfg) {
  build_dataset(cfg.data, cfg.n_train, split_seed(cfg, 0x7261), cfg.dataset_dir + "/train");
  build_dataset(cfg.data, cfg.n_test, split_seed(cfg, 0x7465), cfg.dataset_dir + "/test");
  std::printf("wrote %d train / %d test samples under %s\n", cfg.n_train, cfg.n_test,
              cfg.dataset_dir.c_str());
  return kExitOk;
}

int cmd_train(const RunConfig& cfg, const std::string& stage, const std::string& ckpt_in,
              bool resume) {
  static const std::map<std::string, std::string> prior{
      {"recognizer", ""}, {"idm", "recognizer"}, {"tdm", "idm"}, {"joint", "tdm"}};
  if (!prior.count(stage)) throw ConfigError("unknown training stage: " + stage);

  std::string run_dir = ensure_run_dir(cfg);
  std::string out_ckpt = run_dir + "/ckpt_" + stage + ".dtsr";
  std::string opt_path = out_ckpt + ".opt";

  ModelBank bank = make_bank(cfg);
  long long start_step = 0;
  if (resume) {
    if (!fs::exists(out_ckpt)) throw ConfigError("nothing to resume: " + out_ckpt);
    bank.store = load_checkpoint(out_ckpt);
    start_step = load_optimizer_state(bank.store, opt_path);
  } else if (!ckpt_in.empty()) {
    bank.store = load_checkpoint(ckpt_in);
  } else if (!prior.at(stage).empty()) {
    std::string prev = run_dir + "/ckpt_" + prior.at(stage) + ".dtsr";
    if (fs::exists(prev)) bank.store = load_checkpoint(prev);
  }

  Dataset train_ds = load_split(cfg, "train");
  NoiseSchedule sid = make_idm_schedule(cfg);
  NoiseSchedule stdm = make_tdm_schedule(cfg);
  std::string loss_csv = run_dir + "/loss_" + stage + ".csv";

  TrainStats stats;
  int steps = 0;
  if (stage == "recognizer") steps = cfg.train.steps_recognizer;
  if (stage == "idm") steps = cfg.train.steps_idm;
  if (stage == "tdm") steps = cfg.train.steps_tdm;
  if (stage == "joint") steps = cfg.train.steps_joint;
  steps = std::max(0, steps - static_cast<int>(start_step));

  if (stage == "recognizer")
    stats = train_recognizer(bank, train_ds, cfg.train, cfg.seed, steps, loss_csv, start_step);
  else if (stage == "idm")
    stats = train_idm(bank, train_ds, sid, cfg.train, cfg.seed, steps, loss_csv, start_step);
  else if (stage == "tdm")
    stats = train_tdm(bank, train_ds, stdm, cfg.train, cfg.seed, steps, loss_csv, start_step);
  else
    stats = train_joint(bank, train_ds, sid, stdm, cfg.train, cfg.seed, steps, loss_csv,
                        start_step);

  save_checkpoint(bank.store, out_ckpt);
  save_optimizer_state(bank.store, start_step + steps, opt_path);
  std::printf("stage %s: %d steps, loss %.6g -> %.6g, checkpoint %s\n", stage.c_str(), steps,
              stats.first_loss, stats.final_loss, out_ckpt.c_str());
  if (stats.diverged) {
    std::fprintf(stderr, "training diverged: non-finite loss at step %lld\n",
                 stats.loss_log.empty() ? -1 : stats.loss_log.back().first);
    return kExitDiverged;
  }
  return kExitOk;
}

int cmd_sample(const RunConfig& cfg, const std::string& ckpt, int index,
               const std::string& input_path, const std::string& force_text_arg) {
  ModelBank bank = bank_from_checkpoint(cfg, ckpt);
  Variant variant = variant_from_string(cfg.variant);
  NoiseSchedule sid = make_idm_schedule(cfg);
  NoiseSchedule stdm = make_tdm_schedule(cfg);

  Tensor x_lr_up;
  CharSequence gt;
  std::string tag;
  if (!input_path.empty()) {
    ByteImage lr = read_ppm(input_path);
    x_lr_up = upsample_lr_to_hr(lr, cfg.data.hr_h, cfg.data.hr_w);
    tag = fs::path(input_path).stem().string();
  } else {
    Dataset test_ds = load_split(cfg, "test");
    if (index < 0 || index >= static_cast<int>(test_ds.samples.size()))
      throw ConfigError("--index out of range");
    x_lr_up = upsample_lr_to_hr(test_ds.samples[index].lr, cfg.data.hr_h, cfg.data.hr_w);
    gt = test_ds.samples[index].content;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%06d", index);
    tag = buf;
  }

  CharSequence forced;
  bool has_forced = !force_text_arg.empty();
  if (has_forced) forced = parse_text_arg(force_text_arg, cfg.data.alphabet_size - 1);

  uint64_t seed = derive_seed(cfg.seed, static_cast<uint64_t>(index < 0 ? 0 : index));
  SampleResult result = difftsr_sample(bank, x_lr_up, sid, stdm, seed, variant,
                                       has_forced ? &forced : nullptr);

  std::string dir = ensure_run_dir(cfg) + "/sample_" + cfg.variant + "_" + tag;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir);
  write_ppm(dir + "/restored.ppm", result.x0);
  write_ppm(dir + "/input_upsampled.ppm", x_lr_up);

  std::ostringstream trace;
  trace << "t,text,mean_entropy\n";
  for (const TraceRow& r : result.trace.rows) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%d,", r.t);
    trace << buf << seq_to_string(strip_pad(r.c_t, bank.cfg.alphabet_size - 1));
    std::snprintf(buf, sizeof(buf), ",%.6g\n", r.mean_entropy);
    trace << buf;
  }
  write_text_file(dir + "/trace.csv", trace.str());

  std::string pred = seq_to_string(strip_pad(result.text, bank.cfg.alphabet_size - 1));
  write_text_file(dir + "/pred.txt", pred + "\n");
  std::printf("restored %s -> %s\npredicted text: %s\n", tag.c_str(), dir.c_str(), pred.c_str());
  if (!gt.empty()) std::printf("ground truth:   %s\n", seq_to_string(gt).c_str());
  return kExitOk;
}

int cmd_eval(const RunConfig& cfg, const std::string& ckpt) {
  ModelBank bank = bank_from_checkpoint(cfg, ckpt);
  Variant variant = variant_from_string(cfg.variant);
  Dataset test_ds = load_split(cfg, "test");
  NoiseSchedule sid = make_idm_schedule(cfg);
  NoiseSchedule stdm = make_tdm_schedule(cfg);
  std::string fp = dataset_fingerprint(cfg.dataset_dir + "/test");

  EvalReport report = evaluate(bank, variant, test_ds, fp, sid, stdm,
                               derive_seed(cfg.seed, 0xE7A1), cfg.sample_batch,
                               /*keep_traces=*/true);
  std::string dir = ensure_run_dir(cfg);
  write_text_file(dir + "/report_" + cfg.variant + ".csv", format_report_csv(report));
  write_text_file(dir + "/summary_" + cfg.variant + ".json", format_report_json(report));
  if (variant == Variant::EXP3 || variant == Variant::FULL)
    write_text_file(dir + "/trace_stats_" + cfg.variant + ".csv",
                    format_trace_stats_csv(report));
  std::printf("%s: n=%d  PSNR %.4f dB  ACC %.4f  NED %.4f\n", cfg.variant.c_str(),
              static_cast<int>(report.rows.size()), report.mean_psnr, report.mean_acc,
              report.mean_ned);
  return kExitOk;
}

int cmd_ablate(const RunConfig& cfg, const std::map<std::string, std::string>& ckpts) {
  Dataset test_ds = load_split(cfg, "test");
  NoiseSchedule sid = make_idm_schedule(cfg);
  NoiseSchedule stdm = make_tdm_schedule(cfg);
  std::string fp = dataset_fingerprint(cfg.dataset_dir + "/test");
  std::string dir = ensure_run_dir(cfg);

  std::ostringstream table;
  table << "variant,psnr_db,acc,ned\n";
  std::printf("%-6s %10s %8s %8s\n", "variant", "PSNR(dB)", "ACC", "NED");
  for (const std::string& name : {"exp1", "exp2", "exp3", "full"}) {
    ModelBank bank = bank_from_checkpoint(cfg, ckpts.at(name));
    EvalReport report = evaluate(bank, variant_from_string(name), test_ds, fp, sid, stdm,
                                 derive_seed(cfg.seed, 0xE7A1), cfg.sample_batch, true);
    write_text_file(dir + "/report_" + name + ".csv", format_report_csv(report));
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%s,%.9g,%.9g,%.9g\n", name.c_str(), report.mean_psnr,
                  report.mean_acc, report.mean_ned);
    table << buf;
    std::printf("%-6s %10.4f %8.4f %8.4f\n", name.c_str(), report.mean_psnr, report.mean_acc,
                report.mean_ned);
  }
  write_text_file(dir + "/ablation.csv", table.str());
  return kExitOk;
}

int cmd_verify(const RunConfig& cfg, double posterior_bias) {
  std::string scratch = cfg.out_dir + "/verify_scratch";
  std::vector<VerifyResult> results = run_verify_suites(scratch, posterior_bias);
  bool all = true;
  for (const VerifyResult& r : results) {
    std::printf("[%s] %s: %s\n", r.pass ? "PASS" : "FAIL", r.name.c_str(), r.detail.c_str());
    all = all && r.pass;
  }
  return all ? kExitOk : kExitVerify;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dual-diffusion blind text image super-resolution"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOpts g;
  app.add_option("--config", g.config_path, "JSON run configuration");
  app.add_option("--seed", g.seed, "override the config seed")->each([&](const std::string&) {
    g.seed_set = true;
  });
  app.add_option("--out", g.out_dir, "output directory root");
  app.add_option("--variant", g.variant, "exp1|exp2|exp3|full")
      ->check(CLI::IsMember({"exp1", "exp2", "exp3", "full"}));
  app.add_option("--scale", g.scale, "super-resolution scale")->check(CLI::IsMember({2, 4}));
  app.add_option("--threads", g.threads, "cap worker threads");

  auto* gen = app.add_subcommand("gen-data", "render and degrade the synthetic dataset");

  std::string stage = "recognizer", ckpt_in;
  bool resume = false;
  auto* train = app.add_subcommand("train", "run one training stage");
  train->add_option("--stage", stage, "recognizer|idm|tdm|joint")
      ->required()
      ->check(CLI::IsMember({"recognizer", "idm", "tdm", "joint"}));
  train->add_option("--checkpoint", ckpt_in, "initial checkpoint (defaults to prior stage)");
  train->add_flag("--resume", resume, "continue this stage from its checkpoint");

  std::string ckpt, input_path, force_text;
  int index = -1;
  auto* sample = app.add_subcommand("sample", "restore one image");
  sample->add_option("--checkpoint", ckpt, "model checkpoint")->required();
  sample->add_option("--index", index, "test-set sample index");
  sample->add_option("--input", input_path, "LR image (PPM)");
  sample->add_option("--force-text", force_text, "override the initial recognized text");

  std::string eval_ckpt;
  auto* eval = app.add_subcommand("eval", "run metrics over the test split");
  eval->add_option("--checkpoint", eval_ckpt, "model checkpoint")->required();

  std::string ab_all, ab1, ab2, ab3, ab4;
  auto* ablate = app.add_subcommand("ablate", "evaluate all four variants");
  ablate->add_option("--checkpoint", ab_all, "checkpoint for every variant");
  ablate->add_option("--ckpt-exp1", ab1, "per-variant override");
  ablate->add_option("--ckpt-exp2", ab2, "per-variant override");
  ablate->add_option("--ckpt-exp3", ab3, "per-variant override");
  ablate->add_option("--ckpt-full", ab4, "per-variant override");

  double posterior_bias = 0.0;
  auto* verify = app.add_subcommand("verify", "run the exact-math oracle suites");
  verify->add_option("--inject-posterior-bias", posterior_bias,
                     "perturb the posterior (suite must then fail)")
      ->group("");  // hidden

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    RunConfig cfg = resolve_config(g);
    if (gen->parsed()) return cmd_gen_data(cfg);
    if (train->parsed()) return cmd_train(cfg, stage, ckpt_in, resume);
    if (sample->parsed()) {
      if (input_path.empty() && index < 0)
        throw ConfigError("sample: provide --index or --input");
      return cmd_sample(cfg, ckpt, index, input_path, force_text);
    }
    if (eval->parsed()) return cmd_eval(cfg, eval_ckpt);
    if (ablate->parsed()) {
      std::map<std::string, std::string> ckpts{{"exp1", ab1.empty() ? ab_all : ab1},
                                               {"exp2", ab2.empty() ? ab_all : ab2},
                                               {"exp3", ab3.empty() ? ab_all : ab3},
                                               {"full", ab4.empty() ? ab_all : ab4}};
      for (const auto& [name, path] : ckpts)
        if (path.empty()) throw ConfigError("ablate: missing checkpoint for " + name);
      return cmd_ablate(cfg, ckpts);
    }
    if (verify->parsed()) return cmd_verify(cfg, posterior_bias);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const IoError& e) {
    std::fprintf(stderr, "i/o error: %s\n", e.what());
    return kExitIo;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitIo;
  }
  return kExitOk;
}
