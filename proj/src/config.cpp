#include "textsr/config.hpp"

#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "textsr/dataset.hpp"

namespace textsr {

using nlohmann::json;

namespace {

std::string sigma_mode_to_string(SigmaMode m) {
  switch (m) {
    case SigmaMode::Beta: return "beta";
    case SigmaMode::BetaTilde: return "beta_tilde";
    case SigmaMode::Zero: return "zero";
  }
  return "?";
}

std::string kind_to_string(ScheduleKind k) {
  return k == ScheduleKind::Linear ? "linear" : "cosine";
}

json schedule_to_json(const ScheduleParams& p) {
  return json{{"kind", kind_to_string(p.kind)},
              {"beta_min", p.beta_min},
              {"beta_max", p.beta_max},
              {"cosine_s", p.cosine_s},
              {"cosine_power", p.cosine_power},
              {"sigma_mode", sigma_mode_to_string(p.sigma_mode)}};
}

void schedule_from_json(const json& j, ScheduleParams& p) {
  p.kind = schedule_kind_from_string(j.at("kind"));
  p.beta_min = j.at("beta_min");
  p.beta_max = j.at("beta_max");
  p.cosine_s = j.at("cosine_s");
  p.cosine_power = j.at("cosine_power");
  p.sigma_mode = sigma_mode_from_string(j.at("sigma_mode"));
}

json config_json(const RunConfig& c) {
  return json{
      {"seed", c.seed},
      {"threads", c.threads},
      {"deterministic", c.deterministic},
      {"timestamp_runs", c.timestamp_runs},
      {"out_dir", c.out_dir},
      {"dataset_dir", c.dataset_dir},
      {"variant", c.variant},
      {"data",
       json{{"n_train", c.n_train},
            {"n_test", c.n_test},
            {"alphabet_size", c.data.alphabet_size},
            {"seq_slots", c.data.seq_slots},
            {"max_content_len", c.data.max_content_len},
            {"hr_h", c.data.hr_h},
            {"hr_w", c.data.hr_w},
            {"scale", c.data.scale},
            {"font_seed", c.data.font_seed},
            {"glyph_rows", c.data.glyph_rows},
            {"glyph_cols", c.data.glyph_cols},
            {"glyph_min_hamming", c.data.glyph_min_hamming},
            {"style",
             json{{"min_luminance_gap", c.data.style.min_luminance_gap},
                  {"glyph_scale_min", c.data.style.glyph_scale_min},
                  {"glyph_scale_max", c.data.style.glyph_scale_max},
                  {"max_jitter", c.data.style.max_jitter},
                  {"dilate_prob", c.data.style.dilate_prob}}},
            {"degrade",
             json{{"blur_prob", c.data.degrade.blur_prob},
                  {"blur_sigma_min", c.data.degrade.blur_sigma_min},
                  {"blur_sigma_max", c.data.degrade.blur_sigma_max},
                  {"noise_prob", c.data.degrade.noise_prob},
                  {"noise_sigma_min", c.data.degrade.noise_sigma_min},
                  {"noise_sigma_max", c.data.degrade.noise_sigma_max},
                  {"contrast_prob", c.data.degrade.contrast_prob},
                  {"contrast_min", c.data.degrade.contrast_min},
                  {"contrast_max", c.data.degrade.contrast_max},
                  {"brightness_min", c.data.degrade.brightness_min},
                  {"brightness_max", c.data.degrade.brightness_max},
                  {"occlude_prob", c.data.degrade.occlude_prob},
                  {"occlude_max_area", c.data.degrade.occlude_max_area},
                  {"second_noise_prob", c.data.degrade.second_noise_prob},
                  {"second_noise_sigma_min", c.data.degrade.second_noise_sigma_min},
                  {"second_noise_sigma_max", c.data.degrade.second_noise_sigma_max}}}}},
      {"schedules",
       json{{"T", c.T}, {"idm", schedule_to_json(c.sched_idm)},
            {"tdm", schedule_to_json(c.sched_tdm)}}},
      {"model",
       json{{"latent_patch", c.model.latent_patch},
            {"time_dim", c.model.time_dim},
            {"idm_channels", c.model.idm_channels},
            {"cond_dim", c.model.cond_dim},
            {"tdm_dim", c.model.tdm_dim},
            {"tdm_blocks", c.model.tdm_blocks},
            {"icond_dim", c.model.icond_dim},
            {"mom_channels", c.model.mom_channels},
            {"rec_c1", c.model.rec_c1},
            {"rec_c2", c.model.rec_c2},
            {"rec_c3", c.model.rec_c3}}},
      {"train",
       json{{"batch", c.train.batch},
            {"lr", c.train.lr},
            {"adam_beta1", c.train.adam_beta1},
            {"adam_beta2", c.train.adam_beta2},
            {"adam_eps", c.train.adam_eps},
            {"clip_norm", c.train.clip_norm},
            {"cond_dropout", c.train.cond_dropout},
            {"rec_clean_prob", c.train.rec_clean_prob},
            {"lambda_tdm", c.train.lambda_tdm},
            {"freeze_branches_in_joint", c.train.freeze_branches_in_joint},
            {"steps_recognizer", c.train.steps_recognizer},
            {"steps_idm", c.train.steps_idm},
            {"steps_tdm", c.train.steps_tdm},
            {"steps_joint", c.train.steps_joint},
            {"log_every", c.train.log_every}}},
      {"sample_batch", c.sample_batch},
  };
}

// Rejects any key not present in the reference layout at the same path.
void reject_unknown_keys(const json& user, const json& reference, const std::string& path) {
  if (!user.is_object()) return;
  for (auto it = user.begin(); it != user.end(); ++it) {
    std::string key_path = path.empty() ? it.key() : path + "." + it.key();
    if (!reference.contains(it.key()))
      throw ConfigError("unknown config key: " + key_path);
    if (it->is_object()) reject_unknown_keys(*it, reference.at(it.key()), key_path);
  }
}

template <typename T>
void fetch(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

void RunConfig::finalize() {
  if (data.scale != 2 && data.scale != 4)
    throw ConfigError("data.scale must be 2 or 4");
  if (data.hr_h % data.scale != 0 || data.hr_w % data.scale != 0)
    throw ConfigError("HR dims must be divisible by the scale");
  if (data.hr_h % model.latent_patch != 0 || data.hr_w % model.latent_patch != 0)
    throw ConfigError("HR dims must be divisible by the latent patch");
  if (data.hr_w % data.seq_slots != 0)
    throw ConfigError("HR width must be divisible by seq_slots");
  if (data.alphabet_size < 2) throw ConfigError("alphabet_size must be >= 2");
  if (T < 1) throw ConfigError("schedules.T must be >= 1");
  model.seq_slots = data.seq_slots;
  model.alphabet_size = data.alphabet_size;
  model.latent_h = data.hr_h / model.latent_patch;
  model.latent_w = data.hr_w / model.latent_patch;
  if (T > 1 && (model.latent_h % 2 != 0 || model.latent_w % 2 != 0))
    throw ConfigError("latent dims must be even");
  variant_from_string(variant);  // validates
}

RunConfig default_config() {
  RunConfig c;
  c.sched_idm = linear_params_scaled(c.T);
  c.sched_tdm.kind = ScheduleKind::Cosine;
  c.sched_tdm.cosine_power = 4.0;
  c.finalize();
  return c;
}

RunConfig parse_config_json(const std::string& text) {
  json user;
  try {
    user = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  RunConfig c = default_config();
  json reference = config_json(c);
  reject_unknown_keys(user, reference, "");

  try {
    fetch(user, "seed", c.seed);
    fetch(user, "threads", c.threads);
    fetch(user, "deterministic", c.deterministic);
    fetch(user, "timestamp_runs", c.timestamp_runs);
    fetch(user, "out_dir", c.out_dir);
    fetch(user, "dataset_dir", c.dataset_dir);
    fetch(user, "variant", c.variant);
    if (user.contains("data")) {
      const json& d = user.at("data");
      fetch(d, "n_train", c.n_train);
      fetch(d, "n_test", c.n_test);
      fetch(d, "alphabet_size", c.data.alphabet_size);
      fetch(d, "seq_slots", c.data.seq_slots);
      fetch(d, "max_content_len", c.data.max_content_len);
      fetch(d, "hr_h", c.data.hr_h);
      fetch(d, "hr_w", c.data.hr_w);
      fetch(d, "scale", c.data.scale);
      fetch(d, "font_seed", c.data.font_seed);
      fetch(d, "glyph_rows", c.data.glyph_rows);
      fetch(d, "glyph_cols", c.data.glyph_cols);
      fetch(d, "glyph_min_hamming", c.data.glyph_min_hamming);
      if (d.contains("style")) {
        const json& st = d.at("style");
        fetch(st, "min_luminance_gap", c.data.style.min_luminance_gap);
        fetch(st, "glyph_scale_min", c.data.style.glyph_scale_min);
        fetch(st, "glyph_scale_max", c.data.style.glyph_scale_max);
        fetch(st, "max_jitter", c.data.style.max_jitter);
        fetch(st, "dilate_prob", c.data.style.dilate_prob);
      }
      if (d.contains("degrade")) {
        const json& dg = d.at("degrade");
        fetch(dg, "blur_prob", c.data.degrade.blur_prob);
        fetch(dg, "blur_sigma_min", c.data.degrade.blur_sigma_min);
        fetch(dg, "blur_sigma_max", c.data.degrade.blur_sigma_max);
        fetch(dg, "noise_prob", c.data.degrade.noise_prob);
        fetch(dg, "noise_sigma_min", c.data.degrade.noise_sigma_min);
        fetch(dg, "noise_sigma_max", c.data.degrade.noise_sigma_max);
        fetch(dg, "contrast_prob", c.data.degrade.contrast_prob);
        fetch(dg, "contrast_min", c.data.degrade.contrast_min);
        fetch(dg, "contrast_max", c.data.degrade.contrast_max);
        fetch(dg, "brightness_min", c.data.degrade.brightness_min);
        fetch(dg, "brightness_max", c.data.degrade.brightness_max);
        fetch(dg, "occlude_prob", c.data.degrade.occlude_prob);
        fetch(dg, "occlude_max_area", c.data.degrade.occlude_max_area);
        fetch(dg, "second_noise_prob", c.data.degrade.second_noise_prob);
        fetch(dg, "second_noise_sigma_min", c.data.degrade.second_noise_sigma_min);
        fetch(dg, "second_noise_sigma_max", c.data.degrade.second_noise_sigma_max);
      }
    }
    if (user.contains("schedules")) {
      const json& s = user.at("schedules");
      bool had_T = s.contains("T");
      fetch(s, "T", c.T);
      if (had_T && !s.contains("idm")) c.sched_idm = linear_params_scaled(c.T);
      if (s.contains("idm")) schedule_from_json(s.at("idm"), c.sched_idm);
      if (s.contains("tdm")) schedule_from_json(s.at("tdm"), c.sched_tdm);
    }
    if (user.contains("model")) {
      const json& m = user.at("model");
      fetch(m, "latent_patch", c.model.latent_patch);
      fetch(m, "time_dim", c.model.time_dim);
      fetch(m, "idm_channels", c.model.idm_channels);
      fetch(m, "cond_dim", c.model.cond_dim);
      fetch(m, "tdm_dim", c.model.tdm_dim);
      fetch(m, "tdm_blocks", c.model.tdm_blocks);
      fetch(m, "icond_dim", c.model.icond_dim);
      fetch(m, "mom_channels", c.model.mom_channels);
      fetch(m, "rec_c1", c.model.rec_c1);
      fetch(m, "rec_c2", c.model.rec_c2);
      fetch(m, "rec_c3", c.model.rec_c3);
    }
    if (user.contains("train")) {
      const json& t = user.at("train");
      fetch(t, "batch", c.train.batch);
      fetch(t, "lr", c.train.lr);
      fetch(t, "adam_beta1", c.train.adam_beta1);
      fetch(t, "adam_beta2", c.train.adam_beta2);
      fetch(t, "adam_eps", c.train.adam_eps);
      fetch(t, "clip_norm", c.train.clip_norm);
      fetch(t, "cond_dropout", c.train.cond_dropout);
      fetch(t, "rec_clean_prob", c.train.rec_clean_prob);
      fetch(t, "lambda_tdm", c.train.lambda_tdm);
      fetch(t, "freeze_branches_in_joint", c.train.freeze_branches_in_joint);
      fetch(t, "steps_recognizer", c.train.steps_recognizer);
      fetch(t, "steps_idm", c.train.steps_idm);
      fetch(t, "steps_tdm", c.train.steps_tdm);
      fetch(t, "steps_joint", c.train.steps_joint);
      fetch(t, "log_every", c.train.log_every);
    }
    fetch(user, "sample_batch", c.sample_batch);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config value error: ") + e.what());
  }

  try {
    c.finalize();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config_json(ss.str());
}

std::string config_to_json(const RunConfig& cfg) { return config_json(cfg).dump(2); }

std::string config_hash(const RunConfig& cfg) {
  std::string dump = config_json(cfg).dump();
  uint64_t h = fnv1a64(dump.data(), dump.size());
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

NoiseSchedule make_idm_schedule(const RunConfig& cfg) {
  try {
    return make_schedule(Branch::IDM, cfg.T, cfg.sched_idm);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

NoiseSchedule make_tdm_schedule(const RunConfig& cfg) {
  try {
    return make_schedule(Branch::TDM, cfg.T, cfg.sched_tdm);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

ModelBank make_bank(const RunConfig& cfg) {
  try {
    return ModelBank::make(cfg.model, cfg.data.hr_h, cfg.data.hr_w);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

std::string run_directory(const RunConfig& cfg) {
  std::string dir = cfg.out_dir + "/" + config_hash(cfg);
  if (cfg.timestamp_runs) {
    std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "-%Y%m%d-%H%M%S", &tm);
    dir += buf;
  }
  return dir;
}

}  // namespace textsr
