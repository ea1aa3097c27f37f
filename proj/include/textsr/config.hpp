#pragma once

#include <stdexcept>
#include <string>

#include "textsr/dataset.hpp"
#include "textsr/evalharness.hpp"
#include "textsr/pipeline.hpp"

namespace textsr {

// Exit-code-relevant error categories for the CLI.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  uint64_t seed = 1234;
  int threads = 0;  // 0 = library default
  bool deterministic = true;
  bool timestamp_runs = false;
  std::string out_dir = "runs";
  std::string dataset_dir = "data/toy";

  int n_train = 5000, n_test = 500;
  DatasetConfig data;

  int T = 100;
  ScheduleParams sched_idm;  // linear, bounds scaled to T by default
  ScheduleParams sched_tdm;  // sharp cosine
  ModelConfig model;
  TrainConfig train;
  int sample_batch = 16;
  std::string variant = "full";

  void finalize();  // derives model dims from data; validates divisibility
};

RunConfig default_config();
RunConfig load_config(const std::string& path);          // throws ConfigError
RunConfig parse_config_json(const std::string& text);    // throws ConfigError
std::string config_to_json(const RunConfig& cfg);        // canonical dump
std::string config_hash(const RunConfig& cfg);           // 16-hex FNV-1a

NoiseSchedule make_idm_schedule(const RunConfig& cfg);
NoiseSchedule make_tdm_schedule(const RunConfig& cfg);
ModelBank make_bank(const RunConfig& cfg);

// <out_dir>/<config hash>, optionally suffixed with a UTC timestamp.
std::string run_directory(const RunConfig& cfg);

}  // namespace textsr
