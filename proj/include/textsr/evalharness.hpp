#pragma once

#include <functional>
#include <string>
#include <vector>

#include "textsr/pipeline.hpp"

namespace textsr {

struct EvalRow {
  int index = 0;
  double psnr_db = 0.0;
  int acc = 0;
  double ned = 0.0;
  CharSequence pred, gt;  // PAD-stripped
};

struct EvalReport {
  Variant variant = Variant::FULL;
  std::string dataset_fp;
  uint64_t eval_seed = 0;
  std::vector<EvalRow> rows;
  double mean_psnr = 0.0, mean_acc = 0.0, mean_ned = 0.0;
  // Mean PAD-stripped edit distance of the trace state c_t to the label,
  // indexed by t-1 (only filled when traces were kept).
  std::vector<double> trace_mean_ed;
};

// Restorer signature: maps (dataset indices, per-sample seeds) to results.
using SamplerFn = std::function<std::vector<SampleResult>(const std::vector<int>&,
                                                          const std::vector<uint64_t>&)>;

// Runs the restorer over every sample, computes PSNR against the stored HR
// image and ACC/NED against the label from the restorer's returned text.
EvalReport evaluate_with(const SamplerFn& sampler, const Dataset& ds,
                         const std::string& dataset_fp, Variant variant, uint64_t eval_seed,
                         int batch, bool keep_traces);

// The production path: difftsr sampling for the given variant.
EvalReport evaluate(ModelBank& bank, Variant variant, const Dataset& ds,
                    const std::string& dataset_fp, const NoiseSchedule& sched_idm,
                    const NoiseSchedule& sched_tdm, uint64_t eval_seed, int batch,
                    bool keep_traces);

std::string format_report_csv(const EvalReport& report);
std::string format_report_json(const EvalReport& report);
std::string format_trace_stats_csv(const EvalReport& report);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace textsr
