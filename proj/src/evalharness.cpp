#include "textsr/evalharness.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "textsr/image.hpp"
#include "textsr/metrics.hpp"

namespace textsr {

namespace {

std::string seq_to_string(const CharSequence& s) {
  std::string out;
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += " ";
    out += std::to_string(s[i]);
  }
  return out;
}

}  // namespace

EvalReport evaluate_with(const SamplerFn& sampler, const Dataset& ds,
                         const std::string& dataset_fp, Variant variant, uint64_t eval_seed,
                         int batch, bool keep_traces) {
  int n = static_cast<int>(ds.samples.size());
  if (batch < 1) batch = 1;
  EvalReport report;
  report.variant = variant;
  report.dataset_fp = dataset_fp;
  report.eval_seed = eval_seed;
  int pad = ds.pad_index();

  std::vector<double> ed_sum;
  std::vector<long long> ed_count;

  for (int start = 0; start < n; start += batch) {
    int m = std::min(batch, n - start);
    std::vector<int> indices(m);
    std::vector<uint64_t> seeds(m);
    for (int i = 0; i < m; ++i) {
      indices[i] = start + i;
      seeds[i] = derive_seed(eval_seed, static_cast<uint64_t>(start + i));
    }
    std::vector<SampleResult> results = sampler(indices, seeds);
    for (int i = 0; i < m; ++i) {
      const SampleRecord& rec = ds.samples[start + i];
      EvalRow row;
      row.index = start + i;
      row.psnr_db = psnr(results[i].x0, dequantize_image(rec.hr));
      row.gt = rec.content;
      row.pred = strip_pad(results[i].text, pad);
      row.acc = seq_accuracy(row.pred, row.gt, pad);
      row.ned = ned(row.pred, row.gt, pad);
      report.rows.push_back(std::move(row));

      if (keep_traces) {
        for (const TraceRow& tr : results[i].trace.rows) {
          if (static_cast<int>(ed_sum.size()) < tr.t) {
            ed_sum.resize(tr.t, 0.0);
            ed_count.resize(tr.t, 0);
          }
          ed_sum[tr.t - 1] += levenshtein(strip_pad(tr.c_t, pad), rec.content);
          ed_count[tr.t - 1] += 1;
        }
      }
    }
  }

  double sp = 0.0, sa = 0.0, sn = 0.0;
  for (const EvalRow& r : report.rows) {
    sp += r.psnr_db;
    sa += r.acc;
    sn += r.ned;
  }
  int count = static_cast<int>(report.rows.size());
  if (count > 0) {
    report.mean_psnr = sp / count;
    report.mean_acc = sa / count;
    report.mean_ned = sn / count;
  }
  report.trace_mean_ed.resize(ed_sum.size());
  for (size_t t = 0; t < ed_sum.size(); ++t)
    report.trace_mean_ed[t] = ed_count[t] ? ed_sum[t] / ed_count[t] : 0.0;
  return report;
}

EvalReport evaluate(ModelBank& bank, Variant variant, const Dataset& ds,
                    const std::string& dataset_fp, const NoiseSchedule& sched_idm,
                    const NoiseSchedule& sched_tdm, uint64_t eval_seed, int batch,
                    bool keep_traces) {
  SamplerFn sampler = [&](const std::vector<int>& indices,
                          const std::vector<uint64_t>& seeds) {
    std::vector<Tensor> x_lr_up;
    x_lr_up.reserve(indices.size());
    for (int idx : indices)
      x_lr_up.push_back(upsample_lr_to_hr(ds.samples[idx].lr, bank.img_h, bank.img_w));
    return sample_batch(bank, x_lr_up, sched_idm, sched_tdm, seeds, variant, nullptr,
                        keep_traces);
  };
  return evaluate_with(sampler, ds, dataset_fp, variant, eval_seed, batch, keep_traces);
}

std::string format_report_csv(const EvalReport& report) {
  std::ostringstream out;
  out << "index,psnr_db,acc,ned,pred_text,gt_text\n";
  char buf[64];
  for (const EvalRow& r : report.rows) {
    std::snprintf(buf, sizeof(buf), "%d,%.9g,%d,%.9g,", r.index, r.psnr_db, r.acc, r.ned);
    out << buf << seq_to_string(r.pred) << "," << seq_to_string(r.gt) << "\n";
  }
  return out.str();
}

std::string format_report_json(const EvalReport& report) {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "{\n"
                "  \"variant\": \"%s\",\n"
                "  \"dataset_fingerprint\": \"%s\",\n"
                "  \"eval_seed\": %llu,\n"
                "  \"n\": %d,\n"
                "  \"mean_psnr_db\": %.9g,\n"
                "  \"mean_acc\": %.9g,\n"
                "  \"mean_ned\": %.9g\n"
                "}\n",
                variant_to_string(report.variant).c_str(), report.dataset_fp.c_str(),
                static_cast<unsigned long long>(report.eval_seed),
                static_cast<int>(report.rows.size()), report.mean_psnr, report.mean_acc,
                report.mean_ned);
  return buf;
}

std::string format_trace_stats_csv(const EvalReport& report) {
  std::ostringstream out;
  out << "t,mean_edit_distance\n";
  char buf[64];
  for (int t = static_cast<int>(report.trace_mean_ed.size()); t >= 1; --t) {
    std::snprintf(buf, sizeof(buf), "%d,%.9g\n", t, report.trace_mean_ed[t - 1]);
    out << buf;
  }
  return out.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f << content;
  if (!f) throw std::runtime_error("write failed: " + path);
}

}  // namespace textsr
