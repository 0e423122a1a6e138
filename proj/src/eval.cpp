#include "tsd/eval.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "tsd/errors.hpp"

namespace tsd {

double rmse(const Eigen::VectorXd& x, const Eigen::VectorXd& xh) {
  if (x.size() != xh.size())
    throw UsageError("rmse: lengths differ (" + std::to_string(x.size()) + " vs " +
                     std::to_string(xh.size()) + ")");
  return std::sqrt((x - xh).squaredNorm() / double(x.size()));
}

double rms_amplitude(const Eigen::VectorXd& x) {
  return std::sqrt(x.squaredNorm() / double(x.size()));
}

std::array<bool, 4> absence_flags(const std::array<Eigen::VectorXd, 4>& pred, double tau) {
  if (!(tau > 0.0)) throw UsageError("absence_flags: tau must be positive");
  std::array<bool, 4> out{};
  for (int i = 0; i < 4; ++i) out[std::size_t(i)] = rms_amplitude(pred[std::size_t(i)]) < tau;
  return out;
}

ComponentReport score_dataset(const std::vector<DecomposedSample>& samples,
                              const std::vector<int>& subset, const Predictor& predictor,
                              double tau) {
  if (subset.empty()) throw UsageError("evaluate: empty sample subset");
  if (!(tau > 0.0)) throw UsageError("evaluate: tau must be positive");
  ComponentReport report;
  report.tau = tau;
  report.rows.reserve(subset.size());
  for (int idx : subset) {
    if (idx < 0 || std::size_t(idx) >= samples.size())
      throw DataError("evaluate: sample index " + std::to_string(idx) + " out of range");
    const DecomposedSample& smp = samples[std::size_t(idx)];
    const auto pred = predictor(smp);
    const std::array<Eigen::VectorXd, 4> truth = {
        smp.c.cast<double>(), smp.s.cast<double>(), smp.o.cast<double>(), smp.n.cast<double>()};
    SampleScore row;
    row.index = idx;
    row.blend = {smp.blend_c, smp.blend_s, smp.blend_o};
    for (int i = 0; i < 4; ++i) {
      row.rmse[std::size_t(i)] = rmse(truth[std::size_t(i)], pred[std::size_t(i)]);
      row.pred_rms[std::size_t(i)] = rms_amplitude(pred[std::size_t(i)]);
      row.absent[std::size_t(i)] = row.pred_rms[std::size_t(i)] < tau;
      report.rmse_mean[std::size_t(i)] += row.rmse[std::size_t(i)];
    }
    report.rows.push_back(row);
  }
  for (auto& m : report.rmse_mean) m /= double(subset.size());
  report.rmse_avg =
      (report.rmse_mean[0] + report.rmse_mean[1] + report.rmse_mean[2] + report.rmse_mean[3]) / 4.0;
  return report;
}

ComponentReport evaluate_zero_baseline(const std::vector<DecomposedSample>& samples,
                                       const std::vector<int>& subset, double tau) {
  return score_dataset(
      samples, subset,
      [](const DecomposedSample& smp) {
        std::array<Eigen::VectorXd, 4> out;
        for (auto& v : out) v = Eigen::VectorXd::Zero(smp.f.size());
        return out;
      },
      tau);
}

ComponentReport evaluate_identity_baseline(const std::vector<DecomposedSample>& samples,
                                           const std::vector<int>& subset, double tau) {
  return score_dataset(
      samples, subset,
      [](const DecomposedSample& smp) {
        std::array<Eigen::VectorXd, 4> out;
        out[0] = smp.f.cast<double>();
        for (int i = 1; i < 4; ++i) out[std::size_t(i)] = Eigen::VectorXd::Zero(smp.f.size());
        return out;
      },
      tau);
}

std::vector<int> full_subset(std::size_t n) {
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = int(i);
  return out;
}

std::vector<int> reduced13_subset(const std::vector<DecomposedSample>& samples) {
  const auto& blends = default_blend_list();
  std::vector<int> out;
  out.reserve(blends.size());
  for (const Blend& b : blends) {
    int found = -1;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      if (std::abs(samples[i].blend_c - float(b.c)) < 1e-6f &&
          std::abs(samples[i].blend_s - float(b.s)) < 1e-6f &&
          std::abs(samples[i].blend_o - float(b.o)) < 1e-6f) {
        found = int(i);
        break;
      }
    }
    if (found < 0)
      throw DataError("reduced subset: no sample with blend (" + std::to_string(b.c) + ", " +
                      std::to_string(b.s) + ", " + std::to_string(b.o) + ")");
    out.push_back(found);
  }
  return out;
}

std::string report_table(const ComponentReport& report, const std::string& label) {
  char buf[256];
  std::string out;
  std::snprintf(buf, sizeof(buf), "%-18s %9s %9s %9s %9s %9s\n", "RMSE (x 1e-3)", "c", "s", "o",
                "n", "avg");
  out += buf;
  std::snprintf(buf, sizeof(buf), "%-18s %9.3f %9.3f %9.3f %9.3f %9.3f\n", label.c_str(),
                report.rmse_mean[0] * 1e3, report.rmse_mean[1] * 1e3, report.rmse_mean[2] * 1e3,
                report.rmse_mean[3] * 1e3, report.rmse_avg * 1e3);
  out += buf;
  std::array<int, 4> absent_counts{};
  for (const auto& row : report.rows)
    for (int i = 0; i < 4; ++i)
      if (row.absent[std::size_t(i)]) ++absent_counts[std::size_t(i)];
  std::snprintf(buf, sizeof(buf),
                "absent (rms < %.3g): c=%d s=%d o=%d n=%d of %zu samples\n", report.tau,
                absent_counts[0], absent_counts[1], absent_counts[2], absent_counts[3],
                report.rows.size());
  out += buf;
  return out;
}

void write_report_csv(const std::string& path, const ComponentReport& report) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("write_report_csv: cannot open '" + path + "'");
  os << "index,blend_c,blend_s,blend_o,rmse_c,rmse_s,rmse_o,rmse_n,"
        "pred_rms_c,pred_rms_s,pred_rms_o,pred_rms_n,absent_c,absent_s,absent_o,absent_n\n";
  char buf[512];
  for (const SampleScore& r : report.rows) {
    std::snprintf(buf, sizeof(buf),
                  "%d,%.6g,%.6g,%.6g,%.10e,%.10e,%.10e,%.10e,%.10e,%.10e,%.10e,%.10e,%d,%d,%d,%d\n",
                  r.index, double(r.blend[0]), double(r.blend[1]), double(r.blend[2]), r.rmse[0],
                  r.rmse[1], r.rmse[2], r.rmse[3], r.pred_rms[0], r.pred_rms[1], r.pred_rms[2],
                  r.pred_rms[3], int(r.absent[0]), int(r.absent[1]), int(r.absent[2]),
                  int(r.absent[3]));
    os << buf;
  }
  std::snprintf(buf, sizeof(buf), "mean,,,,%.10e,%.10e,%.10e,%.10e,,,,,,,,\n", report.rmse_mean[0],
                report.rmse_mean[1], report.rmse_mean[2], report.rmse_mean[3]);
  os << buf;
  if (!os) throw DataError("write_report_csv: write to '" + path + "' failed");
}

}  // namespace tsd
