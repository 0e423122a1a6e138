#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "tsd/datagen.hpp"
#include "tsd/model.hpp"

namespace tsd {

// sqrt((1/M) ||x - xh||^2)
double rmse(const Eigen::VectorXd& x, const Eigen::VectorXd& xh);

// RMS amplitude ||x|| / sqrt(M)
double rms_amplitude(const Eigen::VectorXd& x);

// A component counts as absent when the prediction's RMS amplitude falls
// below tau (components are blended from unit-variance signals, so tau is a
// fraction of one component's natural scale).
std::array<bool, 4> absence_flags(const std::array<Eigen::VectorXd, 4>& pred, double tau);

inline constexpr double kDefaultAbsenceTau = 0.05;

struct SampleScore {
  int index = 0;
  std::array<float, 3> blend{};
  std::array<double, 4> rmse{};      // against the stored ground truth
  std::array<double, 4> pred_rms{};  // RMS amplitude of each prediction
  std::array<bool, 4> absent{};
};

struct ComponentReport {
  std::array<double, 4> rmse_mean{};  // per-component mean of per-sample RMSE
  double rmse_avg = 0.0;              // mean of the four
  double tau = kDefaultAbsenceTau;
  std::vector<SampleScore> rows;
};

// Maps an observation to four predicted components (c, s, o, n).
using Predictor = std::function<std::array<Eigen::VectorXd, 4>(const DecomposedSample&)>;

ComponentReport score_dataset(const std::vector<DecomposedSample>& samples,
                              const std::vector<int>& subset, const Predictor& predictor,
                              double tau = kDefaultAbsenceTau);

// Trained-model evaluation (eval mode, deterministic).
template <typename S>
ComponentReport evaluate(const ModelParams<S>& params, const std::vector<DecomposedSample>& samples,
                         const std::vector<int>& subset, double tau = kDefaultAbsenceTau) {
  return score_dataset(
      samples, subset,
      [&params](const DecomposedSample& smp) {
        auto pred = predict(params, VecX<S>(smp.f.cast<S>()));
        std::array<Eigen::VectorXd, 4> out;
        for (int i = 0; i < 4; ++i) out[std::size_t(i)] = pred[std::size_t(i)].template cast<double>();
        return out;
      },
      tau);
}

// Baselines: the zero predictor, and the copy-through predictor that returns
// the observation as the first component and zeros elsewhere.
ComponentReport evaluate_zero_baseline(const std::vector<DecomposedSample>& samples,
                                       const std::vector<int>& subset,
                                       double tau = kDefaultAbsenceTau);
ComponentReport evaluate_identity_baseline(const std::vector<DecomposedSample>& samples,
                                           const std::vector<int>& subset,
                                           double tau = kDefaultAbsenceTau);

std::vector<int> full_subset(std::size_t n);

// One sample per canonical blend row: the first match in file order.
std::vector<int> reduced13_subset(const std::vector<DecomposedSample>& samples);

// Aligned text table, values scaled by 1e3.
std::string report_table(const ComponentReport& report, const std::string& label);

// Per-sample rows plus a final mean row.
void write_report_csv(const std::string& path, const ComponentReport& report);

}  // namespace tsd
