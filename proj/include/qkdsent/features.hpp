#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qkdsent/telemetry.hpp"

namespace qkdsent::features {

// A value that could not be computed for a window (zero variance, short
// series, zero spectral mass, ...). Kept explicit instead of NaN so the
// selector's missing-value routing is exercised deliberately.
using MaybeValue = std::optional<double>;

// Fixed catalog of feature names, identical for every window. Names follow
// the `channel__feature` convention; the two cross-channel features close the
// list. Catalog order is the tie-break order used by feature selection.
const std::vector<std::string>& catalog();

// Index of a catalog name; throws std::out_of_range for unknown names.
std::size_t catalog_index(const std::string& name);

// One row of the feature matrix, aligned with catalog() order.
struct FeatureVector {
    std::vector<MaybeValue> values;

    const MaybeValue& at(const std::string& name) const { return values.at(catalog_index(name)); }
};

// Extracts the full catalog from one window. Samples are normalized with the
// scaler first; features are computed on the normalized QBER and SKR series.
//
// Definitions (population conventions throughout, n = window length):
//   variance         sum((x-mean)^2)/n
//   quantile_p       linear interpolation at h=(n-1)p between order statistics
//   skewness         m3/m2^1.5, kurtosis m4/m2^2; MISSING when m2 == 0
//   count_above/below_mean  strict comparisons
//   longest_increase_run    samples in the longest strictly increasing run
//   zero_crossings   sign changes of the mean-centered series (strict)
//   trend            OLS of x against t=0..n-1; r2 MISSING for constant series
//   autocorr_L       sum_{t<n-L}(x_t-mean)(x_{t+L}-mean) / (n*variance)
//   ar2_*            Yule-Walker from autocorr lags 1,2
//   dft_mag_k/phase_k  X_k = sum_t x_t exp(-2*pi*i*k*t/n); phase MISSING when
//                      |X_k| < 1e-12; bins with k >= n are MISSING
//   spectral_centroid  sum(k*|X_k|)/sum(|X_k|) over bins 0..5
//   spectral_energy    sum(|X_k|^2) over bins 0..5
//   haar_*_energy    level-1 Haar transform over sample pairs; an odd trailing
//                    sample is ignored
//   permutation_entropy  order 3, natural log, ties broken earlier-index-smaller
//   cross__pearson   sum((x-mx)(y-my)) / (n*sx*sy)
//   cross__lag1_xcorr  sum_{t<n-1}((x_t-mx)(y_{t+1}-my)) / (n*sx*sy)
FeatureVector extract(const telemetry::Window& window, const telemetry::ScalerParams& scaler);

// Catalog members exposed for direct use and testing.
double mean(std::span<const double> xs);
double variance(std::span<const double> xs);
double quantile(std::span<const double> xs, double p);
MaybeValue autocorrelation(std::span<const double> xs, std::size_t lag);

struct Ar2Fit {
    double a1 = 0.0;
    double a2 = 0.0;
    double innovation_var = 0.0;
};
std::optional<Ar2Fit> yule_walker_ar2(std::span<const double> xs);

struct DftBins {
    std::array<MaybeValue, 6> magnitudes;  // bins 0..5
    std::array<MaybeValue, 5> phases;      // bins 1..5
};
DftBins dft_bins(std::span<const double> xs);

double permutation_entropy(std::span<const double> xs, std::size_t order);

// Feature matrix CSV: header row of catalog names, one row per window, empty
// cells for MISSING, trailing `label` column when labels are present.
void write_feature_csv(const std::string& path, const std::vector<FeatureVector>& rows,
                       const std::vector<std::optional<int>>& labels);

}  // namespace qkdsent::features
