#include "qkdsent/features.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <unordered_map>

#include <json.hpp>

namespace qkdsent::features {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kPhaseEps = 1e-12;
constexpr double kSingularEps = 1e-12;

const std::vector<std::string>& channel_feature_names() {
    static const std::vector<std::string> names = {
        "mean",
        "variance",
        "std",
        "min",
        "max",
        "median",
        "quantile_10",
        "quantile_25",
        "quantile_75",
        "quantile_90",
        "skewness",
        "kurtosis",
        "rms",
        "first",
        "last",
        "abs_sum_changes",
        "mean_abs_change",
        "max_abs_change",
        "count_above_mean",
        "count_below_mean",
        "longest_increase_run",
        "zero_crossings",
        "trend_slope",
        "trend_intercept",
        "trend_r2",
        "autocorr_1",
        "autocorr_2",
        "autocorr_3",
        "autocorr_4",
        "ar2_a1",
        "ar2_a2",
        "ar2_innovation_var",
        "dft_mag_0",
        "dft_mag_1",
        "dft_mag_2",
        "dft_mag_3",
        "dft_mag_4",
        "dft_mag_5",
        "dft_phase_1",
        "dft_phase_2",
        "dft_phase_3",
        "dft_phase_4",
        "dft_phase_5",
        "spectral_centroid",
        "spectral_energy",
        "haar_approx_energy",
        "haar_detail_energy",
        "permutation_entropy",
    };
    return names;
}

double central_moment(std::span<const double> xs, double m, int order) {
    double acc = 0.0;
    for (double x : xs) {
        acc += std::pow(x - m, order);
    }
    return acc / static_cast<double>(xs.size());
}

// Appends the 48 per-channel features in catalog order.
void channel_features(std::span<const double> xs, std::vector<MaybeValue>& out) {
    const std::size_t n = xs.size();
    const double m = mean(xs);
    const double var = variance(xs);

    out.emplace_back(m);
    out.emplace_back(var);
    out.emplace_back(std::sqrt(var));
    out.emplace_back(*std::min_element(xs.begin(), xs.end()));
    out.emplace_back(*std::max_element(xs.begin(), xs.end()));
    out.emplace_back(quantile(xs, 0.5));
    out.emplace_back(quantile(xs, 0.10));
    out.emplace_back(quantile(xs, 0.25));
    out.emplace_back(quantile(xs, 0.75));
    out.emplace_back(quantile(xs, 0.90));

    if (var > 0.0) {
        const double m2 = var;
        out.emplace_back(central_moment(xs, m, 3) / std::pow(m2, 1.5));
        out.emplace_back(central_moment(xs, m, 4) / (m2 * m2));
    } else {
        out.emplace_back(std::nullopt);
        out.emplace_back(std::nullopt);
    }

    double sq_sum = 0.0;
    for (double x : xs) {
        sq_sum += x * x;
    }
    out.emplace_back(std::sqrt(sq_sum / static_cast<double>(n)));
    out.emplace_back(xs.front());
    out.emplace_back(xs.back());

    if (n >= 2) {
        double abs_sum = 0.0, max_change = 0.0;
        for (std::size_t t = 0; t + 1 < n; ++t) {
            const double d = std::abs(xs[t + 1] - xs[t]);
            abs_sum += d;
            max_change = std::max(max_change, d);
        }
        out.emplace_back(abs_sum);
        out.emplace_back(abs_sum / static_cast<double>(n - 1));
        out.emplace_back(max_change);
    } else {
        out.insert(out.end(), 3, std::nullopt);
    }

    double above = 0.0, below = 0.0;
    for (double x : xs) {
        if (x > m) above += 1.0;
        if (x < m) below += 1.0;
    }
    out.emplace_back(above);
    out.emplace_back(below);

    double longest = 1.0, run = 1.0;
    for (std::size_t t = 0; t + 1 < n; ++t) {
        run = xs[t + 1] > xs[t] ? run + 1.0 : 1.0;
        longest = std::max(longest, run);
    }
    out.emplace_back(longest);

    double crossings = 0.0;
    for (std::size_t t = 0; t + 1 < n; ++t) {
        if ((xs[t] - m) * (xs[t + 1] - m) < 0.0) crossings += 1.0;
    }
    out.emplace_back(crossings);

    // Linear trend against t = 0..n-1.
    if (n >= 2) {
        const double t_mean = static_cast<double>(n - 1) / 2.0;
        double sxx = 0.0, sxy = 0.0;
        for (std::size_t t = 0; t < n; ++t) {
            const double dt = static_cast<double>(t) - t_mean;
            sxx += dt * dt;
            sxy += dt * (xs[t] - m);
        }
        const double slope = sxy / sxx;
        const double intercept = m - slope * t_mean;
        out.emplace_back(slope);
        out.emplace_back(intercept);
        if (var > 0.0) {
            double ss_res = 0.0;
            for (std::size_t t = 0; t < n; ++t) {
                const double fit = intercept + slope * static_cast<double>(t);
                ss_res += (xs[t] - fit) * (xs[t] - fit);
            }
            out.emplace_back(1.0 - ss_res / (var * static_cast<double>(n)));
        } else {
            out.emplace_back(std::nullopt);
        }
    } else {
        out.insert(out.end(), 3, std::nullopt);
    }

    for (std::size_t lag = 1; lag <= 4; ++lag) {
        out.emplace_back(lag < n ? autocorrelation(xs, lag) : std::nullopt);
    }

    if (const auto ar = yule_walker_ar2(xs)) {
        out.emplace_back(ar->a1);
        out.emplace_back(ar->a2);
        out.emplace_back(ar->innovation_var);
    } else {
        out.insert(out.end(), 3, std::nullopt);
    }

    const DftBins bins = dft_bins(xs);
    for (const auto& mag : bins.magnitudes) {
        out.emplace_back(mag);
    }
    for (const auto& phase : bins.phases) {
        out.emplace_back(phase);
    }

    double mag_sum = 0.0, weighted = 0.0, energy = 0.0;
    for (std::size_t k = 0; k < bins.magnitudes.size(); ++k) {
        if (bins.magnitudes[k]) {
            mag_sum += *bins.magnitudes[k];
            weighted += static_cast<double>(k) * *bins.magnitudes[k];
            energy += *bins.magnitudes[k] * *bins.magnitudes[k];
        }
    }
    out.emplace_back(mag_sum > 0.0 ? MaybeValue(weighted / mag_sum) : std::nullopt);
    out.emplace_back(energy);

    if (n >= 2) {
        double approx = 0.0, detail = 0.0;
        for (std::size_t i = 0; i + 1 < n; i += 2) {
            const double a = (xs[i] + xs[i + 1]) / std::sqrt(2.0);
            const double d = (xs[i] - xs[i + 1]) / std::sqrt(2.0);
            approx += a * a;
            detail += d * d;
        }
        out.emplace_back(approx);
        out.emplace_back(detail);
    } else {
        out.insert(out.end(), 2, std::nullopt);
    }

    out.emplace_back(n >= 3 ? MaybeValue(permutation_entropy(xs, 3)) : std::nullopt);
}

MaybeValue pearson(std::span<const double> xs, std::span<const double> ys, std::size_t y_lag) {
    const std::size_t n = xs.size();
    const double mx = mean(xs);
    const double my = mean(ys);
    const double sx = std::sqrt(variance(xs));
    const double sy = std::sqrt(variance(ys));
    if (sx == 0.0 || sy == 0.0 || y_lag >= n) {
        return std::nullopt;
    }
    double acc = 0.0;
    for (std::size_t t = 0; t + y_lag < n; ++t) {
        acc += (xs[t] - mx) * (ys[t + y_lag] - my);
    }
    return acc / (static_cast<double>(n) * sx * sy);
}

}  // namespace

const std::vector<std::string>& catalog() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> v;
        for (const char* channel : {"qber", "skr"}) {
            for (const std::string& f : channel_feature_names()) {
                v.push_back(std::string(channel) + "__" + f);
            }
        }
        v.push_back("cross__pearson");
        v.push_back("cross__lag1_xcorr");
        return v;
    }();
    return names;
}

std::size_t catalog_index(const std::string& name) {
    static const std::unordered_map<std::string, std::size_t> index = [] {
        std::unordered_map<std::string, std::size_t> m;
        for (std::size_t i = 0; i < catalog().size(); ++i) {
            m.emplace(catalog()[i], i);
        }
        return m;
    }();
    const auto it = index.find(name);
    if (it == index.end()) {
        throw std::out_of_range("unknown feature name: " + name);
    }
    return it->second;
}

double mean(std::span<const double> xs) {
    if (xs.empty()) {
        throw std::invalid_argument("mean: empty series");
    }
    return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double variance(std::span<const double> xs) {
    const double m = mean(xs);
    double acc = 0.0;
    for (double x : xs) {
        acc += (x - m) * (x - m);
    }
    return acc / static_cast<double>(xs.size());
}

double quantile(std::span<const double> xs, double p) {
    if (xs.empty() || p < 0.0 || p > 1.0) {
        throw std::invalid_argument("quantile: empty series or p outside [0,1]");
    }
    std::vector<double> sorted(xs.begin(), xs.end());
    std::sort(sorted.begin(), sorted.end());
    const double h = static_cast<double>(sorted.size() - 1) * p;
    const std::size_t lo = static_cast<std::size_t>(std::floor(h));
    if (lo + 1 >= sorted.size()) {
        return sorted.back();
    }
    const double frac = h - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

MaybeValue autocorrelation(std::span<const double> xs, std::size_t lag) {
    const std::size_t n = xs.size();
    if (lag < 1 || lag >= n) {
        throw std::domain_error("autocorrelation: lag must satisfy 1 <= lag < length");
    }
    const double m = mean(xs);
    const double var = variance(xs);
    if (var == 0.0) {
        return std::nullopt;
    }
    double acc = 0.0;
    for (std::size_t t = 0; t + lag < n; ++t) {
        acc += (xs[t] - m) * (xs[t + lag] - m);
    }
    return acc / (static_cast<double>(n) * var);
}

std::optional<Ar2Fit> yule_walker_ar2(std::span<const double> xs) {
    if (xs.size() < 3) {
        return std::nullopt;
    }
    const double var = variance(xs);
    if (var == 0.0) {
        return std::nullopt;
    }
    const double r1 = *autocorrelation(xs, 1);
    const double r2 = *autocorrelation(xs, 2);
    const double det = 1.0 - r1 * r1;
    if (std::abs(det) < kSingularEps) {
        return std::nullopt;
    }
    Ar2Fit fit;
    fit.a1 = r1 * (1.0 - r2) / det;
    fit.a2 = (r2 - r1 * r1) / det;
    fit.innovation_var = var * (1.0 - fit.a1 * r1 - fit.a2 * r2);
    return fit;
}

DftBins dft_bins(std::span<const double> xs) {
    const std::size_t n = xs.size();
    DftBins bins;
    for (std::size_t k = 0; k < bins.magnitudes.size(); ++k) {
        if (k >= n) {
            continue;  // bin undefined for short series, stays MISSING
        }
        std::complex<double> x{0.0, 0.0};
        for (std::size_t t = 0; t < n; ++t) {
            const double angle = -2.0 * kPi * static_cast<double>(k) * static_cast<double>(t) /
                                 static_cast<double>(n);
            x += xs[t] * std::complex<double>(std::cos(angle), std::sin(angle));
        }
        bins.magnitudes[k] = std::abs(x);
        if (k >= 1 && std::abs(x) >= kPhaseEps) {
            bins.phases[k - 1] = std::atan2(x.imag(), x.real());
        }
    }
    return bins;
}

double permutation_entropy(std::span<const double> xs, std::size_t order) {
    const std::size_t n = xs.size();
    if (order < 2 || n < order) {
        throw std::invalid_argument("permutation_entropy: series shorter than order");
    }
    std::unordered_map<std::size_t, std::size_t> pattern_counts;
    const std::size_t total = n - order + 1;
    std::vector<std::size_t> ranks(order);
    for (std::size_t t = 0; t < total; ++t) {
        // Ordinal pattern: rank of each element within the tuple, ties broken
        // earlier-index-smaller.
        std::iota(ranks.begin(), ranks.end(), std::size_t{0});
        std::sort(ranks.begin(), ranks.end(), [&](std::size_t a, std::size_t b) {
            if (xs[t + a] != xs[t + b]) return xs[t + a] < xs[t + b];
            return a < b;
        });
        std::size_t code = 0;
        for (std::size_t r : ranks) {
            code = code * order + r;
        }
        ++pattern_counts[code];
    }
    double entropy = 0.0;
    for (const auto& [code, count] : pattern_counts) {
        const double p = static_cast<double>(count) / static_cast<double>(total);
        entropy -= p * std::log(p);
    }
    return entropy;
}

FeatureVector extract(const telemetry::Window& window, const telemetry::ScalerParams& scaler) {
    if (window.samples.empty()) {
        throw std::invalid_argument("extract: empty window");
    }
    std::vector<double> qber, skr;
    qber.reserve(window.samples.size());
    skr.reserve(window.samples.size());
    for (const auto& sample : window.samples) {
        const auto norm = telemetry::transform(scaler, sample);
        qber.push_back(norm.qber);
        skr.push_back(norm.skr);
    }

    FeatureVector fv;
    fv.values.reserve(catalog().size());
    channel_features(qber, fv.values);
    channel_features(skr, fv.values);
    fv.values.push_back(pearson(qber, skr, 0));
    fv.values.push_back(pearson(qber, skr, 1));
    return fv;
}

void write_feature_csv(const std::string& path, const std::vector<FeatureVector>& rows,
                       const std::vector<std::optional<int>>& labels) {
    if (!labels.empty() && labels.size() != rows.size()) {
        throw std::invalid_argument("write_feature_csv: label count mismatch");
    }
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot open output file: " + path);
    }
    const bool with_labels = !labels.empty();
    for (std::size_t i = 0; i < catalog().size(); ++i) {
        out << (i == 0 ? "" : ",") << catalog()[i];
    }
    if (with_labels) {
        out << ",label";
    }
    out << '\n';
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto& row = rows[r].values;
        if (row.size() != catalog().size()) {
            throw std::invalid_argument("write_feature_csv: row width mismatch");
        }
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i != 0) out << ',';
            if (row[i]) out << nlohmann::json(*row[i]).dump();
        }
        if (with_labels) {
            out << ',';
            if (labels[r]) out << *labels[r];
        }
        out << '\n';
    }
}

}  // namespace qkdsent::features
