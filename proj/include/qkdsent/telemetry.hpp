#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace qkdsent::telemetry {

// One telemetry point as reported by the QKD device.
struct SampleRecord {
    std::int64_t ts_ms = 0;  // milliseconds since epoch, strictly increasing per log
    double qber = 0.0;       // fraction in [0,1]
    double skr = 0.0;        // bits/second, >= 0
};

// Default number of samples per analysis window.
inline constexpr std::size_t kDefaultWindowSize = 10;

// N consecutive samples from one log, optionally carrying a ground-truth label.
struct Window {
    std::vector<SampleRecord> samples;
    std::optional<int> label;

    // Source bookkeeping used by the temporal split.
    std::size_t log_index = 0;
    std::size_t start_index = 0;

    std::int64_t first_ts() const { return samples.front().ts_ms; }
    std::int64_t last_ts() const { return samples.back().ts_ms; }
};

// Per-channel MinMax parameters fitted on the reference window. Medians are
// recorded for diagnostics only; the transform uses min/max.
struct ScalerParams {
    double qber_min = 0.0;
    double qber_max = 1.0;
    double skr_min = 0.0;
    double skr_max = 1.0;
    double reference_median_qber = 0.0;
    double reference_median_skr = 0.0;
};

struct NormalizedSample {
    double qber = 0.0;
    double skr = 0.0;
};

enum class LogFormat { Jsonl, Csv };

// Parse failure; line is 1-based within the log file.
class ParseError : public std::runtime_error {
public:
    ParseError(std::size_t line, const std::string& what)
        : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

// Reads a telemetry log. JSONL lines carry {"ts":int,"qber":real,"skr":real};
// CSV uses the header `timestamp,qber,skr`. Records are validated against the
// field invariants and timestamps must be strictly increasing.
std::vector<SampleRecord> read_log(const std::string& path, LogFormat format);

// Inverse of read_log for valid record lists.
void write_log(const std::vector<SampleRecord>& records, const std::string& path,
               LogFormat format);

// MinMax fit over the reference window, one scale per channel.
ScalerParams fit_scaler(const Window& reference);

// (x - min)/(max - min) per channel; a degenerate channel (max == min) maps to
// the constant 0.5. Values are NOT clipped: out-of-range output is the anomaly
// signal downstream features rely on.
NormalizedSample transform(const ScalerParams& params, const SampleRecord& sample);

void to_json(nlohmann::json& j, const ScalerParams& p);
void from_json(const nlohmann::json& j, ScalerParams& p);

}  // namespace qkdsent::telemetry
