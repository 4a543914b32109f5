#include "qkdsent/telemetry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace qkdsent::telemetry {

namespace {

void validate_record(const SampleRecord& rec, std::size_t line) {
    if (!std::isfinite(rec.qber) || rec.qber < 0.0 || rec.qber > 1.0) {
        throw ParseError(line, "qber out of range [0,1]: " + std::to_string(rec.qber));
    }
    if (!std::isfinite(rec.skr) || rec.skr < 0.0) {
        throw ParseError(line, "skr must be >= 0: " + std::to_string(rec.skr));
    }
}

SampleRecord parse_jsonl_line(const std::string& text, std::size_t line) {
    nlohmann::json obj;
    try {
        obj = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(line, std::string("invalid JSON: ") + e.what());
    }
    if (!obj.is_object() || !obj.contains("ts") || !obj.contains("qber") || !obj.contains("skr")) {
        throw ParseError(line, "expected object with keys ts, qber, skr");
    }
    SampleRecord rec;
    try {
        rec.ts_ms = obj.at("ts").get<std::int64_t>();
        rec.qber = obj.at("qber").get<double>();
        rec.skr = obj.at("skr").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(line, std::string("bad field type: ") + e.what());
    }
    validate_record(rec, line);
    return rec;
}

SampleRecord parse_csv_line(const std::string& text, std::size_t line) {
    std::stringstream ss(text);
    std::string ts_field, qber_field, skr_field, extra;
    if (!std::getline(ss, ts_field, ',') || !std::getline(ss, qber_field, ',') ||
        !std::getline(ss, skr_field, ',')) {
        throw ParseError(line, "expected 3 comma-separated fields");
    }
    if (std::getline(ss, extra, ',')) {
        throw ParseError(line, "unexpected extra field");
    }
    SampleRecord rec;
    try {
        rec.ts_ms = std::stoll(ts_field);
        rec.qber = std::stod(qber_field);
        rec.skr = std::stod(skr_field);
    } catch (const std::exception&) {
        throw ParseError(line, "unparsable numeric field");
    }
    validate_record(rec, line);
    return rec;
}

double median_sorted(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    if (n % 2 == 1) {
        return v[n / 2];
    }
    return 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

std::vector<SampleRecord> read_log(const std::string& path, LogFormat format) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open log file: " + path);
    }
    std::vector<SampleRecord> records;
    std::string text;
    std::size_t line = 0;
    bool header_seen = false;
    while (std::getline(in, text)) {
        ++line;
        if (!text.empty() && text.back() == '\r') {
            text.pop_back();
        }
        if (text.empty()) {
            continue;
        }
        if (format == LogFormat::Csv && !header_seen) {
            if (text != "timestamp,qber,skr") {
                throw ParseError(line, "expected CSV header `timestamp,qber,skr`");
            }
            header_seen = true;
            continue;
        }
        SampleRecord rec = format == LogFormat::Jsonl ? parse_jsonl_line(text, line)
                                                      : parse_csv_line(text, line);
        if (!records.empty() && rec.ts_ms <= records.back().ts_ms) {
            throw ParseError(line, "timestamps not strictly increasing");
        }
        records.push_back(rec);
    }
    return records;
}

void write_log(const std::vector<SampleRecord>& records, const std::string& path,
               LogFormat format) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot open output file: " + path);
    }
    if (format == LogFormat::Csv) {
        out << "timestamp,qber,skr\n";
    }
    for (const SampleRecord& rec : records) {
        if (format == LogFormat::Jsonl) {
            nlohmann::json obj;
            obj["ts"] = rec.ts_ms;
            obj["qber"] = rec.qber;
            obj["skr"] = rec.skr;
            out << obj.dump() << '\n';
        } else {
            nlohmann::json q = rec.qber, s = rec.skr;  // shortest round-trip formatting
            out << rec.ts_ms << ',' << q.dump() << ',' << s.dump() << '\n';
        }
    }
}

ScalerParams fit_scaler(const Window& reference) {
    if (reference.samples.empty()) {
        throw std::invalid_argument("fit_scaler: empty reference window");
    }
    std::vector<double> qbers, skrs;
    qbers.reserve(reference.samples.size());
    skrs.reserve(reference.samples.size());
    for (const SampleRecord& rec : reference.samples) {
        qbers.push_back(rec.qber);
        skrs.push_back(rec.skr);
    }
    ScalerParams params;
    params.qber_min = *std::min_element(qbers.begin(), qbers.end());
    params.qber_max = *std::max_element(qbers.begin(), qbers.end());
    params.skr_min = *std::min_element(skrs.begin(), skrs.end());
    params.skr_max = *std::max_element(skrs.begin(), skrs.end());
    params.reference_median_qber = median_sorted(qbers);
    params.reference_median_skr = median_sorted(skrs);
    return params;
}

NormalizedSample transform(const ScalerParams& params, const SampleRecord& sample) {
    const auto scale = [](double x, double lo, double hi) {
        return hi > lo ? (x - lo) / (hi - lo) : 0.5;
    };
    return NormalizedSample{scale(sample.qber, params.qber_min, params.qber_max),
                            scale(sample.skr, params.skr_min, params.skr_max)};
}

void to_json(nlohmann::json& j, const ScalerParams& p) {
    j = nlohmann::json{{"qber_min", p.qber_min},
                       {"qber_max", p.qber_max},
                       {"skr_min", p.skr_min},
                       {"skr_max", p.skr_max},
                       {"reference_median_qber", p.reference_median_qber},
                       {"reference_median_skr", p.reference_median_skr}};
}

void from_json(const nlohmann::json& j, ScalerParams& p) {
    j.at("qber_min").get_to(p.qber_min);
    j.at("qber_max").get_to(p.qber_max);
    j.at("skr_min").get_to(p.skr_min);
    j.at("skr_max").get_to(p.skr_max);
    j.at("reference_median_qber").get_to(p.reference_median_qber);
    j.at("reference_median_skr").get_to(p.reference_median_skr);
}

}  // namespace qkdsent::telemetry
