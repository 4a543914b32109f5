#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "qkdsent/telemetry.hpp"

namespace qkdsent::linksim {

// Physical-layer constants of the emulated link. The click model is a simple
// signal-vs-background split: per gate, a signal photon survives the total
// attenuation with probability p_sig and background events (dark counts,
// Raman scattering from classical channels, residual ASE when an EDFA is in
// line) arrive with probability p_bg.
struct LinkParams {
    double pulse_rate = 1e9;            // Hz
    double mu = 0.4;                    // mean photon number per pulse
    double base_attenuation_db = -14.0; // fixed line budget, dB (<= 0)
    double detector_efficiency = 0.2;
    double dark_count_prob = 1e-6;      // per gate
    double intrinsic_error = 0.01;      // optical misalignment error fraction
    double raman_coeff = 0.006;         // background prob per mW of classical launch power
    double edfa_raman_factor = 0.25;    // scaling of raman_coeff when the EDFA filter is in line
    double ase_floor = 1e-4;            // background prob added when EDFA present
    double sift_factor = 0.5;
    double ec_efficiency = 1.16;        // error-correction inefficiency (>= 1)
    double block_seconds = 1.0;         // key block length; <= 0 disables sampling jitter
    double detection_jitter = 0.01;     // multiplicative SKR noise std; 0 disables
};

// One labeled acquisition scenario. Classes 1-2 sweep a ladder of laser
// powers within a single run: power_cycle holds one power set per dwell
// segment and overrides laser_powers_dbm when non-empty.
struct ScenarioConfig {
    int class_id = 0;
    std::vector<double> laser_powers_dbm;
    std::vector<std::vector<double>> power_cycle;
    std::optional<int> edfa_current_ma;
    double excess_attenuation_db = 0.0;  // <= 0
    std::size_t duration_points = 1000;
    std::uint64_t seed = 0;
    double ar_phi = 0.7;    // AR(1) coefficient of the relative QBER noise
    double ar_sigma = 0.03; // innovation std of the AR(1) noise
};

struct SteadyState {
    double qber_mean = 0.0;
    double skr_mean = 0.0;  // bits/s
    double p_signal = 0.0;
    double p_background = 0.0;
    double sifted_rate = 0.0;  // bits/s entering error correction
};

inline constexpr int kClassCount = 9;

const std::array<std::string, kClassCount>& class_names();

// H2(x) = -x log2 x - (1-x) log2 (1-x), with H2(0) = H2(1) = 0.
// Throws std::domain_error outside [0,1].
double binary_entropy(double x);

// Mean operating point for a fixed set of active laser powers.
SteadyState steady_state_for_powers(const LinkParams& link, const ScenarioConfig& scenario,
                                    const std::vector<double>& powers_dbm);

// Mean operating point using scenario.laser_powers_dbm.
SteadyState steady_state(const LinkParams& link, const ScenarioConfig& scenario);

// Generates duration_points samples at 1 s cadence, deterministic in the
// scenario seed. QBER carries multiplicative AR(1) noise plus finite-block
// sampling jitter; SKR is recomputed from each noisy QBER via the secret
// fraction with multiplicative detection jitter, floored at 0.
std::vector<telemetry::SampleRecord> simulate(const LinkParams& link,
                                              const ScenarioConfig& scenario);

// Published acquisition settings for classes 0-8. Duration and seed are
// defaulted; callers override them as needed.
ScenarioConfig preset(int class_id);

void validate(const LinkParams& link);
void validate(const ScenarioConfig& scenario);

void to_json(nlohmann::json& j, const LinkParams& p);
void from_json(const nlohmann::json& j, LinkParams& p);
void to_json(nlohmann::json& j, const ScenarioConfig& s);
void from_json(const nlohmann::json& j, ScenarioConfig& s);

}  // namespace qkdsent::linksim
