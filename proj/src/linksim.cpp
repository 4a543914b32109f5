#include "qkdsent/linksim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "qkdsent/rng.hpp"

namespace qkdsent::linksim {

const std::array<std::string, kClassCount>& class_names() {
    static const std::array<std::string, kClassCount> names = {
        "normal",
        "1_laser",
        "2_lasers",
        "4_lasers_edfa_18mA",
        "4_lasers_edfa_21mA",
        "4_lasers_edfa_24mA",
        "photon_loss_20pct",
        "photon_loss_46pct",
        "photon_loss_67pct",
    };
    return names;
}

double binary_entropy(double x) {
    if (!(x >= 0.0 && x <= 1.0)) {
        throw std::domain_error("binary_entropy: argument outside [0,1]");
    }
    if (x == 0.0 || x == 1.0) {
        return 0.0;
    }
    return -x * std::log2(x) - (1.0 - x) * std::log2(1.0 - x);
}

void validate(const LinkParams& link) {
    const auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
    if (link.mu <= 0.0) throw std::invalid_argument("link: mu must be > 0");
    if (link.base_attenuation_db > 0.0)
        throw std::invalid_argument("link: base_attenuation_db must be <= 0");
    if (!prob(link.detector_efficiency) || !prob(link.dark_count_prob) ||
        !prob(link.intrinsic_error) || !prob(link.ase_floor) || !prob(link.sift_factor)) {
        throw std::invalid_argument("link: probability field outside [0,1]");
    }
    if (link.ec_efficiency < 1.0) throw std::invalid_argument("link: ec_efficiency must be >= 1");
    if (link.pulse_rate <= 0.0) throw std::invalid_argument("link: pulse_rate must be > 0");
    if (link.raman_coeff < 0.0 || link.edfa_raman_factor < 0.0 || link.detection_jitter < 0.0)
        throw std::invalid_argument("link: negative noise coefficient");
}

void validate(const ScenarioConfig& scenario) {
    if (scenario.class_id < 0 || scenario.class_id >= kClassCount) {
        throw std::invalid_argument("scenario: class_id must be in 0..8");
    }
    if (scenario.excess_attenuation_db > 0.0) {
        throw std::invalid_argument("scenario: excess_attenuation_db must be <= 0");
    }
    if (!(scenario.ar_phi > -1.0 && scenario.ar_phi < 1.0)) {
        throw std::invalid_argument("scenario: ar_phi must be in (-1,1)");
    }
    if (scenario.ar_sigma < 0.0) {
        throw std::invalid_argument("scenario: ar_sigma must be >= 0");
    }
    if (scenario.class_id >= 6) {
        if (!scenario.laser_powers_dbm.empty() || !scenario.power_cycle.empty() ||
            scenario.excess_attenuation_db >= 0.0) {
            throw std::invalid_argument(
                "scenario: photon-loss classes carry no lasers and need excess attenuation < 0");
        }
    }
    if (!scenario.power_cycle.empty() && !scenario.laser_powers_dbm.empty()) {
        throw std::invalid_argument("scenario: power_cycle and laser_powers_dbm are exclusive");
    }
}

namespace {

double dbm_to_mw(double dbm) { return std::pow(10.0, dbm / 10.0); }

double secret_fraction(const LinkParams& link, double qber) {
    const double h = binary_entropy(qber);
    return std::max(0.0, 1.0 - link.ec_efficiency * h - h);
}

}  // namespace

SteadyState steady_state_for_powers(const LinkParams& link, const ScenarioConfig& scenario,
                                    const std::vector<double>& powers_dbm) {
    validate(link);
    validate(scenario);

    const double total_db = link.base_attenuation_db + scenario.excess_attenuation_db;
    const double p_sig = link.mu * std::pow(10.0, total_db / 10.0) * link.detector_efficiency;

    double launch_mw = 0.0;
    for (double dbm : powers_dbm) {
        launch_mw += dbm_to_mw(dbm);
    }
    const bool edfa = scenario.edfa_current_ma.has_value();
    const double raman = link.raman_coeff * (edfa ? link.edfa_raman_factor : 1.0);
    const double p_bg = link.dark_count_prob + raman * launch_mw + (edfa ? link.ase_floor : 0.0);

    if (p_sig + p_bg <= 0.0) {
        throw std::runtime_error("steady_state: degenerate link, no detection events");
    }

    SteadyState st;
    st.p_signal = p_sig;
    st.p_background = p_bg;
    st.qber_mean = (link.intrinsic_error * p_sig + 0.5 * p_bg) / (p_sig + p_bg);
    st.sifted_rate = link.pulse_rate * (p_sig + p_bg) * link.sift_factor;
    st.skr_mean = st.sifted_rate * secret_fraction(link, st.qber_mean);
    return st;
}

SteadyState steady_state(const LinkParams& link, const ScenarioConfig& scenario) {
    return steady_state_for_powers(link, scenario, scenario.laser_powers_dbm);
}

std::vector<telemetry::SampleRecord> simulate(const LinkParams& link,
                                              const ScenarioConfig& scenario) {
    validate(link);
    validate(scenario);
    if (scenario.duration_points == 0) {
        throw std::invalid_argument("simulate: duration_points must be >= 1");
    }

    // One steady state per dwell segment; a single segment when no cycle.
    std::vector<SteadyState> stages;
    if (scenario.power_cycle.empty()) {
        stages.push_back(steady_state(link, scenario));
    } else {
        stages.reserve(scenario.power_cycle.size());
        for (const auto& powers : scenario.power_cycle) {
            stages.push_back(steady_state_for_powers(link, scenario, powers));
        }
    }
    const std::size_t n = scenario.duration_points;
    const std::size_t dwell = (n + stages.size() - 1) / stages.size();

    Rng rng(scenario.seed);
    std::vector<telemetry::SampleRecord> records;
    records.reserve(n);

    double ar_state = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
        const SteadyState& st = stages[std::min(t / dwell, stages.size() - 1)];

        // Draw order is fixed: AR innovation, block jitter, detection jitter.
        ar_state = scenario.ar_phi * ar_state + rng.normal(0.0, scenario.ar_sigma);
        double block_noise = 0.0;
        if (link.block_seconds > 0.0 && std::isfinite(link.block_seconds)) {
            const double n_block = st.sifted_rate * link.block_seconds;
            if (n_block > 0.0) {
                const double sd = std::sqrt(st.qber_mean * (1.0 - st.qber_mean) / n_block);
                block_noise = rng.normal(0.0, sd);
            }
        }
        const double qber =
            std::clamp(st.qber_mean * (1.0 + ar_state) + block_noise, 0.0, 1.0);

        double skr = st.sifted_rate * secret_fraction(link, qber);
        if (link.detection_jitter > 0.0) {
            skr *= 1.0 + rng.normal(0.0, link.detection_jitter);
        }
        skr = std::max(0.0, skr);

        records.push_back(telemetry::SampleRecord{static_cast<std::int64_t>(t) * 1000, qber, skr});
    }
    return records;
}

void to_json(nlohmann::json& j, const LinkParams& p) {
    j = nlohmann::json{{"pulse_rate", p.pulse_rate},
                       {"mu", p.mu},
                       {"base_attenuation_db", p.base_attenuation_db},
                       {"detector_efficiency", p.detector_efficiency},
                       {"dark_count_prob", p.dark_count_prob},
                       {"intrinsic_error", p.intrinsic_error},
                       {"raman_coeff", p.raman_coeff},
                       {"edfa_raman_factor", p.edfa_raman_factor},
                       {"ase_floor", p.ase_floor},
                       {"sift_factor", p.sift_factor},
                       {"ec_efficiency", p.ec_efficiency},
                       {"block_seconds", p.block_seconds},
                       {"detection_jitter", p.detection_jitter}};
}

void from_json(const nlohmann::json& j, LinkParams& p) {
    j.at("pulse_rate").get_to(p.pulse_rate);
    j.at("mu").get_to(p.mu);
    j.at("base_attenuation_db").get_to(p.base_attenuation_db);
    j.at("detector_efficiency").get_to(p.detector_efficiency);
    j.at("dark_count_prob").get_to(p.dark_count_prob);
    j.at("intrinsic_error").get_to(p.intrinsic_error);
    j.at("raman_coeff").get_to(p.raman_coeff);
    j.at("edfa_raman_factor").get_to(p.edfa_raman_factor);
    j.at("ase_floor").get_to(p.ase_floor);
    j.at("sift_factor").get_to(p.sift_factor);
    j.at("ec_efficiency").get_to(p.ec_efficiency);
    j.at("block_seconds").get_to(p.block_seconds);
    j.at("detection_jitter").get_to(p.detection_jitter);
}

void to_json(nlohmann::json& j, const ScenarioConfig& s) {
    j = nlohmann::json{{"class_id", s.class_id},
                       {"laser_powers_dbm", s.laser_powers_dbm},
                       {"power_cycle", s.power_cycle},
                       {"excess_attenuation_db", s.excess_attenuation_db},
                       {"duration_points", s.duration_points},
                       {"seed", s.seed},
                       {"ar_phi", s.ar_phi},
                       {"ar_sigma", s.ar_sigma}};
    if (s.edfa_current_ma) {
        j["edfa_current_ma"] = *s.edfa_current_ma;
    } else {
        j["edfa_current_ma"] = nullptr;
    }
}

void from_json(const nlohmann::json& j, ScenarioConfig& s) {
    j.at("class_id").get_to(s.class_id);
    j.at("laser_powers_dbm").get_to(s.laser_powers_dbm);
    j.at("power_cycle").get_to(s.power_cycle);
    j.at("excess_attenuation_db").get_to(s.excess_attenuation_db);
    j.at("duration_points").get_to(s.duration_points);
    j.at("seed").get_to(s.seed);
    j.at("ar_phi").get_to(s.ar_phi);
    j.at("ar_sigma").get_to(s.ar_sigma);
    if (j.contains("edfa_current_ma") && !j.at("edfa_current_ma").is_null()) {
        s.edfa_current_ma = j.at("edfa_current_ma").get<int>();
    } else {
        s.edfa_current_ma.reset();
    }
}

ScenarioConfig preset(int class_id) {
    if (class_id < 0 || class_id >= kClassCount) {
        throw std::invalid_argument("preset: class_id must be in 0..8");
    }
    ScenarioConfig sc;
    sc.class_id = class_id;
    sc.seed = static_cast<std::uint64_t>(class_id);

    // Laser power ladders as measured by the OSA in the reference experiment.
    static const std::vector<double> ladder1 = {-23.5, -21.7, -20.5, -19.55, -18.84, -18.37, -18.1};
    static const std::vector<double> ladder2 = {-21.6, -20.2, -19.4, -19.0, -18.8, -18.9, -19.2};

    switch (class_id) {
        case 0:
            break;
        case 1:
            for (double p : ladder1) {
                sc.power_cycle.push_back({p});
            }
            break;
        case 2:
            for (std::size_t i = 0; i < ladder1.size(); ++i) {
                sc.power_cycle.push_back({ladder1[i], ladder2[i]});
            }
            break;
        case 3:
            sc.laser_powers_dbm = {-17.9, -16.9, -15.6, -15.6};
            sc.edfa_current_ma = 18;
            break;
        case 4:
            sc.laser_powers_dbm = {-16.5, -15.7, -14.6, -14.3};
            sc.edfa_current_ma = 21;
            break;
        case 5:
            sc.laser_powers_dbm = {-15.5, -14.5, -13.4, -13.1};
            sc.edfa_current_ma = 24;
            break;
        case 6:
            sc.excess_attenuation_db = -0.9;
            break;
        case 7:
            sc.excess_attenuation_db = -1.9;
            break;
        case 8:
            sc.excess_attenuation_db = -3.1;
            break;
        default:
            break;
    }
    return sc;
}

}  // namespace qkdsent::linksim
