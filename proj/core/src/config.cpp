#include "qlink/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <stdexcept>

#include "qlink/errors.hpp"

namespace qlink {

const char* to_string(ReadoutBasis b) { return b == ReadoutBasis::z ? "z" : "x"; }
const char* to_string(DecayShape s) { return s == DecayShape::gaussian ? "gaussian" : "exponential"; }

void SequenceParams::validate() const {
    auto positive = [](double v, const char* field) {
        if (!(std::isfinite(v) && v > 0.0)) throw ValidationError(std::string("sequence.") + field, "must be positive");
    };
    positive(cooling_ms, "cooling_ms");
    positive(experiment_phase_ms, "experiment_phase_ms");
    positive(pump_us, "pump_us");
    positive(write_ns, "write_ns");
    positive(window_ns, "window_ns");
    positive(read_ns, "read_ns");
    if (rounds < 1) throw ValidationError("sequence.rounds", "must be at least 1");
    if (max_cycles_per_round < 1) throw ValidationError("sequence.max_cycles_per_round", "must be at least 1");
    if (!(init_pump_us >= 0.0)) throw ValidationError("sequence.init_pump_us", "must be non-negative");
    if (!(inter_round_us >= 0.0)) throw ValidationError("sequence.inter_round_us", "must be non-negative");
    if (!(aux_dead_fraction >= 0.0 && aux_dead_fraction < 1.0)) {
        throw ValidationError("sequence.aux_dead_fraction", "must be in [0, 1)");
    }
}

void RunParams::validate() const {
    if (!(std::isfinite(duration_s) && duration_s >= 0.0)) throw ValidationError("run.duration_s", "must be non-negative");
    if (bases.empty()) throw ValidationError("run.bases", "at least one basis required");
    if (std::set<ReadoutBasis>(bases.begin(), bases.end()).size() != bases.size()) {
        throw ValidationError("run.bases", "duplicate basis");
    }
    const bool has_z = std::find(bases.begin(), bases.end(), ReadoutBasis::z) != bases.end();
    if (has_z && z_hwp_deg.empty()) throw ValidationError("run.z_hwp_deg", "z basis needs at least one setting");
    for (double a : z_hwp_deg) {
        if (!std::isfinite(a)) throw ValidationError("run.z_hwp_deg", "angles must be finite");
    }
    if (!std::isfinite(z_qwp_deg)) throw ValidationError("run.z_qwp_deg", "must be finite");
    if (!std::isfinite(x_hwp_deg)) throw ValidationError("run.x_hwp_deg", "must be finite");
    if (x_delay_steps < 1) throw ValidationError("run.x_delay_steps", "must be at least 1");
}

void LinkConfig::validate() const {
    node.validate();
    qfc.validate();
    sagnac.validate();
    filter.validate();
    fiber.validate();
    snspd.validate();
    apd.validate();
    if (snspd.kind != DetectorKind::snspd || apd.kind != DetectorKind::apd) {
        throw ValidationError("detectors", "detector kinds do not match their sections");
    }
    herald_pulse.validate();
    try {
        readout_pulse.validate();
    } catch (const ValidationError& e) {
        std::string f = e.field();
        f.replace(0, std::string("detectors.pulse").size(), "detectors.readout_pulse");
        throw ValidationError(f, "invalid read-out pulse shape");
    }
    if (!(herald_pulse.window_end_ns() < herald().window_ns)) {
        throw ValidationError("detectors.pulse.window_sigmas", "signal window leaves no background region in the record");
    }
    if (!(lock.kp >= 0.0 && lock.ki >= 0.0)) throw ValidationError("qfc.lock", "gains must be non-negative");
    sequence.validate();
    snr_model.validate();
    run.validate();
}

std::vector<MeasurementSetting> measurement_settings(const LinkConfig& cfg) {
    constexpr double deg = std::numbers::pi / 180.0;
    std::vector<MeasurementSetting> out;
    for (ReadoutBasis b : cfg.run.bases) {
        if (b == ReadoutBasis::z) {
            for (double hwp : cfg.run.z_hwp_deg) {
                MeasurementSetting s;
                s.basis = b;
                s.analyzer.use_qwp = true;
                s.analyzer.qwp_angle = cfg.run.z_qwp_deg * deg;
                s.analyzer.hwp_angle = hwp * deg;
                s.value = hwp;
                out.push_back(s);
            }
        } else {
            const double period = larmor_period_us(cfg.node);
            for (int k = 0; k < cfg.run.x_delay_steps; ++k) {
                MeasurementSetting s;
                s.basis = b;
                s.analyzer.hwp_angle = cfg.run.x_hwp_deg * deg;
                s.extra_delay_us = std::isfinite(period) ? period * k / cfg.run.x_delay_steps : 0.0;
                s.value = s.extra_delay_us;
                out.push_back(s);
            }
        }
    }
    return out;
}

namespace {

std::string trim(std::string_view s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string_view::npos) return {};
    const auto b = s.find_last_not_of(" \t\r");
    return std::string(s.substr(a, b - a + 1));
}

double parse_double(const std::string& v) {
    double out = 0.0;
    const char* end = v.data() + v.size();
    auto [p, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc() || p != end) throw std::invalid_argument("expected a number, got '" + v + "'");
    return out;
}

long long parse_int(const std::string& v) {
    long long out = 0;
    const char* end = v.data() + v.size();
    auto [p, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc() || p != end) throw std::invalid_argument("expected an integer, got '" + v + "'");
    return out;
}

std::uint64_t parse_u64(const std::string& v) {
    std::uint64_t out = 0;
    const char* end = v.data() + v.size();
    auto [p, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc() || p != end) throw std::invalid_argument("expected a non-negative integer, got '" + v + "'");
    return out;
}

bool parse_bool(const std::string& v) {
    if (v == "true") return true;
    if (v == "false") return false;
    throw std::invalid_argument("expected true or false, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    if (trim(v).empty()) return out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(trim(item));
    return out;
}

std::string fmt(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

struct Field {
    std::string key;
    std::function<void(LinkConfig&, const std::string&)> set;
    std::function<std::string(const LinkConfig&)> get;
};

template <class S>
void add_double(std::vector<Field>& f, const std::string& key, S LinkConfig::*sec, double S::*m) {
    f.push_back({key, [sec, m](LinkConfig& c, const std::string& v) { (c.*sec).*m = parse_double(v); },
                 [sec, m](const LinkConfig& c) { return fmt((c.*sec).*m); }});
}

template <class S>
void add_int(std::vector<Field>& f, const std::string& key, S LinkConfig::*sec, int S::*m) {
    f.push_back({key,
                 [sec, m](LinkConfig& c, const std::string& v) {
                     const long long x = parse_int(v);
                     if (x < -1000000000LL || x > 1000000000LL) throw std::invalid_argument("integer out of range");
                     (c.*sec).*m = static_cast<int>(x);
                 },
                 [sec, m](const LinkConfig& c) { return std::to_string((c.*sec).*m); }});
}

template <class S>
void add_bool(std::vector<Field>& f, const std::string& key, S LinkConfig::*sec, bool S::*m) {
    f.push_back({key, [sec, m](LinkConfig& c, const std::string& v) { (c.*sec).*m = parse_bool(v); },
                 [sec, m](const LinkConfig& c) { return std::string((c.*sec).*m ? "true" : "false"); }});
}

const std::vector<Field>& fields() {
    static const std::vector<Field> all = [] {
        std::vector<Field> f;
        f.push_back({"seed", [](LinkConfig& c, const std::string& v) { c.seed = parse_u64(v); },
                     [](const LinkConfig& c) { return std::to_string(c.seed); }});

        using N = NodeParams;
        const auto node = &LinkConfig::node;
        add_double(f, "node.p_exc", node, &N::p_exc);
        add_double(f, "node.eta0", node, &N::eta0);
        add_double(f, "node.tau_mem_us", node, &N::tau_mem_us);
        f.push_back({"node.decay_shape",
                     [](LinkConfig& c, const std::string& v) {
                         if (v == "gaussian") {
                             c.node.decay_shape = DecayShape::gaussian;
                         } else if (v == "exponential") {
                             c.node.decay_shape = DecayShape::exponential;
                         } else {
                             throw std::invalid_argument("expected gaussian or exponential, got '" + v + "'");
                         }
                     },
                     [](const LinkConfig& c) { return std::string(to_string(c.node.decay_shape)); }});
        add_double(f, "node.b_guide_mg", node, &N::b_guide_mg);
        add_double(f, "node.gf_rate_mhz_per_g", node, &N::gf_rate_mhz_per_g);
        add_double(f, "node.raman_error_rad", node, &N::raman_error_rad);
        add_double(f, "node.phase_jitter_sigma_rad", node, &N::phase_jitter_sigma_rad);
        add_double(f, "node.eta_down", node, &N::eta_down);
        add_double(f, "node.eta_up", node, &N::eta_up);
        add_double(f, "node.coherence_tau_us", node, &N::coherence_tau_us);
        add_double(f, "node.pump_init_eff", node, &N::pump_init_eff);
        add_double(f, "node.readout_snr_factor", node, &N::readout_snr_factor);
        add_double(f, "node.multi_excitation_coeff", node, &N::multi_excitation_coeff);
        add_double(f, "node.readout_path_eff", node, &N::readout_path_eff);
        add_double(f, "node.ripple_amplitude", node, &N::ripple_amplitude);
        add_double(f, "node.ripple_period_us", node, &N::ripple_period_us);
        add_double(f, "node.od_decay_fraction", node, &N::od_decay_fraction);
        add_double(f, "node.od_decay_window_us", node, &N::od_decay_window_us);

        using Q = QfcParams;
        const auto qfc = &LinkConfig::qfc;
        add_bool(f, "qfc.enabled", qfc, &Q::enabled);
        add_double(f, "qfc.eta_max_h", qfc, &Q::eta_max_h);
        add_double(f, "qfc.eta_max_v", qfc, &Q::eta_max_v);
        add_double(f, "qfc.p_peak_w", qfc, &Q::p_peak_w);
        add_double(f, "qfc.pump_power_w", qfc, &Q::pump_power_w);
        add_double(f, "qfc.crystal_length_mm", qfc, &Q::crystal_length_mm);
        add_double(f, "qfc.noise_rate_cps", qfc, &Q::noise_rate_cps);
        add_double(f, "qfc.internal_eff", qfc, &Q::internal_eff);
        add_double(f, "qfc.coupling_eff", qfc, &Q::coupling_eff);
        add_double(f, "qfc.optics_eff", qfc, &Q::optics_eff);

        using G = SagnacGeometry;
        const auto sag = &LinkConfig::sagnac;
        add_double(f, "qfc.sagnac.l1_m", sag, &G::l1_m);
        add_double(f, "qfc.sagnac.l2_m", sag, &G::l2_m);
        add_double(f, "qfc.sagnac.s1_m", sag, &G::s1_m);
        add_double(f, "qfc.sagnac.s2_m", sag, &G::s2_m);
        add_double(f, "qfc.sagnac.k_s", sag, &G::k_s);
        add_double(f, "qfc.sagnac.k_c", sag, &G::k_c);
        add_double(f, "qfc.sagnac.k_p", sag, &G::k_p);
        add_double(f, "qfc.sagnac.disp_h", sag, &G::disp_h);
        add_double(f, "qfc.sagnac.disp_v", sag, &G::disp_v);
        add_double(f, "qfc.sagnac.disp_m2", sag, &G::disp_m2);
        add_double(f, "qfc.sagnac.disp_m3", sag, &G::disp_m3);
        add_double(f, "qfc.sagnac.pump_leak_w", sag, &G::pump_leak_w);

        add_double(f, "qfc.lock.kp", &LinkConfig::lock, &LockGains::kp);
        add_double(f, "qfc.lock.ki", &LinkConfig::lock, &LockGains::ki);

        using F = FilterParams;
        const auto filt = &LinkConfig::filter;
        add_bool(f, "filter.enabled", filt, &F::enabled);
        add_double(f, "filter.flange_fpc_eff", filt, &F::flange_fpc_eff);
        add_double(f, "filter.etalon_eff", filt, &F::etalon_eff);
        add_double(f, "filter.vbg_eff", filt, &F::vbg_eff);
        add_double(f, "filter.bpf_coupling_eff", filt, &F::bpf_coupling_eff);
        add_double(f, "filter.analyzer_eff", filt, &F::analyzer_eff);
        add_double(f, "filter.etalon_fwhm_mhz", filt, &F::etalon_fwhm_mhz);
        add_double(f, "filter.etalon_fsr_ghz", filt, &F::etalon_fsr_ghz);
        add_double(f, "filter.vbg_fwhm_ghz", filt, &F::vbg_fwhm_ghz);

        using Fb = FiberParams;
        const auto fib = &LinkConfig::fiber;
        add_double(f, "fiber.length_km", fib, &Fb::length_km);
        add_double(f, "fiber.atten_db_per_km", fib, &Fb::atten_db_per_km);
        add_double(f, "fiber.delay_us_per_km", fib, &Fb::delay_us_per_km);
        add_double(f, "fiber.delay_offset_us", fib, &Fb::delay_offset_us);
        add_double(f, "fiber.drift_step_sigma_rad", fib, &Fb::drift_step_sigma_rad);
        add_double(f, "fiber.drift_interval_s", fib, &Fb::drift_interval_s);
        add_double(f, "fiber.compensation_period_s", fib, &Fb::compensation_period_s);
        add_double(f, "fiber.compensation_dead_s", fib, &Fb::compensation_dead_s);
        add_double(f, "fiber.reference_toggle_hz", fib, &Fb::reference_toggle_hz);

        f.push_back({"detectors.herald",
                     [](LinkConfig& c, const std::string& v) {
                         if (v == "snspd") {
                             c.herald_detector = DetectorKind::snspd;
                         } else if (v == "apd") {
                             c.herald_detector = DetectorKind::apd;
                         } else {
                             throw std::invalid_argument("expected snspd or apd, got '" + v + "'");
                         }
                     },
                     [](const LinkConfig& c) { return std::string(to_string(c.herald_detector)); }});
        using D = DetectorParams;
        add_double(f, "detectors.snspd.efficiency", &LinkConfig::snspd, &D::efficiency);
        add_double(f, "detectors.snspd.dark_rate_cps", &LinkConfig::snspd, &D::dark_rate_cps);
        add_double(f, "detectors.snspd.window_ns", &LinkConfig::snspd, &D::window_ns);
        add_double(f, "detectors.apd.efficiency", &LinkConfig::apd, &D::efficiency);
        add_double(f, "detectors.apd.dark_rate_cps", &LinkConfig::apd, &D::dark_rate_cps);
        add_double(f, "detectors.apd.window_ns", &LinkConfig::apd, &D::window_ns);
        using P = PulseShape;
        add_double(f, "detectors.pulse.peak_ns", &LinkConfig::herald_pulse, &P::peak_ns);
        add_double(f, "detectors.pulse.rise_sigma_ns", &LinkConfig::herald_pulse, &P::rise_sigma_ns);
        add_double(f, "detectors.pulse.fall_sigma_ns", &LinkConfig::herald_pulse, &P::fall_sigma_ns);
        add_double(f, "detectors.pulse.window_sigmas", &LinkConfig::herald_pulse, &P::window_sigmas);
        add_double(f, "detectors.readout_pulse.peak_ns", &LinkConfig::readout_pulse, &P::peak_ns);
        add_double(f, "detectors.readout_pulse.rise_sigma_ns", &LinkConfig::readout_pulse, &P::rise_sigma_ns);
        add_double(f, "detectors.readout_pulse.fall_sigma_ns", &LinkConfig::readout_pulse, &P::fall_sigma_ns);
        add_double(f, "detectors.readout_pulse.window_sigmas", &LinkConfig::readout_pulse, &P::window_sigmas);

        using S = SequenceParams;
        const auto seq = &LinkConfig::sequence;
        add_double(f, "sequence.cooling_ms", seq, &S::cooling_ms);
        add_double(f, "sequence.experiment_phase_ms", seq, &S::experiment_phase_ms);
        add_int(f, "sequence.rounds", seq, &S::rounds);
        add_int(f, "sequence.max_cycles_per_round", seq, &S::max_cycles_per_round);
        add_double(f, "sequence.pump_us", seq, &S::pump_us);
        add_double(f, "sequence.write_ns", seq, &S::write_ns);
        add_double(f, "sequence.window_ns", seq, &S::window_ns);
        add_double(f, "sequence.read_ns", seq, &S::read_ns);
        add_double(f, "sequence.init_pump_us", seq, &S::init_pump_us);
        add_double(f, "sequence.inter_round_us", seq, &S::inter_round_us);
        add_double(f, "sequence.aux_dead_fraction", seq, &S::aux_dead_fraction);

        using M = SnrModelParams;
        const auto snr = &LinkConfig::snr_model;
        add_double(f, "snr_model.r_exc", snr, &M::r_exc);
        add_double(f, "snr_model.r_noise", snr, &M::r_noise);
        add_double(f, "snr_model.r_dark", snr, &M::r_dark);
        add_double(f, "snr_model.atten_db_per_km", snr, &M::atten_db_per_km);

        using R = RunParams;
        const auto run = &LinkConfig::run;
        f.push_back({"run.trials", [](LinkConfig& c, const std::string& v) { c.run.trials = parse_u64(v); },
                     [](const LinkConfig& c) { return std::to_string(c.run.trials); }});
        add_double(f, "run.duration_s", run, &R::duration_s);
        f.push_back({"run.bases",
                     [](LinkConfig& c, const std::string& v) {
                         c.run.bases.clear();
                         for (const auto& b : split_list(v)) {
                             if (b == "z") {
                                 c.run.bases.push_back(ReadoutBasis::z);
                             } else if (b == "x") {
                                 c.run.bases.push_back(ReadoutBasis::x);
                             } else {
                                 throw std::invalid_argument("expected z or x, got '" + b + "'");
                             }
                         }
                     },
                     [](const LinkConfig& c) {
                         std::string s;
                         for (std::size_t i = 0; i < c.run.bases.size(); ++i) {
                             s += (i ? ", " : "") + std::string(to_string(c.run.bases[i]));
                         }
                         return s;
                     }});
        f.push_back({"run.z_hwp_deg",
                     [](LinkConfig& c, const std::string& v) {
                         c.run.z_hwp_deg.clear();
                         for (const auto& x : split_list(v)) c.run.z_hwp_deg.push_back(parse_double(x));
                     },
                     [](const LinkConfig& c) {
                         std::string s;
                         for (std::size_t i = 0; i < c.run.z_hwp_deg.size(); ++i) {
                             s += (i ? ", " : "") + fmt(c.run.z_hwp_deg[i]);
                         }
                         return s;
                     }});
        add_double(f, "run.z_qwp_deg", run, &R::z_qwp_deg);
        add_int(f, "run.x_delay_steps", run, &R::x_delay_steps);
        add_double(f, "run.x_hwp_deg", run, &R::x_hwp_deg);
        add_bool(f, "run.record_all_trials", run, &R::record_all_trials);
        return f;
    }();
    return all;
}

const Field* find_field(const std::string& key) {
    for (const auto& f : fields()) {
        if (f.key == key) return &f;
    }
    return nullptr;
}

bool known_section(const std::string& name) {
    const std::string prefix = name + ".";
    for (const auto& f : fields()) {
        if (f.key.compare(0, prefix.size(), prefix) == 0 &&
            f.key.find('.', prefix.size()) == std::string::npos) {
            return true;
        }
    }
    return false;
}

bool valid_name(const std::string& s) {
    if (s.empty()) return false;
    return std::all_of(s.begin(), s.end(), [](char c) {
        return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' || c == '.';
    });
}

}  // namespace

LinkConfig parse_config(std::string_view text, const std::string& source) {
    LinkConfig cfg;
    std::string section;
    std::set<std::string> seen;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        std::string_view raw = text.substr(pos, nl - pos);
        pos = nl + 1;
        ++line_no;
        const auto hash = raw.find('#');
        const std::string_view body = hash == std::string_view::npos ? raw : raw.substr(0, hash);
        const auto first = body.find_first_not_of(" \t\r");
        if (first == std::string_view::npos) {
            if (nl == text.size()) break;
            continue;
        }
        const std::size_t col = first + 1;
        if (body[first] == '[') {
            const auto close = body.find(']', first);
            if (close == std::string_view::npos) throw ParseError(source, line_no, col, "unterminated section header");
            if (!trim(body.substr(close + 1)).empty()) {
                throw ParseError(source, line_no, close + 2, "unexpected text after section header");
            }
            const std::string name = trim(body.substr(first + 1, close - first - 1));
            if (!valid_name(name) || !known_section(name)) {
                throw ParseError(source, line_no, col + 1, "unknown section '" + name + "'");
            }
            section = name;
        } else {
            const auto eq = body.find('=');
            if (eq == std::string_view::npos) throw ParseError(source, line_no, col, "expected key = value");
            const std::string key = trim(body.substr(first, eq - first));
            if (!valid_name(key)) throw ParseError(source, line_no, col, "invalid key '" + key + "'");
            const std::string full = section.empty() ? key : section + "." + key;
            const Field* f = find_field(full);
            if (!f) throw ParseError(source, line_no, col, "unknown key '" + full + "'");
            if (!seen.insert(full).second) throw ParseError(source, line_no, col, "duplicate key '" + full + "'");
            const std::string value = trim(body.substr(eq + 1));
            const auto vstart = body.find_first_not_of(" \t", eq + 1);
            const std::size_t vcol = (vstart == std::string_view::npos ? eq + 1 : vstart) + 1;
            if (value.empty() && full != "run.z_hwp_deg") throw ParseError(source, line_no, vcol, "missing value");
            try {
                f->set(cfg, value);
            } catch (const std::invalid_argument& e) {
                throw ParseError(source, line_no, vcol, e.what());
            }
        }
        if (nl == text.size()) break;
    }
    if (seen.empty()) throw ParseError(source, line_no == 0 ? 1 : line_no, 1, "config has no settings");
    cfg.validate();
    return cfg;
}

LinkConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(path, 0, 0, "cannot open file");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path);
}

std::string render_config(const LinkConfig& cfg) {
    std::ostringstream os;
    std::string section;
    for (const auto& f : fields()) {
        const auto dot = f.key.rfind('.');
        const std::string sec = dot == std::string::npos ? "" : f.key.substr(0, dot);
        const std::string key = dot == std::string::npos ? f.key : f.key.substr(dot + 1);
        if (sec != section) {
            os << "\n[" << sec << "]\n";
            section = sec;
        }
        os << key << " = " << f.get(cfg) << '\n';
    }
    return os.str();
}

void set_config_value(LinkConfig& cfg, const std::string& key, const std::string& value) {
    const Field* f = find_field(key);
    if (!f) throw ValidationError(key, "unknown config key");
    try {
        f->set(cfg, value);
    } catch (const std::invalid_argument& e) {
        if (dynamic_cast<const ValidationError*>(&e)) throw;
        throw ValidationError(key, e.what());
    }
}

std::vector<std::string> config_keys() {
    std::vector<std::string> out;
    for (const auto& f : fields()) out.push_back(f.key);
    return out;
}

}  // namespace qlink
