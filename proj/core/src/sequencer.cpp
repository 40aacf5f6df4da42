#include "qlink/sequencer.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <iomanip>
#include <limits>
#include <ostream>

#include "qlink/errors.hpp"
#include "qlink/link_model.hpp"

namespace qlink {

Schedule build_schedule(const LinkConfig& cfg) {
    const SequenceParams& s = cfg.sequence;
    s.validate();
    cfg.fiber.validate();
    Schedule out;
    out.propagation_delay_us = propagation_delay(cfg.fiber.length_km, cfg.fiber);
    out.cycle_time_us = s.pump_us + (s.write_ns + s.window_ns + s.read_ns) * 1e-3 + out.propagation_delay_us;
    const double round_budget = s.experiment_phase_ms * 1e3 / s.rounds;
    if (out.cycle_time_us > round_budget) {
        throw ValidationError("sequence.experiment_phase_ms", "one cycle does not fit in a round");
    }
    const double fit = std::ceil(round_budget / out.cycle_time_us - 1e-9);
    out.cycles_per_round = static_cast<int>(std::min<double>(s.max_cycles_per_round, fit));
    out.cycles_per_load = out.cycles_per_round * s.rounds;
    out.used_phase_us = s.rounds * out.cycles_per_round * out.cycle_time_us + (s.rounds - 1) * s.inter_round_us;
    out.load_period_us = s.cooling_ms * 1e3 + std::max(s.experiment_phase_ms * 1e3, out.used_phase_us);
    if (cfg.fiber.length_km > 0.0) {
        out.compensation_duty = 1.0 - cfg.fiber.compensation_dead_s / cfg.fiber.compensation_period_s;
    }
    out.repetition_rate_khz = out.cycles_per_load / out.load_period_us * 1e3 * out.compensation_duty;
    return out;
}

double repetition_rate(const LinkConfig& cfg) { return build_schedule(cfg).repetition_rate_khz; }

std::uint64_t session_trials(const LinkConfig& cfg, double duration_s) {
    if (!(duration_s >= 0.0)) throw ValidationError("run.duration_s", "must be non-negative");
    const double n = duration_s * repetition_rate(cfg) * 1e3 * (1.0 - cfg.sequence.aux_dead_fraction);
    return static_cast<std::uint64_t>(std::floor(n));
}

namespace {

struct Slot {
    std::uint64_t load = 0;
    double in_phase_us = 0.0;  // write time from the start of the experiment phase
};

Slot slot_of(const LinkConfig& cfg, const Schedule& sch, std::uint64_t trial_id) {
    const auto cpl = static_cast<std::uint64_t>(sch.cycles_per_load);
    const auto cpr = static_cast<std::uint64_t>(sch.cycles_per_round);
    const std::uint64_t within = trial_id % cpl;
    const double round = static_cast<double>(within / cpr);
    const double cycle = static_cast<double>(within % cpr);
    Slot s;
    s.load = trial_id / cpl;
    s.in_phase_us = round * (cpr * sch.cycle_time_us + cfg.sequence.inter_round_us) + cycle * sch.cycle_time_us +
                    cfg.sequence.pump_us;
    return s;
}

}  // namespace

double write_time_us(const LinkConfig& cfg, const Schedule& schedule, std::uint64_t trial_id) {
    const Slot s = slot_of(cfg, schedule, trial_id);
    return static_cast<double>(s.load) * schedule.load_period_us + cfg.sequence.cooling_ms * 1e3 + s.in_phase_us;
}

double phase_elapsed_us(const Schedule& schedule, const LinkConfig& cfg, std::uint64_t trial_id) {
    return slot_of(cfg, schedule, trial_id).in_phase_us;
}

const char* to_string(Outcome o) {
    switch (o) {
        case Outcome::down: return "down";
        case Outcome::up: return "up";
        case Outcome::none: break;
    }
    return "none";
}

SessionResult& SessionResult::merge(const SessionResult& o) {
    trials += o.trials;
    heralds += o.heralds;
    signal_heralds += o.signal_heralds;
    readout_signal += o.readout_signal;
    readout_noise += o.readout_noise;
    compensations = std::max(compensations, o.compensations);
    compensation_failures = std::max(compensation_failures, o.compensation_failures);
    max_compensation_error = std::max(max_compensation_error, o.max_compensation_error);
    if (counts.empty()) counts.resize(o.counts.size());
    if (counts.size() != o.counts.size()) throw ValidationError("counts", "setting layouts differ");
    for (std::size_t i = 0; i < counts.size(); ++i) {
        counts[i].trials += o.counts[i].trials;
        counts[i].heralds += o.counts[i].heralds;
        for (int c = 0; c < 2; ++c) {
            for (int k = 0; k < 2; ++k) counts[i].n[c][k] += o.counts[i].n[c][k];
        }
    }
    if (herald_histogram.counts.empty()) {
        herald_histogram = o.herald_histogram;
    } else {
        herald_histogram.merge(o.herald_histogram);
    }
    records.insert(records.end(), o.records.begin(), o.records.end());
    events.insert(events.end(), o.events.begin(), o.events.end());
    return *this;
}

namespace {

constexpr int kReadDown = 2;
constexpr int kReadUp = 3;

// Photon effects and conditioned atomic states of one setting for the current fiber
// channel.
struct SettingChannel {
    std::array<double, 2> p_signal{};  // p * tr[(I x E_c) rho]
    double p_excited = 0.0;            // p
    std::array<AtomState, 2> atom;     // conditioned on E_c
    AtomState atom_lost;               // conditioned on I - E_T - E_R
    bool lost_valid = false;
};

class LinkState {
public:
    LinkState(const LinkConfig& cfg, std::uint64_t seed)
        : cfg_(cfg),
          settings_(measurement_settings(cfg)),
          rho_(initial_state(cfg.node)),
          kraus_(photon_kraus(cfg)),
          drift_rng_(seed, stream_tag("drift")),
          drifting_(cfg.fiber.length_km > 0.0 && cfg.fiber.drift_step_sigma_rad > 0.0) {
        rebuild();
    }

    // Advances fiber drift and compensation to wall time t (monotone).
    void advance_to(double t_us, SessionResult& r) {
        if (!drifting_) return;
        const auto epoch = static_cast<std::uint64_t>(t_us * 1e-6 / cfg_.fiber.drift_interval_s);
        if (epoch == epoch_) return;
        const double steps_per_comp = cfg_.fiber.compensation_period_s / cfg_.fiber.drift_interval_s;
        while (epoch_ < epoch) {
            ++epoch_;
            comp_ = drift_step(comp_, cfg_.fiber.drift_step_sigma_rad, drift_rng_);
            const auto k = static_cast<std::uint64_t>(std::floor(static_cast<double>(epoch_) / steps_per_comp));
            if (k > compensations_) {
                compensations_ = k;
                comp_ = compensate(comp_);
                if (!comp_.converged) ++failures_;
                max_error_ = std::max(max_error_, comp_.last_error);
            }
        }
        r.compensations = compensations_;
        r.compensation_failures = failures_;
        r.max_compensation_error = max_error_;
        rebuild();
    }

    const SettingChannel& channel(std::size_t s) const { return channels_[s]; }
    const std::vector<MeasurementSetting>& settings() const { return settings_; }

private:
    void rebuild() {
        Matrix2c a = kraus_;
        if (drifting_) a = compensator_unitary(comp_.compensator).matrix() * comp_.fiber_unitary.matrix() * a;
        const double p = cfg_.node.effective_excitation();
        channels_.assign(settings_.size(), SettingChannel{});
        for (std::size_t i = 0; i < settings_.size(); ++i) {
            SettingChannel& c = channels_[i];
            c.p_excited = p;
            Matrix2c sum = Matrix2c::Zero();
            for (int ch = 0; ch < 2; ++ch) {
                AnalyzerSetting an = settings_[i].analyzer;
                an.port = ch == 0 ? PbsPort::transmit : PbsPort::reflect;
                const Matrix2c e = a.adjoint() * projector(an) * a;
                sum += e;
                const double pe = rho_.photon_probability(e);
                c.p_signal[ch] = p * pe;
                if (pe > 1e-15) c.atom[ch] = rho_.atom_conditioned_on(e);
            }
            const Matrix2c lost = Matrix2c::Identity() - sum;
            if (rho_.photon_probability(lost) > 1e-15) {
                c.atom_lost = rho_.atom_conditioned_on(lost);
                c.lost_valid = true;
            }
        }
    }

    const LinkConfig& cfg_;
    std::vector<MeasurementSetting> settings_;
    TwoQubitState rho_;
    Matrix2c kraus_;
    Rng drift_rng_;
    bool drifting_;
    CompensationState comp_;
    std::uint64_t epoch_ = 0;
    std::uint64_t compensations_ = 0;
    std::uint64_t failures_ = 0;
    double max_error_ = 0.0;
    std::vector<SettingChannel> channels_;
};

struct BackgroundClick {
    bool clicked = false;
    ClickKind kind = ClickKind::noise;
    double t_ns = 0.0;
};

BackgroundClick sample_background(double noise_cps, double dark_cps, double window_ns, Rng& rng) {
    BackgroundClick b;
    const double rate = noise_cps + dark_cps;
    if (rate <= 0.0) return b;
    const double p_any = poisson_click_probability(rate, window_ns);
    const double u = rng.uniform();
    if (u >= p_any) return b;
    b.clicked = true;
    // First arrival of a Poisson process conditioned on falling in the window.
    b.t_ns = -std::log1p(-u) / (rate * 1e-9);
    b.t_ns = std::min(b.t_ns, std::nextafter(window_ns, 0.0));
    b.kind = rng.uniform() * rate < noise_cps ? ClickKind::noise : ClickKind::dark;
    return b;
}

}  // namespace

SessionResult run_session(const LinkConfig& cfg, const SessionOptions& opt) {
    cfg.validate();
    const Schedule sch = build_schedule(cfg);
    LinkState link(cfg, opt.seed);
    const auto& settings = link.settings();
    const DetectorParams& herald_det = cfg.herald();
    const double noise_cps = herald_noise_cps(cfg);
    const double dark_cps = herald_dark_cps(cfg);
    const double record_ns = herald_det.window_ns;
    const double q_noise = readout_detection_eff(cfg) / cfg.node.readout_snr_factor;

    SessionResult r;
    r.counts.resize(settings.size());
    r.herald_histogram = build_histogram({}, 1.0, record_ns, cfg.herald_pulse.window_start_ns(),
                                         cfg.herald_pulse.window_end_ns());

    for (std::uint64_t k = 0; k < opt.n_trials; ++k) {
        const std::uint64_t id = opt.first_trial + k;
        const double t_write = write_time_us(cfg, sch, id);
        link.advance_to(t_write, r);
        const std::size_t si = id % settings.size();
        const MeasurementSetting& setting = settings[si];
        const SettingChannel& ch = link.channel(si);
        Rng rng(opt.seed, id);
        ++r.trials;
        ++r.counts[si].trials;

        // Write-out photon: at most one signal click (transmit, reflect, lost, none).
        const double u = rng.uniform();
        int signal_ch = -1;
        bool excited = false;
        if (u < ch.p_signal[0]) {
            signal_ch = 0;
        } else if (u < ch.p_signal[0] + ch.p_signal[1]) {
            signal_ch = 1;
        }
        excited = u < ch.p_excited;

        double first_t = std::numeric_limits<double>::infinity();
        int herald = -1;
        ClickKind kind = ClickKind::signal;
        if (signal_ch >= 0) {
            first_t = cfg.herald_pulse.sample(rng, record_ns);
            herald = signal_ch;
        }
        for (int c = 0; c < 2; ++c) {
            const BackgroundClick b = sample_background(noise_cps, dark_cps, record_ns, rng);
            if (b.clicked && b.t_ns < first_t) {
                first_t = b.t_ns;
                herald = c;
                kind = b.kind;
            }
        }
        TrialRecord rec;
        rec.trial_id = id;
        rec.write_time_us = t_write;
        rec.basis = setting.basis;
        rec.setting = static_cast<int>(si);
        if (herald < 0) {
            if (opt.record_all_trials) r.records.push_back(rec);
            continue;
        }

        ++r.heralds;
        ++r.counts[si].heralds;
        if (kind == ClickKind::signal) ++r.signal_heralds;
        r.herald_histogram.counts[std::min<std::size_t>(static_cast<std::size_t>(first_t),
                                                        r.herald_histogram.counts.size() - 1)]++;

        rec.herald = herald;
        rec.herald_kind = kind;
        rec.herald_time_us = t_write + sch.propagation_delay_us + (first_t - cfg.herald_pulse.peak_ns) * 1e-3;
        rec.delay_us = rec.herald_time_us - t_write + setting.extra_delay_us;
        const double elapsed = phase_elapsed_us(sch, cfg, id);

        ReadoutSample rs;
        if (excited) {
            const AtomState& atom = signal_ch >= 0 ? ch.atom[signal_ch] : ch.atom_lost;
            rs = readout_sample(atom, setting.basis, rec.delay_us, cfg.node, true, rng, cfg.apd.efficiency, elapsed);
        } else if (rng.uniform() < q_noise) {
            rs.readout_noise_click = true;
            rs.outcome = rng.bernoulli(0.5) ? AtomLevel::up : AtomLevel::down;
        }
        if (rs.retrieved) ++r.readout_signal;
        if (rs.readout_noise_click) ++r.readout_noise;
        if (rs.outcome) {
            rec.outcome = *rs.outcome == AtomLevel::down ? Outcome::down : Outcome::up;
            rec.readout_noise = !rs.retrieved;
            ++r.counts[si].n[herald][*rs.outcome == AtomLevel::down ? 0 : 1];
        }
        r.records.push_back(rec);

        if (opt.record_events) {
            r.events.push_back({id, herald, rec.herald_time_us * 1e3, kind});
            if (rs.outcome) {
                const double read_start_ns = (rec.herald_time_us + setting.extra_delay_us) * 1e3;
                const double off = rs.retrieved ? cfg.readout_pulse.sample(rng, cfg.sequence.read_ns)
                                                : rng.uniform(0.0, cfg.sequence.read_ns);
                r.events.push_back({id, *rs.outcome == AtomLevel::down ? kReadDown : kReadUp, read_start_ns + off,
                                    rs.retrieved ? ClickKind::signal : ClickKind::noise});
            }
        }
    }
    return r;
}

SessionResult run_sharded(const LinkConfig& cfg, std::uint64_t n_trials, int shards, std::uint64_t seed,
                          bool derive_seeds, bool record_events) {
    if (shards < 1) throw ValidationError("shards", "must be at least 1");
    std::vector<std::future<SessionResult>> parts;
    const auto n = static_cast<std::uint64_t>(shards);
    for (std::uint64_t i = 0; i < n; ++i) {
        SessionOptions o;
        o.seed = derive_seeds ? derive_seed(seed, i) : seed;
        o.first_trial = n_trials * i / n;
        o.n_trials = n_trials * (i + 1) / n - o.first_trial;
        o.record_all_trials = cfg.run.record_all_trials;
        o.record_events = record_events;
        parts.push_back(std::async(std::launch::async, [&cfg, o] { return run_session(cfg, o); }));
    }
    SessionResult out;
    for (auto& p : parts) out.merge(p.get());
    return out;
}

FringeDataset fringe_dataset(const LinkConfig& cfg, const SessionResult& r, ReadoutBasis basis) {
    const auto settings = measurement_settings(cfg);
    FringeDataset d;
    for (std::size_t i = 0; i < settings.size() && i < r.counts.size(); ++i) {
        if (settings[i].basis != basis) continue;
        d.settings.push_back(settings[i].value);
        d.coincidences.push_back(static_cast<double>(r.counts[i].correlated()));
        d.singles.push_back(static_cast<double>(r.counts[i].total()));
    }
    return d;
}

void write_trials_csv(std::ostream& os, const std::vector<TrialRecord>& records) {
    os << "trial_id,write_time_us,herald,herald_time_us,basis,delay_us,outcome\n";
    os << std::fixed << std::setprecision(4);
    for (const auto& r : records) {
        os << r.trial_id << ',' << r.write_time_us << ',';
        if (r.herald < 0) {
            os << "none,,";
        } else {
            os << r.herald << ',' << r.herald_time_us << ',';
        }
        os << to_string(r.basis) << ',';
        if (r.herald >= 0) os << r.delay_us;
        os << ',' << to_string(r.outcome) << '\n';
    }
    os << std::defaultfloat;
}

void write_events_csv(std::ostream& os, const std::vector<DetectionEvent>& events) {
    os << "trial_id,channel,timestamp_ns,kind\n";
    os << std::fixed << std::setprecision(3);
    for (const auto& e : events) os << e.trial_id << ',' << e.channel << ',' << e.timestamp_ns << ',' << to_string(e.kind) << '\n';
    os << std::defaultfloat;
}

void write_histogram_csv(std::ostream& os, const Histogram& h) {
    os << "# window_start_ns=" << h.window_start_ns << "\n# window_end_ns=" << h.window_end_ns << '\n';
    os << "bin_start_ns,count\n";
    for (std::size_t i = 0; i < h.counts.size(); ++i) os << h.bin_start(i) << ',' << h.counts[i] << '\n';
}

void write_fringe_csv(std::ostream& os, const FringeDataset& d) {
    os << "setting,coincidences,singles\n";
    os << std::setprecision(10);
    for (std::size_t i = 0; i < d.settings.size(); ++i) {
        os << d.settings[i] << ',' << d.coincidences[i] << ',' << d.singles[i] << '\n';
    }
    os << std::defaultfloat << std::setprecision(6);
}

}  // namespace qlink
