#include "qlink/detection.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "qlink/errors.hpp"

namespace qlink {

const char* to_string(DetectorKind k) { return k == DetectorKind::snspd ? "snspd" : "apd"; }

const char* to_string(ClickKind k) {
    switch (k) {
        case ClickKind::signal: return "signal";
        case ClickKind::noise: return "noise";
        case ClickKind::dark: return "dark";
    }
    return "?";
}

void DetectorParams::validate() const {
    const std::string p = std::string("detectors.") + to_string(kind) + ".";
    if (!(efficiency >= 0.0 && efficiency <= 1.0)) throw ValidationError(p + "efficiency", "must be in [0, 1]");
    if (!(std::isfinite(dark_rate_cps) && dark_rate_cps >= 0.0)) {
        throw ValidationError(p + "dark_rate_cps", "must be non-negative");
    }
    if (!(std::isfinite(window_ns) && window_ns > 0.0)) throw ValidationError(p + "window_ns", "must be positive");
}

void PulseShape::validate() const {
    if (!(rise_sigma_ns > 0.0)) throw ValidationError("detectors.pulse.rise_sigma_ns", "must be positive");
    if (!(fall_sigma_ns > 0.0)) throw ValidationError("detectors.pulse.fall_sigma_ns", "must be positive");
    if (!(window_sigmas > 0.0)) throw ValidationError("detectors.pulse.window_sigmas", "must be positive");
    if (!(window_start_ns() >= 0.0)) throw ValidationError("detectors.pulse.peak_ns", "signal window starts before 0");
}

double PulseShape::density(double t) const {
    const double norm = std::sqrt(2.0 / std::numbers::pi) / (rise_sigma_ns + fall_sigma_ns);
    const double s = t < peak_ns ? rise_sigma_ns : fall_sigma_ns;
    const double z = (t - peak_ns) / s;
    return norm * std::exp(-0.5 * z * z);
}

double PulseShape::cdf(double t) const {
    const double total = rise_sigma_ns + fall_sigma_ns;
    if (t < peak_ns) return rise_sigma_ns * std::erfc(-(t - peak_ns) / (rise_sigma_ns * std::numbers::sqrt2)) / total;
    return (rise_sigma_ns + fall_sigma_ns * std::erf((t - peak_ns) / (fall_sigma_ns * std::numbers::sqrt2))) / total;
}

namespace {
const double kHalfMaxZ = std::sqrt(2.0 * std::log(2.0));
}

double PulseShape::fwhm_start_ns() const { return peak_ns - kHalfMaxZ * rise_sigma_ns; }
double PulseShape::fwhm_end_ns() const { return peak_ns + kHalfMaxZ * fall_sigma_ns; }

double PulseShape::sample(Rng& rng, double record_ns) const {
    for (;;) {
        const bool rising = rng.uniform() * (rise_sigma_ns + fall_sigma_ns) < rise_sigma_ns;
        const double z = std::abs(rng.normal());
        const double t = rising ? peak_ns - z * rise_sigma_ns : peak_ns + z * fall_sigma_ns;
        if (t >= 0.0 && t < record_ns) return t;
    }
}

double poisson_click_probability(double rate_cps, double window_ns) {
    return -std::expm1(-rate_cps * window_ns * 1e-9);
}

ClickSample sample_channel(double p_photon, double noise_cps, const DetectorParams& params,
                           const PulseShape& pulse, Rng& rng) {
    ClickSample out;
    out.t_ns = std::numeric_limits<double>::infinity();
    const double w = params.window_ns;
    if (rng.uniform() < p_photon * params.efficiency) {
        out.clicked = true;
        out.kind = ClickKind::signal;
        out.t_ns = pulse.sample(rng, w);
    }
    // Background arrivals are exponential; only the first one inside the window matters.
    auto background = [&](double rate, ClickKind kind) {
        if (rate <= 0.0) return;
        const double t = -std::log1p(-rng.uniform()) / (rate * 1e-9);
        if (t < w && t < out.t_ns) {
            out.clicked = true;
            out.kind = kind;
            out.t_ns = t;
        }
    };
    background(noise_cps, ClickKind::noise);
    background(params.dark_rate_cps, ClickKind::dark);
    if (!out.clicked) out.t_ns = 0.0;
    return out;
}

ClickSample sample_click(double p_photon, const DetectorParams& params, double window_ns, Rng& rng) {
    if (!(p_photon >= 0.0 && p_photon <= 1.0)) throw ValidationError("p_photon", "must be in [0, 1]");
    DetectorParams d = params;
    d.window_ns = window_ns;
    PulseShape flat;
    flat.peak_ns = 0.5 * window_ns;
    flat.rise_sigma_ns = flat.fall_sigma_ns = window_ns;
    return sample_channel(p_photon, 0.0, d, flat, rng);
}

std::uint64_t Histogram::total() const {
    std::uint64_t t = 0;
    for (auto c : counts) t += c;
    return t;
}

Histogram& Histogram::merge(const Histogram& other) {
    if (other.counts.size() != counts.size() || other.bin_width_ns != bin_width_ns) {
        throw ValidationError("histogram", "cannot merge histograms with different binning");
    }
    for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
    return *this;
}

Histogram build_histogram(const std::vector<double>& offsets_ns, double bin_width_ns, double record_ns,
                          double window_start_ns, double window_end_ns) {
    if (!(bin_width_ns > 0.0)) throw ValidationError("bin_width_ns", "must be positive");
    Histogram h;
    h.bin_width_ns = bin_width_ns;
    h.record_ns = record_ns;
    h.window_start_ns = window_start_ns;
    h.window_end_ns = window_end_ns;
    h.counts.assign(static_cast<std::size_t>(std::ceil(record_ns / bin_width_ns)), 0);
    for (double t : offsets_ns) {
        if (!(t >= 0.0 && t < record_ns)) continue;
        const auto i = static_cast<std::size_t>(std::floor(t / bin_width_ns));
        if (i < h.counts.size()) ++h.counts[i];
    }
    return h;
}

namespace {

bool in_range(double start, double lo, double hi) { return start >= lo && start < hi; }

}  // namespace

SnrResult snr_from_histogram(const Histogram& h, SnrMode mode) {
    const std::size_t n = h.counts.size();
    double bg_sum = 0.0;
    std::size_t bg_bins = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!in_range(h.bin_start(i), h.window_start_ns, h.window_end_ns)) {
            bg_sum += static_cast<double>(h.counts[i]);
            ++bg_bins;
        }
    }
    if (bg_bins == 0) throw ValidationError("histogram", "no background region outside the signal window");
    const double bg = bg_sum / static_cast<double>(bg_bins);

    double lo = h.window_start_ns;
    double hi = h.window_end_ns;
    if (mode == SnrMode::fwhm) {
        std::vector<double> smooth(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0.0;
            int m = 0;
            for (long k = static_cast<long>(i) - 2; k <= static_cast<long>(i) + 2; ++k) {
                if (k < 0 || k >= static_cast<long>(n)) continue;
                s += static_cast<double>(h.counts[static_cast<std::size_t>(k)]);
                ++m;
            }
            smooth[i] = s / m - bg;
        }
        std::size_t peak = 0;
        double peak_val = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < n; ++i) {
            if (in_range(h.bin_start(i), h.window_start_ns, h.window_end_ns) && smooth[i] > peak_val) {
                peak_val = smooth[i];
                peak = i;
            }
        }
        if (peak_val > 0.0) {
            const double half = 0.5 * peak_val;
            std::size_t a = peak, b = peak;
            while (a > 0 && smooth[a - 1] >= half) --a;
            while (b + 1 < n && smooth[b + 1] >= half) ++b;
            lo = h.bin_start(a);
            hi = h.bin_start(b) + h.bin_width_ns;
        }
    }

    SnrResult r;
    r.window_start_ns = lo;
    r.window_end_ns = hi;
    double in_sum = 0.0;
    std::size_t in_bins = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (in_range(h.bin_start(i), lo, hi)) {
            in_sum += static_cast<double>(h.counts[i]);
            r.in_window_events += h.counts[i];
            ++in_bins;
        }
    }
    r.in_window_rate = in_bins ? in_sum / static_cast<double>(in_bins) : 0.0;
    r.background_rate = bg;
    r.snr = bg > 0.0 ? (r.in_window_rate - bg) / bg : std::numeric_limits<double>::infinity();
    return r;
}

}  // namespace qlink
