#pragma once

// Single-photon detectors, click sampling inside the 200-ns photon window, 1-ns time
// histograms and window SNR.

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "qlink/random.hpp"

namespace qlink {

enum class DetectorKind { snspd, apd };
enum class ClickKind { signal, noise, dark };

const char* to_string(DetectorKind k);
const char* to_string(ClickKind k);

struct DetectorParams {
    DetectorKind kind = DetectorKind::snspd;
    double efficiency = 0.88;
    double dark_rate_cps = 30.0;
    double window_ns = 200.0;

    static DetectorParams snspd() { return {DetectorKind::snspd, 0.88, 30.0, 200.0}; }
    static DetectorParams apd() { return {DetectorKind::apd, 0.65, 50.0, 200.0}; }

    /// Throws ValidationError naming `detectors.<kind>.<field>`.
    void validate() const;
};

/// Photon wave packet inside the record: a split Gaussian peaking at `peak_ns`
/// (measured from window open) with separate rise and fall widths.
struct PulseShape {
    double peak_ns = 60.0;
    double rise_sigma_ns = 10.0;
    double fall_sigma_ns = 20.0;
    double window_sigmas = 3.1;  ///< full-width signal window = peak - k rise .. peak + k fall

    void validate() const;
    double density(double t_ns) const;  ///< normalized over the real line
    double cdf(double t_ns) const;
    /// Half-maximum points of the density.
    double fwhm_start_ns() const;
    double fwhm_end_ns() const;
    double sample(Rng& rng, double record_ns) const;
    double window_start_ns() const { return peak_ns - window_sigmas * rise_sigma_ns; }
    double window_end_ns() const { return peak_ns + window_sigmas * fall_sigma_ns; }
};

struct ClickSample {
    bool clicked = false;
    ClickKind kind = ClickKind::dark;
    double t_ns = 0.0;  ///< offset from window open
};

/// Signal click with probability p_photon * efficiency, time drawn from the pulse;
/// independent background at `noise_cps` (detected converter-noise rate at this
/// channel) and dark counts, each Poissonian over the window. The earliest click wins.
ClickSample sample_channel(double p_photon, double noise_cps, const DetectorParams& params,
                           const PulseShape& pulse, Rng& rng);

/// Signal plus dark counts only, over `window_ns`.
ClickSample sample_click(double p_photon, const DetectorParams& params, double window_ns, Rng& rng);

/// 1 - exp(-rate * window).
double poisson_click_probability(double rate_cps, double window_ns);

struct DetectionEvent {
    std::uint64_t trial_id = 0;
    int channel = 0;
    double timestamp_ns = 0.0;  ///< absolute simulated time
    ClickKind kind = ClickKind::signal;
};

struct Histogram {
    double bin_width_ns = 1.0;
    double record_ns = 200.0;
    double window_start_ns = 0.0;  ///< annotated signal window [start, end)
    double window_end_ns = 0.0;
    std::vector<std::uint64_t> counts;

    std::uint64_t total() const;
    double bin_start(std::size_t i) const { return static_cast<double>(i) * bin_width_ns; }
    /// Adds counts bin by bin; layouts must match.
    Histogram& merge(const Histogram& other);
};

/// Bins offsets (ns from window open) over [0, record). Offsets outside the record
/// are dropped. Throws on non-positive bin width.
Histogram build_histogram(const std::vector<double>& offsets_ns, double bin_width_ns, double record_ns,
                          double window_start_ns, double window_end_ns);

enum class SnrMode { full_width, fwhm };

struct SnrResult {
    double snr = 0.0;  ///< +inf when the background region is empty of counts
    double window_start_ns = 0.0;
    double window_end_ns = 0.0;
    double in_window_rate = 0.0;   ///< counts per bin
    double background_rate = 0.0;  ///< counts per bin
    std::uint64_t in_window_events = 0;
};

/// (in-window rate - background rate) / background rate per bin. The background
/// region is every bin of the record outside the annotated full-width window. In
/// fwhm mode the signal window shrinks to the half-maximum crossings of the
/// background-subtracted, 5-bin smoothed histogram.
SnrResult snr_from_histogram(const Histogram& h, SnrMode mode);

}  // namespace qlink
