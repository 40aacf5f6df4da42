// qlink-calibrate: fixes the free noise parameters of the node model from the reference
// measurements, and prints them as config lines.
//
//   raman_error_rad          superposition-basis loss of the local measurement
//   multi_excitation_coeff   local Vz at the local excitation probability
//   p_exc (far link)         herald rate per trial
//   readout_path_eff         read-outs per herald of the far link
//   coherence_tau_us, phase_jitter_sigma_rad   far-link Vx
//   aux_dead_fraction        heralds collected in a session of given length
//   snr_model.r_exc          model SNR at the reference length
//
// The node values are shared, so the chain is iterated to a fixed point.

#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "qlink/config.hpp"
#include "qlink/errors.hpp"
#include "qlink/link_model.hpp"
#include "qlink/sequencer.hpp"

namespace {

struct Targets {
    double raman_factor = 0.985;
    double local_p_eff = 0.0092;
    double local_vz = 0.955;
    double far_herald = 0.00205;
    double far_coincidences = 7353;
    double far_heralds = 78288;
    double far_hours = 15.0;
    double far_vx = 0.836;
    double snr_length_km = 100.0;
    double snr_value = 6.9;
};

struct Calibration {
    double raman_error_rad = 0.0;
    double multi_excitation_coeff = 0.0;
    double local_p_exc = 0.0;
    double far_p_exc = 0.0;
    double readout_path_eff = 0.0;
    double coherence_tau_us = 0.0;
    double phase_jitter_sigma_rad = 0.0;
    double aux_dead_fraction = 0.0;
    double r_exc = 0.0;
};

void apply_shared(qlink::LinkConfig& c, const Calibration& k) {
    c.node.raman_error_rad = k.raman_error_rad;
    c.node.multi_excitation_coeff = k.multi_excitation_coeff;
    c.node.readout_path_eff = k.readout_path_eff;
    c.node.coherence_tau_us = k.coherence_tau_us;
    c.node.phase_jitter_sigma_rad = k.phase_jitter_sigma_rad;
}

Calibration calibrate(qlink::LinkConfig local, qlink::LinkConfig far, const Targets& t) {
    Calibration k;
    k.raman_error_rad = qlink::calibrate_raman_error(t.raman_factor);
    k.multi_excitation_coeff = local.node.multi_excitation_coeff;
    k.readout_path_eff = far.node.readout_path_eff;
    k.coherence_tau_us = far.node.coherence_tau_us;
    k.phase_jitter_sigma_rad = far.node.phase_jitter_sigma_rad;
    k.local_p_exc = qlink::excitation_for_effective(local, t.local_p_eff);
    local.node.p_exc = k.local_p_exc;
    // The calibrations couple through the shared node block; iterate to a fixed point.
    for (int iter = 0; iter < 100; ++iter) {
        const Calibration prev = k;
        apply_shared(local, k);
        k.multi_excitation_coeff = qlink::calibrate_multi_excitation(local, t.local_vz);
        apply_shared(far, k);
        k.far_p_exc = qlink::calibrate_excitation(far, t.far_herald);
        far.node.p_exc = k.far_p_exc;
        k.readout_path_eff = qlink::calibrate_readout_path(far, t.far_coincidences / t.far_heralds);
        far.node.readout_path_eff = k.readout_path_eff;
        const auto d = qlink::calibrate_decoherence(far, t.far_vx);
        k.coherence_tau_us = d.coherence_tau_us;
        k.phase_jitter_sigma_rad = d.phase_jitter_sigma_rad;
        auto moved = [](double a, double b) { return std::abs(a - b) > 1e-12 * std::max(1.0, std::abs(b)); };
        if (iter > 0 && !moved(k.multi_excitation_coeff, prev.multi_excitation_coeff) &&
            !moved(k.far_p_exc, prev.far_p_exc) && !moved(k.readout_path_eff, prev.readout_path_eff) &&
            !moved(k.coherence_tau_us, prev.coherence_tau_us) &&
            !moved(k.phase_jitter_sigma_rad, prev.phase_jitter_sigma_rad))
            break;
    }
    apply_shared(far, k);
    k.aux_dead_fraction = qlink::calibrate_aux_dead(far, t.far_hours, t.far_heralds, qlink::ReadoutBasis::z);
    k.r_exc = qlink::calibrate_r_exc(t.snr_length_km, t.snr_value, far.snr_model);
    return k;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Calibrate the free noise parameters of the link model"};
    std::string local_path;
    std::string far_path;
    std::string json_path;
    std::vector<std::string> check;
    Targets t;
    app.add_option("--local", local_path, "Local (780 nm) reference config")->required()->check(CLI::ExistingFile);
    app.add_option("--far", far_path, "Long-fiber reference config")->required()->check(CLI::ExistingFile);
    app.add_option("--json", json_path, "Also write the results as JSON");
    app.add_option("--check", check, "Configs to print predictions for (after applying the shared values)");
    app.add_option("--raman-factor", t.raman_factor, "Local Vx/Vz ratio attributed to the Raman transfer");
    app.add_option("--local-p-eff", t.local_p_eff, "Local effective excitation probability");
    app.add_option("--local-vz", t.local_vz, "Local eigenbasis visibility");
    app.add_option("--far-herald", t.far_herald, "Far-link herald probability per trial");
    app.add_option("--far-coincidences", t.far_coincidences, "Far-link read-outs in the eigenbasis scan");
    app.add_option("--far-heralds", t.far_heralds, "Far-link heralds in the eigenbasis scan");
    app.add_option("--far-hours", t.far_hours, "Duration of the far-link session");
    app.add_option("--far-vx", t.far_vx, "Far-link superposition-basis visibility");
    app.add_option("--snr-length-km", t.snr_length_km, "Length of the SNR reference point");
    app.add_option("--snr", t.snr_value, "Model SNR at the reference length");
    CLI11_PARSE(app, argc, argv);

    try {
        const qlink::LinkConfig local = qlink::load_config(local_path);
        const qlink::LinkConfig far = qlink::load_config(far_path);
        const Calibration k = calibrate(local, far, t);

        std::cout << std::setprecision(10);
        std::cout << "# shared [node] values\n"
                  << "raman_error_rad = " << k.raman_error_rad << '\n'
                  << "multi_excitation_coeff = " << k.multi_excitation_coeff << '\n'
                  << "readout_path_eff = " << k.readout_path_eff << '\n'
                  << "coherence_tau_us = " << k.coherence_tau_us << '\n'
                  << "phase_jitter_sigma_rad = " << k.phase_jitter_sigma_rad << '\n'
                  << "# local [node]\np_exc = " << k.local_p_exc << '\n'
                  << "# far [node]\np_exc = " << k.far_p_exc << '\n'
                  << "# far [sequence]\naux_dead_fraction = " << k.aux_dead_fraction << '\n'
                  << "# [snr_model]\nr_exc = " << k.r_exc << '\n';

        nlohmann::ordered_json j;
        j["raman_error_rad"] = k.raman_error_rad;
        j["multi_excitation_coeff"] = k.multi_excitation_coeff;
        j["readout_path_eff"] = k.readout_path_eff;
        j["coherence_tau_us"] = k.coherence_tau_us;
        j["phase_jitter_sigma_rad"] = k.phase_jitter_sigma_rad;
        j["local_p_exc"] = k.local_p_exc;
        j["far_p_exc"] = k.far_p_exc;
        j["aux_dead_fraction"] = k.aux_dead_fraction;
        j["r_exc"] = k.r_exc;

        for (const auto& path : check) {
            qlink::LinkConfig c = qlink::load_config(path);
            apply_shared(c, k);
            const qlink::LinkPrediction p = qlink::predict(c);
            std::cout << "# " << path << ": herald " << p.herald_probability << ", SNR " << p.herald_snr_full
                      << " (fwhm " << p.herald_snr_fwhm << "), Vz " << p.vz << ", Vx " << p.vx << ", F "
                      << p.fidelity << ", rate " << qlink::repetition_rate(c) << " kHz\n";
            j["predictions"][path] = {{"herald_probability", p.herald_probability},
                                      {"herald_snr_full", p.herald_snr_full},
                                      {"herald_snr_fwhm", p.herald_snr_fwhm},
                                      {"vz", p.vz},
                                      {"vx", p.vx},
                                      {"fidelity", p.fidelity}};
        }
        if (!json_path.empty()) {
            std::ofstream os(json_path);
            os << j.dump(2) << '\n';
        }
    } catch (const qlink::ValidationError& e) {
        std::cerr << "invalid: " << e.what() << '\n';
        return 2;
    } catch (const qlink::ParseError& e) {
        std::cerr << "parse error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
    return 0;
}
