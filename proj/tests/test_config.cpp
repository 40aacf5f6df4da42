#include <cmath>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "qlink/analysis.hpp"
#include "qlink/config.hpp"
#include "qlink/errors.hpp"
#include "qlink/link_model.hpp"
#include "qlink/sequencer.hpp"

using namespace qlink;

namespace {

const std::vector<std::string> kShipped{"local.cfg", "telecom_10m.cfg", "km5.cfg",
                                        "km10.cfg",  "km20.cfg",        "km100_model.cfg"};

std::string config_path(const std::string& name) { return std::string(QLINK_SOURCE_ROOT) + "/configs/" + name; }

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

ParseError parse_error_of(const std::string& text) {
    try {
        parse_config(text, "t.cfg");
    } catch (const ParseError& e) {
        return e;
    }
    ADD_FAILURE() << "no ParseError for:\n" << text;
    return ParseError("", 0, 0, "");
}

}  // namespace

TEST(Config, ShippedConfigsLoad) {
    for (const auto& name : kShipped) EXPECT_NO_THROW(load_config(config_path(name))) << name;
    EXPECT_NEAR(repetition_rate(load_config(config_path("local.cfg"))), 29.0, 0.5);
}

TEST(Config, EfficiencyOutOfRangeNamesField) {
    try {
        parse_config("[detectors.snspd]\nefficiency = 1.2\n");
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_EQ(e.field(), "detectors.snspd.efficiency");
    }
}

TEST(Config, EmptyFileIsParseError) {
    EXPECT_THROW(parse_config(""), ParseError);
    EXPECT_THROW(parse_config("# only a comment\n\n"), ParseError);
}

TEST(Config, ParseErrorsCarryLineAndColumn) {
    ParseError e = parse_error_of("seed = 3\n[fiber]\nlenght_km = 5\n");
    EXPECT_EQ(e.line(), 3u);
    EXPECT_EQ(e.column(), 1u);

    e = parse_error_of("[fiber]\nlength_km = five\n");
    EXPECT_EQ(e.line(), 2u);
    EXPECT_EQ(e.column(), 13u);

    e = parse_error_of("[nosuch]\n");
    EXPECT_EQ(e.line(), 1u);

    e = parse_error_of("[fiber]\nlength_km 5\n");
    EXPECT_EQ(e.line(), 2u);

    e = parse_error_of("[fiber]\nlength_km = 5\nlength_km = 6\n");
    EXPECT_EQ(e.line(), 3u);

    e = parse_error_of("[fiber\n");
    EXPECT_EQ(e.line(), 1u);

    e = parse_error_of("[fiber]\nlength_km =\n");
    EXPECT_EQ(e.line(), 2u);
}

TEST(Config, CommentsAndWhitespace) {
    const LinkConfig c = parse_config("  # header\nseed = 42   # trailing\n\n[fiber]\n  length_km=12.5\n");
    EXPECT_EQ(c.seed, 42u);
    EXPECT_EQ(c.fiber.length_km, 12.5);
}

TEST(Config, ListsAndEnums) {
    const LinkConfig c =
        parse_config("[run]\nbases = x\nz_hwp_deg = 0, 22.5, 45, 67.5\n[node]\ndecay_shape = exponential\n"
                     "[detectors]\nherald = apd\n");
    ASSERT_EQ(c.run.bases.size(), 1u);
    EXPECT_EQ(c.run.bases[0], ReadoutBasis::x);
    EXPECT_EQ(c.run.z_hwp_deg, (std::vector<double>{0, 22.5, 45, 67.5}));
    EXPECT_EQ(c.node.decay_shape, DecayShape::exponential);
    EXPECT_EQ(c.herald_detector, DetectorKind::apd);
    EXPECT_THROW(parse_config("[node]\ndecay_shape = lorentzian\n"), ParseError);
}

TEST(Config, RenderRoundTripsExactly) {
    for (const auto& name : kShipped) {
        const LinkConfig a = load_config(config_path(name));
        const std::string text = render_config(a);
        const LinkConfig b = parse_config(text, name);
        EXPECT_EQ(render_config(b), text) << name;
        EXPECT_EQ(a.node.p_exc, b.node.p_exc);
        EXPECT_EQ(a.node.coherence_tau_us, b.node.coherence_tau_us);
        EXPECT_EQ(a.sequence.aux_dead_fraction, b.sequence.aux_dead_fraction);
    }
    // Infinite coherence time survives the trip.
    const LinkConfig d;
    EXPECT_TRUE(std::isinf(parse_config(render_config(d)).node.coherence_tau_us));
}

TEST(Config, EveryKeyRendered) {
    const std::string text = render_config(LinkConfig{});
    for (const auto& key : config_keys()) {
        const std::string leaf = key.substr(key.rfind('.') == std::string::npos ? 0 : key.rfind('.') + 1);
        EXPECT_NE(text.find(leaf + " = "), std::string::npos) << key;
    }
}

TEST(Config, SetValue) {
    LinkConfig c;
    set_config_value(c, "fiber.length_km", "20");
    EXPECT_EQ(c.fiber.length_km, 20.0);
    set_config_value(c, "detectors.snspd.dark_rate_cps", "12");
    EXPECT_EQ(c.snspd.dark_rate_cps, 12.0);
    EXPECT_THROW(set_config_value(c, "fiber.nope", "1"), ValidationError);
    EXPECT_THROW(set_config_value(c, "fiber.length_km", "x"), ValidationError);
}

TEST(Config, CrossSectionValidation) {
    EXPECT_THROW(parse_config("[sequence]\nrounds = 0\n"), ValidationError);
    EXPECT_THROW(parse_config("[qfc.lock]\nkp = -1\n"), ValidationError);
    EXPECT_THROW(parse_config("[fiber]\ncompensation_dead_s = 400\n"), ValidationError);
}

TEST(Config, ShippedAnnotations) {
    // Each preset names the configuration it targets in its header comment.
    for (const auto& name : kShipped) {
        const std::string text = slurp(config_path(name));
        EXPECT_EQ(text.rfind("#", 0), 0u) << name;
    }
}

// The shipped node parameters are the fixed point of the calibration chain, so each
// individual calibration applied to the shipped configs returns the shipped value, and
// the model reproduces the reference measurements.
TEST(Calibration, ShippedConfigsAreAtFixedPoint) {
    const LinkConfig local = load_config(config_path("local.cfg"));
    const LinkConfig far = load_config(config_path("km20.cfg"));
    EXPECT_NEAR(local.node.raman_error_rad, calibrate_raman_error(0.985), 1e-9);
    EXPECT_NEAR(local.node.multi_excitation_coeff, calibrate_multi_excitation(local, 0.955), 1e-6);
    EXPECT_NEAR(far.node.p_exc, calibrate_excitation(far, 0.00205), 1e-8);
    EXPECT_NEAR(far.node.readout_path_eff, calibrate_readout_path(far, 7353.0 / 78288.0), 1e-6);
    const DecoherenceCalibration d = calibrate_decoherence(far, 0.836);
    EXPECT_NEAR(far.node.coherence_tau_us / d.coherence_tau_us, 1.0, 1e-6);
    EXPECT_NEAR(far.node.phase_jitter_sigma_rad, d.phase_jitter_sigma_rad, 1e-6);
    EXPECT_NEAR(far.sequence.aux_dead_fraction, calibrate_aux_dead(far, 15.0, 78288.0, ReadoutBasis::z), 1e-6);
    EXPECT_NEAR(far.snr_model.r_exc, calibrate_r_exc(100.0, 6.9, far.snr_model), 0.1);

    EXPECT_NEAR(local.node.effective_excitation(), 0.0092, 1e-6);
    EXPECT_NEAR(predict(local).vz, 0.955, 1e-5);
    const LinkPrediction p = predict(far);
    EXPECT_NEAR(p.herald_probability, 0.00205, 1e-7);
    EXPECT_NEAR(p.vx, 0.836, 1e-5);
    EXPECT_NEAR(fidelity_from_visibilities(p.vz, p.vx), 0.89, 0.04);
}

TEST(Calibration, SharedNodeBlockIdentical) {
    const LinkConfig ref = load_config(config_path("km20.cfg"));
    for (const auto& name : kShipped) {
        const LinkConfig c = load_config(config_path(name));
        EXPECT_EQ(c.node.raman_error_rad, ref.node.raman_error_rad) << name;
        EXPECT_EQ(c.node.multi_excitation_coeff, ref.node.multi_excitation_coeff) << name;
        EXPECT_EQ(c.node.readout_path_eff, ref.node.readout_path_eff) << name;
        EXPECT_EQ(c.node.coherence_tau_us, ref.node.coherence_tau_us) << name;
        EXPECT_EQ(c.node.phase_jitter_sigma_rad, ref.node.phase_jitter_sigma_rad) << name;
    }
}
