#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "qlink/analysis.hpp"
#include "qlink/config.hpp"
#include "qlink/errors.hpp"
#include "qlink/link_model.hpp"
#include "qlink/node.hpp"
#include "qlink/runner.hpp"

using namespace qlink;
namespace fs = std::filesystem;

namespace {

std::string source(const std::string& rel) { return std::string(QLINK_SOURCE_ROOT) + "/" + rel; }

LinkConfig shipped(const std::string& name) { return load_config(source("configs/" + name)); }

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("qlink-test-" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

RunOptions options(const fs::path& out, std::uint64_t trials, std::uint64_t seed = 11) {
    RunOptions o;
    o.out_dir = out.string();
    o.trials = trials;
    o.seed = seed;
    return o;
}

const std::vector<std::string> kArtifacts{"trials.csv",   "events.csv",   "herald_histogram.csv", "fringe_z.csv",
                                          "fringe_x.csv", "summary.json", "config.resolved.cfg"};

}  // namespace

TEST(CmdRun, WritesAllArtifacts) {
    const fs::path out = scratch("artifacts");
    const Json s = cmd_run(shipped("km10.cfg"), options(out, 300000));
    for (const auto& f : kArtifacts) EXPECT_TRUE(fs::exists(out / f)) << f;
    EXPECT_EQ(s["schema_version"], kSummarySchemaVersion);
    EXPECT_EQ(s["trials"], 300000u);
    EXPECT_EQ(s["config_echo"], "config.resolved.cfg");
    const Json disk = Json::parse(slurp(out / "summary.json"));
    EXPECT_EQ(disk, s);
    EXPECT_NEAR(s["repetition_rate_khz"].get<double>(), repetition_rate(shipped("km10.cfg")), 1e-9);
}

TEST(CmdRun, ByteIdenticalForFixedSeed) {
    const fs::path a = scratch("bytes-a"), b = scratch("bytes-b");
    const LinkConfig c = shipped("km5.cfg");
    cmd_run(c, options(a, 400000, 5));
    cmd_run(c, options(b, 400000, 5));
    for (const auto& f : kArtifacts) EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
}

TEST(CmdRun, ResolvedConfigReproducesOutputs) {
    const fs::path a = scratch("echo-a"), b = scratch("echo-b");
    LinkConfig c = shipped("km10.cfg");
    c.fiber.length_km = 7.5;
    c.seed = 99;
    RunOptions o;
    o.out_dir = a.string();
    o.trials = 300000;
    cmd_run(c, o);
    const LinkConfig echoed = load_config((a / "config.resolved.cfg").string());
    o.out_dir = b.string();
    cmd_run(echoed, o);
    for (const auto& f : kArtifacts) EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
}

TEST(CmdRun, LocalFidelityNearNinetySixPercent) {
    RunOptions o;
    o.trials = 3000000;
    o.write_files = false;
    const Json s = cmd_run(shipped("local.cfg"), o);
    const double f = s["fidelity"]["value"].get<double>(), sf = s["fidelity"]["sigma"].get<double>();
    EXPECT_GT(sf, 0.0);
    EXPECT_NEAR(f, 0.96, 4.0 * sf);
}

TEST(CmdRun, TwentyKilometreFidelityAboveEightyPercent) {
    RunOptions o;
    o.trials = 10000000;
    o.write_files = false;
    const Json s = cmd_run(shipped("km20.cfg"), o);
    EXPECT_GT(s["fidelity"]["value"].get<double>(), 0.80);
}

TEST(CmdSweep, FidelityNonIncreasingWithLength) {
    const fs::path out = scratch("sweep");
    const LinkConfig c = shipped("km20.cfg");
    const std::vector<double> lengths{0, 5, 10, 20};
    const std::vector<SweepRow> rows = cmd_sweep(c, SweepAxis::fiber_length, lengths, options(out, 5000000));
    ASSERT_EQ(rows.size(), lengths.size());
    for (std::size_t i = 0; i + 1 < rows.size(); ++i) {
        const double tol = 2.0 * std::hypot(rows[i].f_sim_err, rows[i + 1].f_sim_err);
        EXPECT_LE(rows[i + 1].f_sim, rows[i].f_sim + tol) << lengths[i + 1];
        LinkConfig a = c, b = c;
        a.fiber.length_km = lengths[i];
        b.fiber.length_km = lengths[i + 1];
        EXPECT_LT(predict(b).fidelity, predict(a).fidelity);
        EXPECT_GT(rows[i].rep_rate_khz, rows[i + 1].rep_rate_khz);
    }
    const std::string csv = slurp(out / "sweep.csv");
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "value,F_sim,F_sim_err,SNR_sim,SNR_model,rep_rate");
}

TEST(CmdSweep, HundredKilometreModelSnr) {
    RunOptions o = options(scratch("sweep100"), 100000);
    const std::vector<SweepRow> rows = cmd_sweep(shipped("km100_model.cfg"), SweepAxis::fiber_length, {100.0}, o);
    ASSERT_EQ(rows.size(), 1u);
    EXPECT_NEAR(rows[0].snr_model, 6.9, 0.5);
}

TEST(CmdSweep, EmptyValuesGiveEmptyTable) {
    const fs::path out = scratch("sweep-empty");
    EXPECT_TRUE(cmd_sweep(shipped("km10.cfg"), SweepAxis::fiber_length, {}, options(out, 1000)).empty());
    const std::string csv = slurp(out / "sweep.csv");
    EXPECT_EQ(csv, "value,F_sim,F_sim_err,SNR_sim,SNR_model,rep_rate\n");
}

TEST(CmdSweep, AxisParsing) {
    EXPECT_EQ(parse_sweep_axis("fiber_length"), SweepAxis::fiber_length);
    EXPECT_EQ(parse_sweep_axis("pump_power"), SweepAxis::pump_power);
    EXPECT_EQ(parse_sweep_axis("delay"), SweepAxis::delay);
    EXPECT_THROW(parse_sweep_axis("temperature"), ValidationError);
    EXPECT_THROW(parse_sweep_axis(""), ValidationError);
}

TEST(CmdFit, SnrOnShippedDataset) {
    const fs::path out = scratch("fit-snr");
    const Json j = cmd_fit(FitKind::snr, source("data/snr_vs_length.csv"), out.string());
    EXPECT_NEAR(j["r_noise"].get<double>(), 257.0, 0.05 * 257.0);
    EXPECT_EQ(j["r_dark"].get<double>(), 38.0);
    EXPECT_NEAR(j["atten_db_per_km"].get<double>(), 0.2, 0.01);
    EXPECT_TRUE(fs::exists(out / "fit_snr.json"));
}

TEST(CmdFit, DecayOnShippedDataset) {
    const Json j = cmd_fit(FitKind::decay, source("data/decay.csv"), "");
    EXPECT_NEAR(j["gaussian"]["tau_us"].get<double>(), 160.0, 5.0);
    EXPECT_EQ(j["best_shape"], "gaussian");
}

TEST(CmdFit, DfgAndFringeOnShippedDatasets) {
    const Json d = cmd_fit(FitKind::dfg, source("data/dfg.csv"), "");
    EXPECT_NEAR(d["eta_max"].get<double>(), 0.485, 0.02);
    EXPECT_NEAR(d["p_peak_w"].get<double>(), 1.749, 0.05);
    const Json f = cmd_fit(FitKind::fringe, source("data/fringe_z.csv"), "");
    const double v = f["visibility"]["value"].get<double>(), s = f["visibility"]["sigma"].get<double>();
    EXPECT_NEAR(v, 0.89, 4.0 * s);
}

TEST(CmdFit, MalformedCsvNamesColumn) {
    try {
        cmd_fit(FitKind::snr, source("tests/malformed.csv"), "");
        FAIL();
    } catch (const SchemaError& e) {
        EXPECT_EQ(e.column(), "snr");
    }
    const fs::path dir = scratch("schema");
    std::ofstream(dir / "wrong_header.csv") << "length_km,signal\n1,2\n";
    try {
        read_numeric_csv((dir / "wrong_header.csv").string(), fit_columns(FitKind::snr));
        FAIL();
    } catch (const SchemaError& e) {
        EXPECT_EQ(e.column(), "signal");
    }
    std::ofstream(dir / "ragged.csv") << "time_us,efficiency\n1\n";
    EXPECT_THROW(read_numeric_csv((dir / "ragged.csv").string(), fit_columns(FitKind::decay)), SchemaError);
}

TEST(CmdAnalyze, ReanalyzesRunDirectory) {
    const fs::path run = scratch("analyze-run"), out = scratch("analyze-out");
    const Json s = cmd_run(shipped("km5.cfg"), options(run, 2000000));
    const Json a = cmd_analyze(run.string(), out.string(), larmor_period_us(NodeParams{}));
    EXPECT_TRUE(fs::exists(out / "analysis.json"));
    EXPECT_NEAR(a["vz"]["value"].get<double>(), s["vz"]["value"].get<double>(), 1e-6);
    EXPECT_THROW(cmd_analyze((run / "missing").string(), out.string(), 5.6), ParseError);
}

TEST(Runner, TrialResolution) {
    LinkConfig c = shipped("km10.cfg");
    RunOptions o;
    o.trials = 123;
    EXPECT_EQ(resolve_trials(c, o), 123u);
    o.trials.reset();
    o.duration_s = 10.0;
    EXPECT_EQ(resolve_trials(c, o), session_trials(c, 10.0));
}

TEST(Runner, DefaultOutDirFromEnvironment) {
    ::setenv("QLINK_OUT_DIR", "/tmp/qlink-env-out", 1);
    EXPECT_EQ(default_out_dir(), "/tmp/qlink-env-out");
    ::unsetenv("QLINK_OUT_DIR");
    EXPECT_EQ(default_out_dir(), "qlink-out");
}
