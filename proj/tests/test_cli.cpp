#include "virtlase/cli.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace virtlase;
namespace fs = std::filesystem;

namespace {

struct Run
{
    int code;
    std::string out, err;
};

Run run(std::vector<std::string> args)
{
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

fs::path scratch_dir()
{
    const fs::path dir = fs::temp_directory_path() / "virtlase_test_cli";
    fs::create_directories(dir);
    return dir;
}

} // namespace

TEST_CASE("polarization table matches the fixture")
{
    const Run r = run({"polarization-table"});
    CHECK(r.code == 0);
    CHECK(r.out == slurp(fs::path(VIRTLASE_FIXTURES) / "selection_table.txt"));

    const Run extra = run({"polarization-table", "--extra", "1,0,1@linear:45"});
    CHECK(extra.code == 0);
    CHECK(extra.out.substr(0, r.out.size()) == r.out);
    CHECK(extra.out.size() > r.out.size());

    const Run zero = run({"polarization-table", "--extra", "0,0,0@H"});
    CHECK(zero.code == 3);
    CHECK(zero.err.find("quantization axis undefined") != std::string::npos);
    const Run zero_config = run({"--set", "b_offset=0,0,0 G", "polarization-table", "--from-config"});
    CHECK(zero_config.code == 3);
}

TEST_CASE("usage errors")
{
    CHECK(run({}).code == 2);
    CHECK(run({"bogus"}).code == 2);
    CHECK(run({"map", "--pump-step=0MHz"}).code == 2);
    CHECK(run({"map", "--pump-start=1MHz", "--pump-stop=-1MHz"}).code == 2);
    CHECK(run({"shift-scan", "--start=2G", "--stop=2G"}).code == 2);
    CHECK(run({"--set", "no_such_key=1", "polarization-table"}).code == 2);
    CHECK(run({"clicks", "--duration=1ms"}).code == 2); // needs --out
    CHECK(run({"--config", "/nonexistent/file", "map"}).code == 2);
}

TEST_CASE("zero-area map gives an empty table")
{
    const Run r = run({"map", "--pump-start=5MHz", "--pump-stop=5MHz"});
    CHECK(r.code == 0);
    CHECK(std::count(r.out.begin(), r.out.end(), '\n') == 1);
}

TEST_CASE("map with 0 degree pump stays below threshold")
{
    const Run r = run({"map", "--pump-polarization=linear:0", "--pump-start=-6MHz", "--pump-stop=6MHz",
                       "--pump-step=2MHz", "--cavity-start=-45MHz", "--cavity-stop=-25MHz", "--cavity-step=5MHz"});
    CHECK(r.code == 0);
    std::istringstream lines(r.out);
    std::string line;
    std::getline(lines, line);
    int rows = 0;
    while (std::getline(lines, line)) {
        ++rows;
        CHECK(line.find(",0,") != std::string::npos); // above_threshold column
    }
    CHECK(rows == 7 * 5);
}

TEST_CASE("calibration file round trip and integrity")
{
    const fs::path dir = scratch_dir();
    const std::string cal = (dir / "cal.txt").string();
    REQUIRE(run({"--out", cal, "calibrate"}).code == 0);
    const auto record = cli::parse_calibration(slurp(cal));
    CHECK(record.constants.gain_scale > 0.0);
    CHECK(cli::format_calibration(record, RunConfig{}) == slurp(cal));

    CHECK(run({"--calibration", cal, "threshold", "--stop=6000", "--step=1000"}).code == 0);
    // stale: config changed after calibrating
    CHECK(run({"--calibration", cal, "--set", "pump_power=6mW", "threshold"}).code == 4);
    // seed is not part of the hash
    CHECK(run({"--calibration", cal, "--seed", "5", "threshold", "--stop=2000", "--step=1000"}).code == 0);

    std::string text = slurp(cal);
    const auto pos = text.find("config_hash = 0x") + 16;
    text[pos] = text[pos] == '0' ? '1' : '0';
    std::ofstream(dir / "tampered.txt", std::ios::binary) << text;
    const Run tampered = run({"--calibration", (dir / "tampered.txt").string(), "threshold"});
    CHECK(tampered.code == 4);
}

TEST_CASE("threshold command detects the calibrated kink")
{
    const fs::path out = scratch_dir() / "thr.csv";
    REQUIRE(run({"--out", out.string(), "threshold", "--start=4000", "--stop=6000", "--step=100"}).code == 0);
    const std::string meta = slurp(out.string() + ".meta");
    const auto pos = meta.find("result.tem0.threshold = ");
    REQUIRE(pos != std::string::npos);
    CHECK(std::stod(meta.substr(pos + 24)) == doctest::Approx(5000.0).epsilon(2e-4));
    CHECK(meta.find("result.tem0.grid_onset = 5100") != std::string::npos);
}

TEST_CASE("replay reproduces outputs bit for bit")
{
    const fs::path dir = scratch_dir();
    const std::string first = (dir / "g2.csv").string(), second = (dir / "g2_replay.csv").string();
    REQUIRE(run({"--out", first, "--seed", "3", "g2", "--regime=below", "--tau-c=2us", "--duration=20ms",
                 "--rate=2e5", "--bin=200ns", "--max-lag=4us"})
                .code == 0);
    const Run replay = run({"--out", second, "replay", first + ".meta", "--verify"});
    CHECK(replay.code == 0);
    CHECK(slurp(first) == slurp(second));

    const std::string clicks = (dir / "clk").string();
    REQUIRE(run({"--out", clicks, "clicks", "--regime=poisson", "--duration=10ms", "--rate=1e5"}).code == 0);
    CHECK(fs::file_size(clicks + ".a.clks") > 28);
    CHECK(run({"--out", clicks + "2", "replay", clicks + ".meta", "--verify"}).code == 0);
    CHECK(slurp(clicks + ".a.clks") == slurp(clicks + "2.a.clks"));

    // g2 from the exported files agrees with the in-memory correlation
    const Run from_files = run({"g2", "--input-a", clicks + ".a.clks", "--input-b", clicks + ".b.clks",
                                "--bin=1us", "--max-lag=5us"});
    CHECK(from_files.code == 0);
    CHECK(from_files.out.rfind("lag_s,g2,sigma,counts\n", 0) == 0);
}

TEST_CASE("below-threshold g2 needs a below-threshold operating point")
{
    CHECK(run({"g2", "--regime=below", "--duration=10ms"}).code == 3);
    CHECK(run({"--set", "coupled_atoms=2000", "g2", "--regime=below", "--duration=20ms", "--rate=1e5",
               "--bin=1us", "--max-lag=5us"})
              .code == 0);
}
