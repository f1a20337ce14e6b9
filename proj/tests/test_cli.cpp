#include <catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#ifdef _WIN32
#error "the CLI tests assume a POSIX shell"
#endif
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

int run(const std::string& args, const std::string& log = "/dev/null") {
    std::string cmd = std::string("\"") + RINGOBS_BIN + "\" " + args + " >" + log + " 2>&1";
    int rc = std::system(cmd.c_str());
    if (rc == -1) return -1;
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -2;
}

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::trunc);
    f << text;
}

int count_lines(const std::string& path) {
    std::ifstream f(path);
    int n = 0;
    std::string line;
    while (std::getline(f, line))
        if (!line.empty()) ++n;
    return n;
}

std::string tiny_cfg_text(int n = 2) {
    std::ostringstream s;
    s << "[experiment]\nseed = 5\n"
      << "[ring]\nlength = 400\ngrid_cells = 16\nkernel_bandwidth = 30\n"
      << "[sensors]\ncount = 4\nnoise_sigma = 0.05\n"
      << "[window]\nn = " << n << "\nn_d = 3\n"
      << "[simulate]\ndensities = 0.3, 0.5\nscenarios_per_density = 1\n"
      << "record_steps = 40\nwarmup_steps = 30\n"
      << "[solution]\nlift_width = 4\nwidths = 4\nmodes = 3\nprojection_hidden = 8\n"
      << "[correction]\nlift_width = 4\nwidths = 4\nmodes = 3\nprojection_hidden = 8\n"
      << "[train_solution]\nepochs = 2\nbatch_size = 4\n"
      << "[train_correction]\nepochs = 1\nbatch_size = 4\npair_cap = 4\n"
      << "[observe]\nhorizon_steps = 5\ndensity = 0.4\n"
      << "[evaluate]\ndensities = 0.4\nseeds = 1\nconditions = noiseless, noisy\n";
    return s.str();
}

// One simulate + train pipeline, shared by the read-only test cases.
const std::string& pipeline_dir() {
    static std::string dir = [] {
        std::string d = (fs::current_path() / "cli_pipeline").string();
        fs::remove_all(d);
        fs::create_directories(d);
        write_file(d + "/tiny.cfg", tiny_cfg_text());
        REQUIRE(run("simulate --config " + d + "/tiny.cfg --out " + d, d + "/sim.log") == 0);
        REQUIRE(run("train --config " + d + "/tiny.cfg --out " + d, d + "/train.log") == 0);
        return d;
    }();
    return dir;
}

}  // namespace

TEST_CASE("usage errors exit with the config status") {
    CHECK(run("") == 2);                       // missing subcommand
    CHECK(run("frobnicate --config x") == 2);  // unknown subcommand
    CHECK(run("--help") == 0);
    CHECK(run("simulate --config definitely_missing.cfg") == 2);
}

TEST_CASE("config problems are reported before any work happens") {
    std::string dir = (fs::current_path() / "cli_badcfg").string();
    fs::create_directories(dir);
    write_file(dir + "/bad_sensor.cfg", tiny_cfg_text() + "[sensors]\ncells = 99\n");
    CHECK(run("simulate --config " + dir + "/bad_sensor.cfg --out " + dir) == 2);
    write_file(dir + "/typo.cfg", "[ring]\nlenght = 400\n");
    std::string log = dir + "/typo.log";
    CHECK(run("simulate --config " + dir + "/typo.cfg --out " + dir, log) == 2);
    CHECK(slurp(log).find("unknown key 'ring.lenght'") != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("missing prerequisites exit with the artifact status") {
    std::string dir = (fs::current_path() / "cli_missing").string();
    fs::remove_all(dir);
    fs::create_directories(dir);
    write_file(dir + "/tiny.cfg", tiny_cfg_text());
    std::string log = dir + "/log.txt";
    CHECK(run("train --config " + dir + "/tiny.cfg --out " + dir, log) == 3);
    CHECK(slurp(log).find("dataset.bin") != std::string::npos);
    CHECK(run("observe --config " + dir + "/tiny.cfg --out " + dir) == 3);
    CHECK(run("evaluate --config " + dir + "/tiny.cfg --out " + dir) == 3);
    fs::remove_all(dir);
}

TEST_CASE("the closed loop demands a trained correction unless overridden") {
    std::string dir = (fs::current_path() / "cli_nocorr").string();
    fs::remove_all(dir);
    fs::create_directories(dir);
    write_file(dir + "/tiny.cfg", tiny_cfg_text());
    REQUIRE(run("simulate --config " + dir + "/tiny.cfg --out " + dir) == 0);
    REQUIRE(run("train --which solution --config " + dir + "/tiny.cfg --out " + dir) == 0);
    CHECK(run("observe --mode cl --config " + dir + "/tiny.cfg --out " + dir) == 3);
    CHECK(run("observe --mode cl --identity-correction --config " + dir + "/tiny.cfg --out " +
              dir) == 0);
    CHECK(run("train --which nonsense --config " + dir + "/tiny.cfg --out " + dir) == 2);
    fs::remove_all(dir);
}

TEST_CASE("simulate writes the dataset and reports the windowing") {
    const std::string& dir = pipeline_dir();
    CHECK(fs::exists(dir + "/dataset.bin"));
    std::string out = slurp(dir + "/sim.log");
    CHECK(out.find("scenarios: 2") != std::string::npos);
    CHECK(out.find("window pairs (n=2, n_out=4): 12") != std::string::npos);
}

TEST_CASE("simulating zero scenarios warns instead of failing") {
    std::string dir = (fs::current_path() / "cli_empty").string();
    fs::remove_all(dir);
    fs::create_directories(dir);
    write_file(dir + "/empty.cfg", tiny_cfg_text() + "[simulate]\nscenarios_per_density = 0\n");
    std::string log = dir + "/log.txt";
    CHECK(run("simulate --config " + dir + "/empty.cfg --out " + dir, log) == 0);
    CHECK(slurp(log).find("warning: wrote an empty dataset") != std::string::npos);
    // Training on the empty dataset is a configuration error.
    CHECK(run("train --config " + dir + "/empty.cfg --out " + dir) == 2);
    fs::remove_all(dir);
}

TEST_CASE("training writes checkpoints and logs for both operators") {
    const std::string& dir = pipeline_dir();
    CHECK(fs::exists(dir + "/solution.ckpt"));
    CHECK(fs::exists(dir + "/correction.ckpt"));
    CHECK(fs::exists(dir + "/solution_train_log.csv"));
    CHECK(fs::exists(dir + "/correction_train_log.csv"));
    // Log: header plus one row per epoch plus the initial score.
    CHECK(count_lines(dir + "/solution_train_log.csv") == 1 + 1 + 2);
    CHECK(count_lines(dir + "/correction_train_log.csv") == 1 + 1 + 1);
}

TEST_CASE("zero-epoch training still persists the initialization") {
    std::string dir = (fs::current_path() / "cli_zeroep").string();
    fs::remove_all(dir);
    fs::create_directories(dir);
    write_file(dir + "/zero.cfg", tiny_cfg_text() + "[train_solution]\nepochs = 0\n");
    REQUIRE(run("simulate --config " + dir + "/zero.cfg --out " + dir) == 0);
    CHECK(run("train --which solution --config " + dir + "/zero.cfg --out " + dir) == 0);
    CHECK(fs::exists(dir + "/solution.ckpt"));
    fs::remove_all(dir);
}

TEST_CASE("mismatched artifacts are refused with the shape status") {
    const std::string& dir = pipeline_dir();
    std::string scratch = (fs::current_path() / "cli_mismatch").string();
    fs::remove_all(scratch);
    fs::create_directories(scratch);
    // A config asking for a wider operator than the stored checkpoint.
    write_file(scratch + "/wide.cfg", tiny_cfg_text() + "[solution]\nwidths = 5\n");
    std::string log = scratch + "/log.txt";
    CHECK(run("observe --mode ol --config " + scratch + "/wide.cfg --out " + dir, log) == 4);
    CHECK(slurp(log).find("layer_widths 4 vs 5") != std::string::npos);
    // A dataset windowed differently than the config expects.
    write_file(scratch + "/n3.cfg", tiny_cfg_text(3));
    CHECK(run("train --config " + scratch + "/n3.cfg --out " + dir, log) == 4);
    CHECK(slurp(log).find("n=2") != std::string::npos);
    fs::remove_all(scratch);
}

TEST_CASE("observe emits one estimate row per step and cell") {
    const std::string& dir = pipeline_dir();
    std::string log = dir + "/observe_ol.log";
    REQUIRE(run("observe --mode ol --config " + dir + "/tiny.cfg --out " + dir, log) == 0);
    CHECK(fs::exists(dir + "/estimate_ol.csv"));
    CHECK(fs::exists(dir + "/observe_truth.csv"));
    CHECK(count_lines(dir + "/estimate_ol.csv") == 1 + 5 * 16);  // header + horizon x cells
    CHECK(count_lines(dir + "/observe_truth.csv") == 1 + 5 * 16);
    CHECK(slurp(log).find("observer ol") != std::string::npos);

    REQUIRE(run("observe --mode ol-r --config " + dir + "/tiny.cfg --out " + dir) == 0);
    CHECK(fs::exists(dir + "/estimate_ol-r.csv"));
}

TEST_CASE("identity-corrected closed loop reproduces the open loop estimates") {
    const std::string& dir = pipeline_dir();
    REQUIRE(run("observe --mode ol --config " + dir + "/tiny.cfg --out " + dir) == 0);
    REQUIRE(run("observe --mode cl --identity-correction --config " + dir + "/tiny.cfg --out " +
                dir) == 0);
    std::string ol = slurp(dir + "/estimate_ol.csv");
    std::string cl = slurp(dir + "/estimate_cl.csv");
    REQUIRE(!ol.empty());
    CHECK(ol == cl);
}

TEST_CASE("the trained correction produces a different closed loop") {
    const std::string& dir = pipeline_dir();
    REQUIRE(run("observe --mode cl --config " + dir + "/tiny.cfg --out " + dir) == 0);
    std::string cl = slurp(dir + "/estimate_cl.csv");
    REQUIRE(run("observe --mode ol --config " + dir + "/tiny.cfg --out " + dir) == 0);
    std::string ol = slurp(dir + "/estimate_ol.csv");
    CHECK(cl != ol);
}

TEST_CASE("evaluate writes the benchmark tables") {
    const std::string& dir = pipeline_dir();
    std::string log = dir + "/eval.log";
    REQUIRE(run("evaluate --jobs 2 --config " + dir + "/tiny.cfg --out " + dir, log) == 0);
    CHECK(fs::exists(dir + "/benchmark.csv"));
    CHECK(fs::exists(dir + "/summary.csv"));
    // 2 conditions x 3 observers summary cells, plus the header.
    CHECK(count_lines(dir + "/summary.csv") == 1 + 6);
    // 1 scenario x 2 conditions x 3 observers x 5 steps, plus the header.
    CHECK(count_lines(dir + "/benchmark.csv") == 1 + 30);
    CHECK(slurp(log).find("6 cells") != std::string::npos);
}

TEST_CASE("the whole pipeline is reproducible byte for byte") {
    std::string a = (fs::current_path() / "cli_repro_a").string();
    std::string b = (fs::current_path() / "cli_repro_b").string();
    for (const std::string& d : {a, b}) {
        fs::remove_all(d);
        fs::create_directories(d);
        write_file(d + "/tiny.cfg", tiny_cfg_text());
        REQUIRE(run("simulate --config " + d + "/tiny.cfg --out " + d) == 0);
        REQUIRE(run("train --config " + d + "/tiny.cfg --out " + d) == 0);
    }
    CHECK(slurp(a + "/dataset.bin") == slurp(b + "/dataset.bin"));
    CHECK(slurp(a + "/solution.ckpt") == slurp(b + "/solution.ckpt"));
    CHECK(slurp(a + "/correction.ckpt") == slurp(b + "/correction.ckpt"));
    CHECK(!slurp(a + "/solution.ckpt").empty());

    // A different seed changes the data.
    std::string c = (fs::current_path() / "cli_repro_c").string();
    fs::remove_all(c);
    fs::create_directories(c);
    write_file(c + "/tiny.cfg", tiny_cfg_text());
    REQUIRE(run("simulate --seed 6 --config " + c + "/tiny.cfg --out " + c) == 0);
    CHECK(slurp(a + "/dataset.bin") != slurp(c + "/dataset.bin"));
    for (const std::string& d : {a, b, c}) fs::remove_all(d);
}

TEST_CASE("pipeline artifacts clean up after themselves") {
    // Runs last: remove the shared fixture directory.
    fs::remove_all(pipeline_dir());
    SUCCEED();
}
