#include <doctest.h>

#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace {

const char* cli() { return OBPUF_CLI_PATH; }

int run(const std::string& args) {
    const std::string cmd = std::string(cli()) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("obpuf_cli_test_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter()++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    static int& counter() {
        static int c = 0;
        return c;
    }
};

double csv_value(const std::string& text, const std::string& key) {
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.rfind(key + ",", 0) == 0) return std::stod(line.substr(key.size() + 1));
    }
    FAIL("key not in csv: ", key);
    return 0;
}

}  // namespace

TEST_SUITE_BEGIN("cli");

TEST_CASE("usage errors exit with 2") {
    CHECK(run("--definitely-not-a-flag") == 2);
    CHECK(run("") == 2);  // a subcommand is required
    CHECK(run("design --p 5 --m 2") == 2);  // p > 2^m
}

TEST_CASE("design reports the divergence statistics") {
    TempDir dir;
    CHECK(run("--seed 5 --out " + dir.path.string() + " design --samples 3000") == 0);
    const auto report = slurp(dir.path / "design_report.csv");
    CHECK(report.rfind("# obpuf", 0) == 0);
    CHECK(csv_value(report, "challenge_side_mean_fhd") > 0.45);
    CHECK(csv_value(report, "response_side_mean_fhd") > 0.45);
    CHECK(fs::exists(dir.path / "pattern_set.json"));
    CHECK(fs::exists(dir.path / "design_fhd_hist.csv"));

    CHECK(run("--seed 5 --out " + dir.path.string() +
              " design --samples 3000 --adversarial-first-positions") == 0);
    CHECK(csv_value(slurp(dir.path / "design_report.csv"), "challenge_side_mean_fhd") <=
          0.05);
}

TEST_CASE("capability emits the table and the discrepancy report") {
    TempDir dir;
    CHECK(run("--seed 5 --out " + dir.path.string() + " capability") == 0);
    const auto table = slurp(dir.path / "capability.csv");
    CHECK(table.find("n_ins,p,n_mismatch,target_eer,n,n_eer") != std::string::npos);
    // 7 configs x 3 targets plus comment and header
    CHECK(std::count(table.begin(), table.end(), '\n') == 23);
    const auto disc = slurp(dir.path / "capability_discrepancy.csv");
    CHECK(std::count(disc.begin(), disc.end(), '\n') == 23);
    // the (4,4,0) block reproduces its reference points
    CHECK(disc.find("4,4,0,1e-06,599,599,0,0,158,159,1") != std::string::npos);
}

TEST_CASE("protocol runs both populations") {
    TempDir dir;
    CHECK(run("--seed 5 --out " + dir.path.string() +
              " protocol --sessions 8 --impostor-sessions 8") == 0);
    const auto summary = slurp(dir.path / "protocol_summary.csv");
    CHECK(summary.find("genuine,8,8,0") != std::string::npos);
    CHECK(summary.find("impostor,8,0,8") != std::string::npos);
    CHECK(fs::exists(dir.path / "transcripts.jsonl"));
    CHECK(fs::exists(dir.path / "enrollment.json"));
}

TEST_CASE("attack produces a campaign row and trace") {
    TempDir dir;
    CHECK(run("--seed 5 --out " + dir.path.string() +
              " attack --family fixed --n-ins 2 --p 2 --sessions 2 --rounds 60 "
              "--generations 5 --test-crps 500") == 0);
    const auto table = slurp(dir.path / "campaign.csv");
    CHECK(table.find("run,family") != std::string::npos);
    CHECK(table.find("0,fixed,2,2,3,0,2,5,60,") != std::string::npos);
    CHECK(fs::exists(dir.path / "trace_run0.csv"));
    CHECK(fs::exists(dir.path / "campaign_timing.csv"));
}

TEST_CASE("reruns with the same seed are byte-identical") {
    TempDir a, b;
    const std::string flags =
        " capability --targets 1e-6 --configs \"2,2,0;8,4,1\"";
    CHECK(run("--seed 99 --out " + a.path.string() + flags) == 0);
    CHECK(run("--seed 99 --out " + b.path.string() + flags) == 0);
    CHECK(slurp(a.path / "capability.csv") == slurp(b.path / "capability.csv"));

    const std::string design = " design --samples 2000";
    CHECK(run("--seed 99 --out " + a.path.string() + design) == 0);
    CHECK(run("--seed 99 --out " + b.path.string() + design) == 0);
    CHECK(slurp(a.path / "pattern_set.json") == slurp(b.path / "pattern_set.json"));
    CHECK(slurp(a.path / "design_report.csv") == slurp(b.path / "design_report.csv"));

    const std::string attack =
        " attack --family reconfigurable --n-ins 2 --p 2 --xors 2 --sessions 2 "
        "--rounds 40 --generations 4 --test-crps 400";
    CHECK(run("--seed 99 --out " + a.path.string() + attack) == 0);
    CHECK(run("--seed 99 --out " + b.path.string() + attack) == 0);
    CHECK(slurp(a.path / "campaign.csv") == slurp(b.path / "campaign.csv"));
}

TEST_CASE("trace mode emits per-generation prediction accuracy for several runs") {
    TempDir dir;
    CHECK(run("--seed 5 --out " + dir.path.string() +
              " attack --family reconfigurable --n-ins 2 --p 2 --xors 2 --sessions 2 "
              "--rounds 40 --generations 4 --test-crps 400 --runs 2 --fig8") == 0);
    for (int r = 0; r < 2; ++r) {
        const auto trace = slurp(dir.path / ("trace_run" + std::to_string(r) + ".csv"));
        CHECK(trace.find("generation,best_fitness,p_pred") != std::string::npos);
        CHECK(std::count(trace.begin(), trace.end(), '\n') == 6);  // comment+header+4 gens
    }
}

TEST_CASE("per-bit comparison mode runs") {
    TempDir dir;
    CHECK(run("--seed 5 --out " + dir.path.string() +
              " attack --family fixed --n-ins 2 --p 2 --sessions 2 --rounds 40 "
              "--generations 3 --test-crps 300 --per-bit") == 0);
    CHECK(slurp(dir.path / "campaign.csv").find("0,fixed,2,2") != std::string::npos);
}

TEST_CASE("socket and in-process transports leave identical transcripts") {
    TempDir a, b;
    const std::string base =
        " protocol --sessions 3 --impostor-sessions 1 --n 10 --n-th 10";
    CHECK(run("--seed 12 --out " + a.path.string() + base + " --transport inproc") == 0);
    CHECK(run("--seed 12 --out " + b.path.string() + base + " --transport socket") == 0);
    CHECK(slurp(a.path / "transcripts.jsonl") == slurp(b.path / "transcripts.jsonl"));
}

TEST_CASE("json format adds a machine-readable capability table") {
    TempDir dir;
    CHECK(run("--seed 5 --out " + dir.path.string() +
              " --format json capability --targets 1e-6 --configs \"4,4,0\"") == 0);
    const auto json = slurp(dir.path / "capability.json");
    CHECK(json.find("\"n\": 599") != std::string::npos);
}

TEST_CASE("empirical trials add distance histograms") {
    TempDir dir;
    CHECK(run("--seed 5 --out " + dir.path.string() +
              " capability --targets 1e-6 --configs \"4,4,0\" --empirical-trials 3000") ==
          0);
    const auto emp = slurp(dir.path / "empirical_distances.csv");
    CHECK(emp.find("p_intra_emp") != std::string::npos);
    const auto hist = slurp(dir.path / "distance_hist.csv");
    // one bucket row per HD value 0..n_ins
    CHECK(std::count(hist.begin(), hist.end(), '\n') == 2 + 5);
}

TEST_CASE("config files provide defaults that flags override") {
    TempDir dir;
    {
        std::ofstream cfg(dir.path / "cfg.json");
        cfg << R"({"samples": 2000, "m": 4})";
    }
    CHECK(run("--seed 7 --out " + dir.path.string() + " --config " +
              (dir.path / "cfg.json").string() + " design") == 0);
    const auto set = slurp(dir.path / "pattern_set.json");
    CHECK(set.find("\"m\": 4") != std::string::npos);
}

TEST_SUITE_END();
