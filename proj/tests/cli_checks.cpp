// Behavioral checks for the command-line tool: exit codes, output files,
// determinism of generated artifacts. Takes the binary path as argv[1].

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

int failures = 0;

void check(bool ok, const std::string& what) {
    std::cout << (ok ? "[PASS] " : "[FAIL] ") << what << "\n";
    if (!ok) ++failures;
}

int run(const std::string& cmd) {
    const int status = std::system(cmd.c_str());
    if (status == -1) return -1;
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::cerr << "usage: cli_checks <path-to-openncd>\n";
        return 2;
    }
    const std::string cli = argv[1];
    const fs::path work = fs::temp_directory_path() / ("openncd_cli_" + std::to_string(::getpid()));
    fs::create_directories(work);
    const std::string quiet = " > /dev/null 2>&1";

    // gen: happy path, determinism, validation
    const std::string data_a = (work / "a.csv").string();
    const std::string data_b = (work / "b.csv").string();
    check(run(cli + " gen --out " + data_a +
              " --classes 4 --per-class 25 --dim 6 --separation 5 --spread 1 --seed 3" + quiet) == 0,
          "gen exits 0 on valid arguments");
    {
        std::ifstream in(data_a);
        std::string line;
        long rows = 0;
        while (std::getline(in, line)) ++rows;
        check(rows == 100, "gen wrote classes*per_class data rows");
    }
    check(run(cli + " gen --out " + data_b +
              " --classes 4 --per-class 25 --dim 6 --separation 5 --spread 1 --seed 3" + quiet) == 0,
          "gen exits 0 on the second run");
    check(slurp(data_a) == slurp(data_b), "same seed gives byte-identical datasets");
    check(run(cli + " gen --out " + (work / "bad.csv").string() + " --dim 0" + quiet) == 2,
          "gen exits 2 on dim=0");

    // run: config handling and outputs
    const std::string config = (work / "exp.conf").string();
    {
        std::ofstream out(config);
        out << "data.source = csv\n"
            << "data.csv_path = " << data_a << "\n"
            << "split.known_class_fraction = 0.5\n"
            << "split.label_fraction = 0.3\n"
            << "encoder.hidden_dims = 16\n"
            << "encoder.embed_dim = 8\n"
            << "train.epochs = 3\n"
            << "train.batch_size = 16\n"
            << "train.num_prototypes = 12\n"
            << "train.top_k = 3\n";
    }
    const std::string out1 = (work / "run1").string();
    check(run(cli + " run --config " + config + " --out " + out1 + quiet) == 0,
          "run exits 0 on a valid config");
    check(fs::exists(out1 + "/summary.json"), "run writes summary.json");
    check(fs::exists(out1 + "/run.csv"), "run writes run.csv");
    check(fs::exists(out1 + "/checkpoint.txt"), "run writes checkpoint.txt");
    check(fs::exists(out1 + "/config_echo.txt"), "run writes config_echo.txt");

    {
        std::ofstream out(config + ".typo");
        out << "learning_rat = 0.1\n";
    }
    check(run(cli + " run --config " + config + ".typo" + quiet) == 2,
          "run exits 2 on an unknown config key");
    check(run(cli + " run --config " + (work / "missing.conf").string() + quiet) == 2,
          "run exits 2 on a missing config file");

    // determinism: identical config and seed give identical bytes
    const std::string out2 = (work / "run2").string();
    check(run(cli + " run --config " + config + " --out " + out2 + quiet) == 0,
          "second identical run exits 0");
    check(slurp(out1 + "/run.csv") == slurp(out2 + "/run.csv"),
          "identical runs produce byte-identical run.csv");
    check(slurp(out1 + "/summary.json") == slurp(out2 + "/summary.json"),
          "identical runs produce byte-identical summary.json");

    // a seed override changes exactly the four seed keys in the echo
    const std::string out3 = (work / "run3").string();
    check(run(cli + " run --config " + config + " --out " + out3 + " --seed 7" + quiet) == 0,
          "run exits 0 with a seed override");
    {
        std::istringstream before(slurp(out1 + "/config_echo.txt"));
        std::istringstream after(slurp(out3 + "/config_echo.txt"));
        std::string a, b;
        int diffs = 0;
        bool only_seeds = true;
        while (std::getline(before, a) && std::getline(after, b)) {
            if (a == b) continue;
            ++diffs;
            only_seeds = only_seeds && b.find("seed") != std::string::npos;
        }
        check(diffs == 4 && only_seeds, "--seed override changes exactly the seed keys");
    }

    // the echoed config reproduces the run byte-for-byte
    const std::string out4 = (work / "run4").string();
    check(run(cli + " run --config " + out1 + "/config_echo.txt --out " + out4 + quiet) == 0,
          "config echo is runnable");
    check(slurp(out1 + "/summary.json") == slurp(out4 + "/summary.json"),
          "echo-driven rerun reproduces summary.json exactly");

    // eval: re-score the checkpoint against the dataset
    check(run(cli + " eval --checkpoint " + out1 + "/checkpoint.txt --data " + data_a +
              " --out " + (work / "eval1").string() + quiet) == 0,
          "eval exits 0 on a valid checkpoint");
    check(fs::exists(work / "eval1" / "eval.json"), "eval writes eval.json");
    check(run(cli + " eval --checkpoint " + (work / "nope.txt").string() + " --data " + data_a +
              quiet) == 1,
          "eval exits 1 on a missing checkpoint");

    // sweep: aggregate rows, one per value
    const std::string sweep_out = (work / "sweep").string();
    check(run(cli + " sweep --config " + config + " --param train.reg_weight --values 0,1" +
              " --out " + sweep_out + quiet) == 0,
          "sweep exits 0 on a sweepable key");
    {
        std::ifstream in(sweep_out + "/sweep.csv");
        std::string line;
        long rows = 0;
        while (std::getline(in, line)) ++rows;
        check(rows == 3, "sweep aggregate has a header plus one row per value");
    }
    check(fs::exists(sweep_out + "/train.reg_weight=0/summary.json"),
          "sweep writes per-value run directories");
    check(run(cli + " sweep --config " + config + " --param train.epochs --values 1,2" + quiet) == 2,
          "sweep exits 2 on a non-sweepable key");
    check(run(cli + " sweep --config " + config + " --param train.reg_weight --values ''" + quiet) ==
              2,
          "sweep exits 2 on an empty value list");

    // parallel sweep produces the same artifacts as the sequential one
    const std::string sweep_par = (work / "sweep_par").string();
    check(run(cli + " sweep --config " + config + " --param train.reg_weight --values 0,1" +
              " --out " + sweep_par + " --parallel" + quiet) == 0,
          "parallel sweep exits 0");
    check(slurp(sweep_par + "/sweep.csv") == slurp(sweep_out + "/sweep.csv"),
          "parallel and sequential sweeps agree");

    // usage errors
    check(run(cli + " frobnicate" + quiet) == 2, "unknown subcommand exits 2");
    check(run(cli + " run" + quiet) == 2, "missing required --config exits 2");

    fs::remove_all(work);
    std::cout << (failures == 0 ? "cli checks passed\n" : "cli checks FAILED\n");
    return failures == 0 ? 0 : 1;
}
