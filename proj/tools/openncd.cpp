// Command-line front end: run experiments from a key/value config file,
// generate synthetic datasets, sweep a hyperparameter across values, and
// re-score saved checkpoints. Exit codes: 0 success, 1 runtime failure,
// 2 usage or configuration error.

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "openncd/config.hpp"
#include "openncd/data.hpp"
#include "openncd/experiment.hpp"

namespace fs = std::filesystem;
using namespace openncd;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

std::string output_root() {
    if (const char* env = std::getenv("OPENNCD_OUT_ROOT")) return env;
    return "runs";
}

std::string default_out_dir(const std::string& config_path, const std::string& suffix) {
    return output_root() + "/" + fs::path(config_path).stem().string() + suffix;
}

void print_final(const RunRecord& record) {
    const EpochRow& last = record.rows.back();
    std::cout << "known_acc=" << last.eval.known_acc << " novel_acc=" << last.eval.novel_acc
              << " all_acc=" << last.eval.all_acc << " nmi=" << last.eval.nmi
              << " estimated_class_count=" << record.estimated_class_count << "\n";
}

// Executes one configured run and writes its artifacts into out_dir.
RunRecord run_to_dir(const ExperimentConfig& cfg, const std::string& out_dir) {
    fs::create_directories(out_dir);
    Checkpoint ck;
    RunRecord record = run_experiment(cfg, &ck);
    write_run_csv(record, out_dir + "/run.csv");
    write_summary_json(record, out_dir + "/summary.json");
    write_config_echo(record, out_dir + "/config_echo.txt");
    save_checkpoint(ck, out_dir + "/checkpoint.txt");
    for (const std::string& w : record.warnings) std::cerr << "warning: " << w << "\n";
    return record;
}

struct CommonRunArgs {
    std::string config_path;
    std::string out_dir;
    std::vector<std::string> overrides;
    long long seed = -1;
};

ExperimentConfig assemble_config(const CommonRunArgs& args) {
    ExperimentConfig cfg = load_config(args.config_path);
    for (const std::string& assignment : args.overrides) apply_override(cfg, assignment);
    if (args.seed >= 0) set_master_seed(cfg, static_cast<uint64_t>(args.seed));
    return cfg;
}

int cmd_run(const CommonRunArgs& args) {
    const ExperimentConfig cfg = assemble_config(args);
    const std::string out =
        args.out_dir.empty() ? default_out_dir(args.config_path, "") : args.out_dir;
    const RunRecord record = run_to_dir(cfg, out);
    print_final(record);
    std::cout << "outputs in " << out << "\n";
    return kExitOk;
}

int cmd_gen(const std::string& out_path, int classes, int per_class, int dim, double separation,
            double spread, long long seed, bool header) {
    if (classes < 1 || per_class < 1 || dim < 1)
        throw ConfigError("gen: classes, per-class and dim must be positive");
    if (!(separation > 0.0) || !(spread > 0.0))
        throw ConfigError("gen: separation and spread must be positive");
    const Dataset ds =
        generate_blobs(classes, per_class, dim, separation, spread, static_cast<uint64_t>(seed));
    if (const fs::path parent = fs::path(out_path).parent_path(); !parent.empty())
        fs::create_directories(parent);
    save_csv(ds, out_path, header);
    std::cout << "wrote " << ds.size() << " rows to " << out_path << "\n";
    return kExitOk;
}

int cmd_sweep(const CommonRunArgs& args, const std::string& param, const std::string& values_arg,
              bool parallel) {
    if (!is_sweepable(param))
        throw ConfigError("sweep: '" + param +
                          "' is not sweepable (use train.reg_weight, train.ce_weight, "
                          "train.temperature, train.top_k, train.num_prototypes, "
                          "train.noise_std or train.learning_rate)");
    std::vector<std::string> values;
    {
        std::stringstream ss(values_arg);
        std::string v;
        while (std::getline(ss, v, ','))
            if (!v.empty()) values.push_back(v);
    }
    if (values.empty()) throw ConfigError("sweep: empty value list");

    const ExperimentConfig base = assemble_config(args);
    const std::string out =
        args.out_dir.empty() ? default_out_dir(args.config_path, "-sweep") : args.out_dir;
    fs::create_directories(out);

    std::vector<std::string> run_dirs;
    for (const std::string& v : values) {
        ExperimentConfig cfg = base;
        config_set(cfg, param, v);  // validates the value before any child starts
        run_dirs.push_back(out + "/" + param + "=" + v);
    }

    if (!parallel) {
        for (size_t i = 0; i < values.size(); ++i) {
            ExperimentConfig cfg = base;
            config_set(cfg, param, values[i]);
            run_to_dir(cfg, run_dirs[i]);
        }
    } else {
        // One process per value; disjoint output directories, no shared state.
        std::vector<pid_t> children;
        for (size_t i = 0; i < values.size(); ++i) {
            const pid_t pid = fork();
            if (pid < 0) throw std::runtime_error("sweep: fork failed");
            if (pid == 0) {
                int code = kExitOk;
                try {
                    ExperimentConfig cfg = base;
                    config_set(cfg, param, values[i]);
                    run_to_dir(cfg, run_dirs[i]);
                } catch (const std::exception& err) {
                    std::cerr << "sweep worker " << values[i] << ": " << err.what() << "\n";
                    code = kExitRuntime;
                }
                _exit(code);
            }
            children.push_back(pid);
        }
        bool failed = false;
        for (const pid_t pid : children) {
            int status = 0;
            waitpid(pid, &status, 0);
            failed = failed || !WIFEXITED(status) || WEXITSTATUS(status) != 0;
        }
        if (failed) throw std::runtime_error("sweep: a worker run failed");
    }

    // Aggregate final scores, one row per value.
    std::ofstream agg(out + "/sweep.csv");
    if (!agg) throw std::runtime_error("cannot write sweep.csv");
    agg << "param,value,known_acc,novel_acc,all_acc,nmi,estimated_class_count\n";
    for (size_t i = 0; i < values.size(); ++i) {
        std::ifstream in(run_dirs[i] + "/summary.json");
        if (!in) throw std::runtime_error("missing summary for value " + values[i]);
        const auto summary = nlohmann::json::parse(in);
        const auto& fin = summary.at("final");
        agg << param << ',' << values[i] << ',' << fin.at("known_acc").dump() << ','
            << fin.at("novel_acc").dump() << ',' << fin.at("all_acc").dump() << ','
            << fin.at("nmi").dump() << ',' << summary.at("estimated_class_count").dump() << "\n";
    }
    std::cout << "sweep outputs in " << out << "\n";
    return kExitOk;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& data_path,
             const std::string& mask_path, bool header, const std::string& out_dir) {
    const Checkpoint ck = load_checkpoint(checkpoint_path);
    Dataset ds = load_csv(data_path, header);
    const bool masks_given = !mask_path.empty();
    if (masks_given) load_masks(ds, mask_path);
    const EvalReport report = evaluate_checkpoint(ck, ds, masks_given);
    std::cout << "known_acc=" << report.known_acc << " novel_acc=" << report.novel_acc
              << " all_acc=" << report.all_acc << " nmi=" << report.nmi
              << " estimated_class_count=" << report.estimated_class_count << "\n";
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        std::ofstream out(out_dir + "/eval.json");
        if (!out) throw std::runtime_error("cannot write eval.json");
        out << eval_to_json(report).dump(2) << "\n";
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Open-world semi-supervised training with prototype grouping"};
    app.require_subcommand(1);

    CommonRunArgs run_args;
    auto* run = app.add_subcommand("run", "Train from a config file and write run reports");
    run->add_option("--config", run_args.config_path, "Config file path")->required();
    run->add_option("--out", run_args.out_dir, "Output directory");
    run->add_option("--set", run_args.overrides, "Override as key=value (repeatable)");
    run->add_option("--seed", run_args.seed, "Master seed (data, split, encoder, training)");

    std::string gen_out;
    int gen_classes = 10, gen_per_class = 200, gen_dim = 16;
    double gen_separation = 6.0, gen_spread = 1.0;
    long long gen_seed = 1;
    bool gen_header = false;
    auto* gen = app.add_subcommand("gen", "Generate a synthetic blob dataset CSV");
    gen->add_option("--out", gen_out, "Output CSV path")->required();
    gen->add_option("--classes", gen_classes, "Number of classes");
    gen->add_option("--per-class", gen_per_class, "Instances per class");
    gen->add_option("--dim", gen_dim, "Feature dimension");
    gen->add_option("--separation", gen_separation, "Minimum distance between class means");
    gen->add_option("--spread", gen_spread, "Within-class noise std");
    gen->add_option("--seed", gen_seed, "Generator seed");
    gen->add_flag("--header", gen_header, "Write a header line");

    CommonRunArgs sweep_args;
    std::string sweep_param, sweep_values;
    bool sweep_parallel = false;
    auto* sweep = app.add_subcommand("sweep", "Run once per value of a hyperparameter");
    sweep->add_option("--config", sweep_args.config_path, "Config file path")->required();
    sweep->add_option("--param", sweep_param, "Sweepable config key")->required();
    sweep->add_option("--values", sweep_values, "Comma-separated values")->required();
    sweep->add_option("--out", sweep_args.out_dir, "Output directory");
    sweep->add_option("--set", sweep_args.overrides, "Override as key=value (repeatable)");
    sweep->add_option("--seed", sweep_args.seed, "Master seed");
    sweep->add_flag("--parallel", sweep_parallel, "One process per value");

    std::string eval_checkpoint, eval_data, eval_masks, eval_out;
    bool eval_header = false;
    auto* eval = app.add_subcommand("eval", "Re-score a checkpoint against a CSV dataset");
    eval->add_option("--checkpoint", eval_checkpoint, "Checkpoint path")->required();
    eval->add_option("--data", eval_data, "CSV dataset path")->required();
    eval->add_option("--masks", eval_masks, "Mask sidecar path");
    eval->add_flag("--header", eval_header, "CSV has a header line");
    eval->add_option("--out", eval_out, "Directory for eval.json");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (run->parsed()) return cmd_run(run_args);
        if (gen->parsed())
            return cmd_gen(gen_out, gen_classes, gen_per_class, gen_dim, gen_separation, gen_spread,
                           gen_seed, gen_header);
        if (sweep->parsed()) return cmd_sweep(sweep_args, sweep_param, sweep_values, sweep_parallel);
        if (eval->parsed()) return cmd_eval(eval_checkpoint, eval_data, eval_masks, eval_header, eval_out);
    } catch (const ConfigError& err) {
        std::cerr << "error: " << err.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << "\n";
        return kExitRuntime;
    }
    return kExitUsage;
}
