// Command-line front end: train / eval / inspect / check.
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <string>

#include "CLI11.hpp"
#include "symmetria/checks.hpp"
#include "symmetria/config.hpp"
#include "symmetria/experiment.hpp"

namespace {

// SYMMETRIA_THREADS is accepted for interface compatibility; every code path
// is single-threaded and bit-deterministic, so the value does not alter
// results (or speed) and is only validated here.
void read_threads_env() {
    const char* v = std::getenv("SYMMETRIA_THREADS");
    if (v == nullptr) return;
    char* end = nullptr;
    const long n = std::strtol(v, &end, 10);
    if (end == v || *end != '\0' || n < 1)
        std::fprintf(stderr, "warning: ignoring SYMMETRIA_THREADS='%s' (want a positive integer)\n", v);
}

}  // namespace

int main(int argc, char** argv) {
    using namespace symmetria;
    read_threads_env();

    CLI::App app{"symmetria: layer-wise symmetry discovery via Laplace marginal likelihood"};
    app.set_version_flag("--version", std::string(kVersionString));
    app.require_subcommand(1);

    auto* train = app.add_subcommand("train", "train a model from a JSON config");
    std::string config_path, out_dir;
    uint64_t seed = 0;
    bool resume = false;
    train->add_option("--config", config_path, "experiment config (JSON)")->required();
    train->add_option("--seed", seed, "override both the data seed and the training seed");
    train->add_option("--out", out_dir, "override the output directory");
    train->add_flag("--resume", resume, "continue from the checkpoint in the output directory");

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a data split");
    std::string ckpt_path, split = "test";
    eval->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
    eval->add_option("--split", split, "train | test (default test)");

    auto* inspect = app.add_subcommand("inspect", "summarise a checkpoint");
    std::string ins_path;
    bool with_report = false;
    inspect->add_option("--checkpoint", ins_path, "checkpoint file")->required();
    inspect->add_flag("--report", with_report, "recompute the per-layer symmetry attribution");

    auto* check = app.add_subcommand("check", "run a self-verification suite");
    std::string suite;
    uint64_t check_seed = 0;
    check->add_option("--suite", suite, "gradcheck | kfac | equivariance | marglik")->required();
    check->add_option("--seed", check_seed, "suite RNG seed");

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed()) {
            ExperimentConfig cfg = load_config(config_path);
            if (train->count("--seed") > 0) {
                cfg.train.seed = seed;
                cfg.task.seed = seed;
            }
            if (train->count("--out") > 0) cfg.output_dir = out_dir;
            const RunSummary rs = run_experiment(cfg, resume);
            std::printf("run dir      %s\n", rs.out_dir.c_str());
            std::printf("epochs run   %d\n", rs.epochs_run);
            std::printf("test nll     %.6f\n", rs.test_nll);
            std::printf("test acc     %.4f\n", rs.test_acc);
            return 0;
        }
        if (eval->parsed()) {
            std::printf("%s\n", eval_checkpoint(ckpt_path, split).c_str());
            return 0;
        }
        if (inspect->parsed()) {
            const InspectResult r = inspect_checkpoint(ins_path, with_report);
            std::printf("%s", r.summary_text.c_str());
            if (with_report) std::printf("%s\n", r.report_json.c_str());
            return 0;
        }
        // check
        const auto rows = run_check_suite(suite, check_seed);
        std::printf("%s", render_check_table(rows).c_str());
        return all_pass(rows) ? 0 : 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
