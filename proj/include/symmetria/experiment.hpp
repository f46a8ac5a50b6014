#pragma once
// End-to-end experiment plumbing: dataset preparation, architecture assembly,
// the train/eval/inspect entry points behind the CLI, and the run-directory
// artifacts (config copy, version string, metrics CSV, checkpoint, symmetry
// report). Every artifact write is atomic (temp file + rename) and every
// byte written is a pure function of the configuration, so re-running a
// config reproduces the directory exactly.
#include <string>

#include "symmetria/config.hpp"
#include "symmetria/data.hpp"
#include "symmetria/layers.hpp"
#include "symmetria/priors.hpp"
#include "symmetria/training.hpp"

namespace symmetria {

struct ExperimentError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline constexpr const char* kVersionString = "symmetria 0.1.0";

struct PreparedData {
    Dataset train, test;
};

// generate or load both splits, apply the configured transform, standardise
PreparedData prepare_data(const ExperimentConfig& cfg);

// architecture with shapes filled in from the data; parameters initialised
// from the training seed
Network make_network(const ExperimentConfig& cfg, const Dataset& train);

struct RunSummary {
    std::string out_dir;
    int epochs_run = 0;
    double test_acc = 0, test_nll = 0;
};

// full training run into cfg.output_dir; resume=true continues from an
// existing checkpoint (config must match exactly)
RunSummary run_experiment(const ExperimentConfig& cfg, bool resume = false);

// metrics of a stored checkpoint on one split ("train" | "test"), as JSON
std::string eval_checkpoint(const std::string& ckpt_path, const std::string& split);

struct InspectResult {
    std::string summary_text;  // human-readable state + precision table
    std::string report_json;   // symmetry report (empty unless recomputed)
};

// checkpoint state; recompute_report additionally rebuilds the dataset and
// runs a curvature sweep to produce the per-layer symmetry attribution
InspectResult inspect_checkpoint(const std::string& ckpt_path, bool recompute_report);

}  // namespace symmetria
