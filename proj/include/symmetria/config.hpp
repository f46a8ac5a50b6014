#pragma once
// Experiment configuration: one JSON document describing task, architecture,
// priors, optimisation and output location. Parsing is strict — unknown keys
// are rejected with their full path and values are type-checked — and the
// canonical re-serialisation (defaults materialised, keys sorted) is what gets
// copied into run directories and embedded in checkpoints.
#include <string>

#include "symmetria/data.hpp"
#include "symmetria/layers.hpp"
#include "symmetria/priors.hpp"
#include "symmetria/training.hpp"

namespace symmetria {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class TaskKind { Glyphs, Idx };

struct ExperimentConfig {
    TaskKind task_kind = TaskKind::Glyphs;
    TaskSpec task;                          // glyph generator settings
    int train_size = 4000, test_size = 1000;
    std::string idx_images, idx_labels;     // task kind "idx"
    std::string idx_test_images, idx_test_labels;

    ArchConfig arch;    // alpha / filter size / menus; shapes filled from data
    PriorConfig prior;
    TrainConfig train;
    std::string output_dir = "runs/out";

    std::string canonical_json() const;
};

ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);

}  // namespace symmetria
