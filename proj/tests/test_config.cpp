#include <cstdio>
#include <fstream>
#include <string>

#include "doctest.h"
#include "symmetria/config.hpp"

using namespace symmetria;

TEST_SUITE("config") {

TEST_CASE("minimal document fills documented defaults") {
    const ExperimentConfig cfg = parse_config(R"({"task": {}})");
    CHECK(cfg.task_kind == TaskKind::Glyphs);
    CHECK(cfg.task.canvas == 12);
    CHECK(cfg.task.label_mode == LabelMode::ClassOnly);
    CHECK(cfg.task.transform == TransformKind::None);
    CHECK(cfg.task.max_translate == 3);
    CHECK(cfg.task.seed == 1);
    CHECK(cfg.train_size == 4000);
    CHECK(cfg.test_size == 1000);
    CHECK(cfg.arch.alpha == 4);
    CHECK(cfg.arch.filter_size == 3);
    REQUIRE(cfg.arch.menus.size() == 1);
    CHECK(cfg.arch.menus[0] == std::vector<BranchKind>{BranchKind::FC, BranchKind::CONV});
    CHECK(cfg.prior.sigma_init == 1.0);
    CHECK(cfg.prior.s_placement == PriorPlacement::OnAnchorValues);
    CHECK(cfg.train.mode == TrainMode::Laplace);
    CHECK(cfg.train.epochs == 40);
    CHECK(cfg.train.batch == 128);
    CHECK(cfg.output_dir == "runs/out");

    CHECK_THROWS_WITH_AS(parse_config("{}"), doctest::Contains("config.task is required"),
                         ConfigError);
}

TEST_CASE("unknown keys are rejected with their path") {
    CHECK_THROWS_WITH_AS(parse_config(R"({"task": {"seeed": 3}})"),
                         doctest::Contains("unknown key 'config.task.seeed'"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config(R"({"task": {}, "outputs": "x"})"),
                         doctest::Contains("unknown key 'config.outputs'"), ConfigError);
}

TEST_CASE("type errors carry the full path") {
    CHECK_THROWS_WITH_AS(parse_config(R"({"task": {"canvas": "big"}})"),
                         doctest::Contains("config.task.canvas must be an integer"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config(R"({"task": {}, "train": {"lr": "fast"}})"),
                         doctest::Contains("config.train.lr must be a number"), ConfigError);
    CHECK_THROWS_WITH_AS(
        parse_config(R"({"task": {}, "architecture": {"trainable_locations": 1}})"),
        doctest::Contains("config.architecture.trainable_locations must be a boolean"),
        ConfigError);
    CHECK_THROWS_AS(parse_config("not json"), ConfigError);
}

TEST_CASE("name-valued fields parse and reject unknowns") {
    const ExperimentConfig cfg = parse_config(R"({
        "task": {"label_mode": "class_and_quadrant", "transform": "rotate90"},
        "prior": {"s_placement": "lengthscales"},
        "train": {"mode": "map"}
    })");
    CHECK(cfg.task.label_mode == LabelMode::ClassAndQuadrant);
    CHECK(cfg.task.transform == TransformKind::Rotate90);
    CHECK(cfg.prior.s_placement == PriorPlacement::OnLengthscales);
    CHECK(cfg.train.mode == TrainMode::Map);

    CHECK_THROWS_WITH_AS(parse_config(R"({"task": {"label_mode": "glyph"}})"),
                         doctest::Contains("config.task.label_mode"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config(R"({"task": {}, "train": {"mode": "vi"}})"),
                         doctest::Contains("config.train.mode"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config(R"({"task": {}, "prior": {"s_placement": "basis"}})"),
                         doctest::Contains("config.prior.s_placement"), ConfigError);
}

TEST_CASE("menus accept broadcast and per-layer forms") {
    const ExperimentConfig one = parse_config(
        R"({"task": {}, "architecture": {"menus": ["FC", "GCONV"]}})");
    REQUIRE(one.arch.menus.size() == 1);
    CHECK(one.arch.menus[0] == std::vector<BranchKind>{BranchKind::FC, BranchKind::GCONV});

    const ExperimentConfig two = parse_config(
        R"({"task": {}, "architecture": {"menus": [["CONV"], ["FC", "SCONV"]]}})");
    REQUIRE(two.arch.menus.size() == 2);
    CHECK(two.arch.menus[1] == std::vector<BranchKind>{BranchKind::FC, BranchKind::SCONV});

    CHECK_THROWS_WITH_AS(
        parse_config(R"({"task": {}, "architecture": {"menus": ["FC", "DECONV"]}})"),
        doctest::Contains("config.architecture.menus"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config(R"({"task": {}, "architecture": {"menus": []}})"),
                         doctest::Contains("config.architecture.menus"), ConfigError);

    // wrong per-layer count surfaces when the architecture is instantiated
    ExperimentConfig bad = two;
    bad.arch.spatial = 12;
    bad.arch.in_channels = 1;
    bad.arch.classes = 4;
    CHECK_THROWS_WITH_AS(build_architecture(bad.arch), doctest::Contains("expected 5 branch menus"),
                         LayerError);
}

TEST_CASE("idx tasks require the four paths") {
    CHECK_THROWS_WITH_AS(parse_config(R"({"task": {"kind": "idx"}})"),
                         doctest::Contains("config.task.images is required"), ConfigError);
    const ExperimentConfig cfg = parse_config(R"({"task": {
        "kind": "idx", "images": "a", "labels": "b",
        "test_images": "c", "test_labels": "d"}})");
    CHECK(cfg.task_kind == TaskKind::Idx);
    CHECK(cfg.idx_test_labels == "d");
    CHECK_THROWS_WITH_AS(parse_config(R"({"task": {"kind": "csv"}})"),
                         doctest::Contains("'glyphs' or 'idx'"), ConfigError);
}

TEST_CASE("range validations") {
    CHECK_THROWS_WITH_AS(parse_config(R"({"task": {"train_size": 0}})"),
                         doctest::Contains("sizes must be positive"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config(R"({"task": {}, "train": {"batch": 0}})"),
                         doctest::Contains("batch must be positive"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config(R"({"task": {}, "train": {"epochs": -1}})"),
                         doctest::Contains("epochs must be non-negative"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config(R"({"task": {}, "train": {"hyper_every": 0}})"),
                         doctest::Contains("hyper_every must be at least 1"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config(R"({"task": {}, "architecture": {"filter_size": 4}})"),
                         doctest::Contains("filter_size must be odd"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config(R"({"task": {}, "architecture": {"alpha": 0}})"),
                         doctest::Contains("alpha must be positive"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config(R"({"task": {}, "prior": {"sigma_init": 0}})"),
                         doctest::Contains("sigma_init must be positive"), ConfigError);
}

TEST_CASE("canonical serialisation is a fixed point") {
    const ExperimentConfig cfg = parse_config(R"({
        "task": {"label_mode": "class_and_quadrant", "transform": "translate", "seed": 7},
        "architecture": {"alpha": 2, "menus": ["FC", "CONV", "GCONV"]},
        "train": {"mode": "laplace", "epochs": 3, "batch": 16},
        "output_dir": "runs/fixed"
    })");
    const std::string canon = cfg.canonical_json();
    const ExperimentConfig reparsed = parse_config(canon);
    CHECK(reparsed.canonical_json() == canon);
    CHECK(canon.find("\"output_dir\": \"runs/fixed\"") != std::string::npos);
}

TEST_CASE("load_config reads files and reports missing ones") {
    CHECK_THROWS_WITH_AS(load_config("definitely_missing.json"),
                         doctest::Contains("cannot open config"), ConfigError);
    const std::string path = "t_cfg.json";
    {
        std::ofstream os(path);
        os << R"({"task": {"seed": 11}})";
    }
    const ExperimentConfig cfg = load_config(path);
    std::remove(path.c_str());
    CHECK(cfg.task.seed == 11);
}

}  // TEST_SUITE
