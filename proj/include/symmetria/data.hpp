#pragma once
// Synthetic glyph-in-quadrant tasks plus IDX import/export. The generator
// places one of four 5x5 glyphs into one of the four 6x6 quadrants of the
// canvas with a 0/1-pixel jitter, so all placements of a glyph within a
// quadrant are exact torus translates of each other; label modes expose either
// the glyph class alone or the (glyph, quadrant) product. Transforms augment
// with circular shifts, exact quarter-turns, or bilinear continuous rotation.
#include <cstdint>
#include <string>
#include <vector>

#include "symmetria/tensor.hpp"

namespace symmetria {

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Dataset {
    Tensor images;            // N x C x H x W
    std::vector<int> labels;  // N
    int classes = 0;
};

enum class LabelMode { ClassOnly, ClassAndQuadrant };
enum class TransformKind { None, RandomTranslate, Rotate90, RotateUniform };

std::string label_mode_name(LabelMode m);
LabelMode label_mode_from(const std::string& s);
std::string transform_name(TransformKind t);
TransformKind transform_from(const std::string& s);

struct TaskSpec {
    int canvas = 12;
    LabelMode label_mode = LabelMode::ClassOnly;
    TransformKind transform = TransformKind::None;
    int max_translate = 3;
    uint64_t seed = 1;
};

int glyph_count();
// raw 5x5 bitmap of one glyph (values 0/1)
Tensor glyph_bitmap(int g);

Dataset gen_glyph_quadrant(const TaskSpec& spec, int n);
Dataset apply_transform(const Dataset& d, TransformKind t, int max_translate, uint64_t seed);
void standardize(Dataset& d);  // in-place: subtract mean, divide by std (whole dataset)

// IDX (big-endian magic 0x803 images / 0x801 labels, uint8 payload)
Dataset load_idx(const std::string& images_path, const std::string& labels_path);
void write_idx(const Dataset& d, const std::string& images_path, const std::string& labels_path);

}  // namespace symmetria
