#include "symmetria/data.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "symmetria/groups.hpp"
#include "symmetria/rng.hpp"

namespace symmetria {

namespace {

int64_t mod(int64_t a, int64_t m) { return ((a % m) + m) % m; }

// four visually distinct glyphs; no two rotations of any pair coincide
constexpr const char* kGlyphs[4][5] = {
    {"#####",
     "..#..",
     "..#..",
     "..#..",
     "..#.."},
    {"#....",
     "#....",
     "#....",
     "#....",
     "#####"},
    {"#...#",
     ".#.#.",
     "..#..",
     ".#.#.",
     "#...#"},
    {"#...#",
     "#...#",
     "#...#",
     "#...#",
     ".###."},
};

uint32_t read_u32be(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw DataError("idx: truncated header");
    return (static_cast<uint32_t>(b[0]) << 24) | (static_cast<uint32_t>(b[1]) << 16) |
           (static_cast<uint32_t>(b[2]) << 8) | static_cast<uint32_t>(b[3]);
}

void write_u32be(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    os.write(reinterpret_cast<char*>(b), 4);
}

}  // namespace

std::string label_mode_name(LabelMode m) {
    return m == LabelMode::ClassOnly ? "class_only" : "class_and_quadrant";
}

LabelMode label_mode_from(const std::string& s) {
    if (s == "class_only") return LabelMode::ClassOnly;
    if (s == "class_and_quadrant") return LabelMode::ClassAndQuadrant;
    throw DataError("unknown label mode '" + s + "'");
}

std::string transform_name(TransformKind t) {
    switch (t) {
        case TransformKind::None: return "none";
        case TransformKind::RandomTranslate: return "translate";
        case TransformKind::Rotate90: return "rotate90";
        case TransformKind::RotateUniform: return "rotate_uniform";
    }
    throw DataError("unknown transform");
}

TransformKind transform_from(const std::string& s) {
    if (s == "none") return TransformKind::None;
    if (s == "translate") return TransformKind::RandomTranslate;
    if (s == "rotate90") return TransformKind::Rotate90;
    if (s == "rotate_uniform") return TransformKind::RotateUniform;
    throw DataError("unknown transform '" + s + "'");
}

int glyph_count() { return 4; }

Tensor glyph_bitmap(int g) {
    if (g < 0 || g >= 4) throw DataError("glyph index out of range");
    Tensor t({5, 5});
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j) t.flat(i * 5 + j) = kGlyphs[g][i][j] == '#' ? 1.0 : 0.0;
    return t;
}

Dataset gen_glyph_quadrant(const TaskSpec& spec, int n) {
    const int X = spec.canvas;
    if (X % 2 != 0 || X < 12) throw DataError("canvas must be even and at least 12");
    const int Q = X / 2;  // quadrant side; glyph is 5x5, jitter keeps it inside
    const int slack = Q - 5;
    if (slack < 1) throw DataError("quadrant too small for a jittered glyph");
    Dataset d;
    d.classes = spec.label_mode == LabelMode::ClassOnly ? 4 : 16;
    d.images = Tensor::zeros({n, 1, X, X});
    d.labels.resize(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        Rng rng = Rng::substream(spec.seed, static_cast<uint64_t>(i));
        int g, q;
        if (spec.label_mode == LabelMode::ClassOnly) {
            g = i % 4;
            q = static_cast<int>(rng.uniform_int(4));
        } else {
            g = (i % 16) / 4;
            q = i % 4;
        }
        const int jx = static_cast<int>(rng.uniform_int(2));
        const int jy = static_cast<int>(rng.uniform_int(2));
        const int ox = (q / 2) * Q + jx, oy = (q % 2) * Q + jy;
        for (int a = 0; a < 5; ++a)
            for (int b = 0; b < 5; ++b)
                if (kGlyphs[g][a][b] == '#')
                    d.images.flat((static_cast<int64_t>(i) * X + (ox + a)) * X + (oy + b)) = 1.0;
        d.labels[static_cast<size_t>(i)] = spec.label_mode == LabelMode::ClassOnly ? g : g * 4 + q;
    }
    return d;
}

Dataset apply_transform(const Dataset& d, TransformKind t, int max_translate, uint64_t seed) {
    Dataset out;
    out.classes = d.classes;
    out.labels = d.labels;
    out.images = Tensor::zeros(d.images.shape());
    const int64_t N = d.images.dim(0), C = d.images.dim(1), H = d.images.dim(2), W = d.images.dim(3);
    for (int64_t i = 0; i < N; ++i) {
        Rng rng = Rng::substream(seed, static_cast<uint64_t>(i) + 0x7ad3c21f);
        switch (t) {
            case TransformKind::None: {
                for (int64_t k = 0; k < C * H * W; ++k)
                    out.images.flat(i * C * H * W + k) = d.images.flat(i * C * H * W + k);
                break;
            }
            case TransformKind::RandomTranslate: {
                const int64_t m = max_translate;
                const int64_t dx = rng.uniform_int(2 * m + 1) - m;
                const int64_t dy = rng.uniform_int(2 * m + 1) - m;
                for (int64_t c = 0; c < C; ++c)
                    for (int64_t x = 0; x < H; ++x)
                        for (int64_t y = 0; y < W; ++y)
                            out.images.flat(((i * C + c) * H + x) * W + y) =
                                d.images.flat(((i * C + c) * H + mod(x - dx, H)) * W + mod(y - dy, W));
                break;
            }
            case TransformKind::Rotate90: {
                const int k = static_cast<int>(rng.uniform_int(4));
                for (int64_t c = 0; c < C; ++c)
                    for (int64_t x = 0; x < H; ++x)
                        for (int64_t y = 0; y < W; ++y) {
                            int rx, ry;
                            rotate_index(k, static_cast<int>(H), static_cast<int>(W),
                                         static_cast<int>(x), static_cast<int>(y), rx, ry);
                            out.images.flat(((i * C + c) * H + rx) * W + ry) =
                                d.images.flat(((i * C + c) * H + x) * W + y);
                        }
                break;
            }
            case TransformKind::RotateUniform: {
                const double th = rng.uniform() * 6.283185307179586;
                const double ct = std::cos(th), st = std::sin(th);
                const double cx = 0.5 * static_cast<double>(H - 1), cy = 0.5 * static_cast<double>(W - 1);
                for (int64_t c = 0; c < C; ++c)
                    for (int64_t x = 0; x < H; ++x)
                        for (int64_t y = 0; y < W; ++y) {
                            // inverse-rotate the target pixel into source coords
                            const double sx = ct * (x - cx) + st * (y - cy) + cx;
                            const double sy = -st * (x - cx) + ct * (y - cy) + cy;
                            const int64_t x0 = static_cast<int64_t>(std::floor(sx));
                            const int64_t y0 = static_cast<int64_t>(std::floor(sy));
                            const double fx = sx - static_cast<double>(x0);
                            const double fy = sy - static_cast<double>(y0);
                            double acc = 0.0;
                            for (int64_t ax = 0; ax <= 1; ++ax)
                                for (int64_t ay = 0; ay <= 1; ++ay) {
                                    const int64_t px = x0 + ax, py = y0 + ay;
                                    if (px < 0 || px >= H || py < 0 || py >= W) continue;
                                    const double wgt = (ax ? fx : 1 - fx) * (ay ? fy : 1 - fy);
                                    acc += wgt * d.images.flat(((i * C + c) * H + px) * W + py);
                                }
                            out.images.flat(((i * C + c) * H + x) * W + y) = acc;
                        }
                break;
            }
        }
    }
    return out;
}

void standardize(Dataset& d) {
    const int64_t n = d.images.size();
    if (n == 0) throw DataError("standardize: empty dataset");
    double mean = 0;
    for (int64_t i = 0; i < n; ++i) mean += d.images.flat(i);
    mean /= static_cast<double>(n);
    double var = 0;
    for (int64_t i = 0; i < n; ++i) {
        const double v = d.images.flat(i) - mean;
        var += v * v;
    }
    const double sd = std::sqrt(var / static_cast<double>(n));
    if (sd <= 0) throw DataError("standardize: zero variance");
    for (int64_t i = 0; i < n; ++i) d.images.flat(i) = (d.images.flat(i) - mean) / sd;
}

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream fi(images_path, std::ios::binary);
    if (!fi) throw DataError("cannot open '" + images_path + "'");
    if (read_u32be(fi) != 0x00000803u) throw DataError("'" + images_path + "': bad image magic");
    const int64_t N = read_u32be(fi), H = read_u32be(fi), W = read_u32be(fi);
    std::vector<unsigned char> buf(static_cast<size_t>(N * H * W));
    fi.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!fi)
        throw DataError("'" + images_path + "': expected " + std::to_string(buf.size()) +
                        " payload bytes, got " + std::to_string(fi.gcount()));

    std::ifstream fl(labels_path, std::ios::binary);
    if (!fl) throw DataError("cannot open '" + labels_path + "'");
    if (read_u32be(fl) != 0x00000801u) throw DataError("'" + labels_path + "': bad label magic");
    const int64_t NL = read_u32be(fl);
    if (NL != N)
        throw DataError("idx: " + std::to_string(N) + " images vs " + std::to_string(NL) + " labels");
    std::vector<unsigned char> lab(static_cast<size_t>(N));
    fl.read(reinterpret_cast<char*>(lab.data()), static_cast<std::streamsize>(lab.size()));
    if (!fl)
        throw DataError("'" + labels_path + "': expected " + std::to_string(lab.size()) +
                        " payload bytes, got " + std::to_string(fl.gcount()));

    Dataset d;
    d.images = Tensor({N, 1, H, W});
    for (int64_t i = 0; i < N * H * W; ++i)
        d.images.flat(i) = static_cast<double>(buf[static_cast<size_t>(i)]) / 255.0;
    d.labels.resize(static_cast<size_t>(N));
    int mx = 0;
    for (int64_t i = 0; i < N; ++i) {
        d.labels[static_cast<size_t>(i)] = lab[static_cast<size_t>(i)];
        mx = std::max(mx, static_cast<int>(lab[static_cast<size_t>(i)]));
    }
    d.classes = mx + 1;
    return d;
}

void write_idx(const Dataset& d, const std::string& images_path, const std::string& labels_path) {
    if (d.images.dim(1) != 1) throw DataError("write_idx: single-channel images only");
    const int64_t N = d.images.dim(0), H = d.images.dim(2), W = d.images.dim(3);
    std::ofstream fi(images_path, std::ios::binary);
    if (!fi) throw DataError("cannot write '" + images_path + "'");
    write_u32be(fi, 0x00000803u);
    write_u32be(fi, static_cast<uint32_t>(N));
    write_u32be(fi, static_cast<uint32_t>(H));
    write_u32be(fi, static_cast<uint32_t>(W));
    for (int64_t i = 0; i < N * H * W; ++i) {
        const double v = std::round(d.images.flat(i) * 255.0);
        const unsigned char b = static_cast<unsigned char>(std::min(255.0, std::max(0.0, v)));
        fi.write(reinterpret_cast<const char*>(&b), 1);
    }
    std::ofstream fl(labels_path, std::ios::binary);
    if (!fl) throw DataError("cannot write '" + labels_path + "'");
    write_u32be(fl, 0x00000801u);
    write_u32be(fl, static_cast<uint32_t>(N));
    for (int64_t i = 0; i < N; ++i) {
        const unsigned char b = static_cast<unsigned char>(d.labels[static_cast<size_t>(i)]);
        fl.write(reinterpret_cast<const char*>(&b), 1);
    }
}

}  // namespace symmetria
