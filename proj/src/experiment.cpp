#include "symmetria/experiment.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "symmetria/curvature.hpp"
#include "symmetria/laplace.hpp"
#include "symmetria/rng.hpp"

namespace symmetria {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

void write_atomic(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw ExperimentError("cannot open '" + tmp + "' for writing");
        os << content;
        os.flush();
        if (!os) throw ExperimentError("write failure on '" + tmp + "'");
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw ExperimentError("cannot move '" + tmp + "' into place");
}

void restore_params(Network& net, const Checkpoint& ck) {
    if (ck.params.size() != net.params.size())
        throw ExperimentError("checkpoint does not match the architecture (parameter count)");
    for (const auto& [name, t] : ck.params) {
        auto it = net.params.find(name);
        if (it == net.params.end() || it->second.shape() != t.shape())
            throw ExperimentError("checkpoint parameter '" + name + "' does not match the architecture");
        it->second = t;
    }
}

double branch_sq_norm(const PriorSet& priors, const std::vector<double>& vsq, int layer, int branch) {
    double s = 0;
    for (size_t i = 0; i < priors.blocks.size(); ++i)
        if (priors.blocks[i].layer == layer && priors.blocks[i].branch == branch) s += vsq[i];
    return s;
}

// full symmetry attribution at the network's current weights and precisions
json build_report(const Network& net, const PriorSet& priors, const PreparedData& pd,
                  const ExperimentConfig& cfg) {
    const EvalResult etr = evaluate(net, pd.train, cfg.train.eval_chunk);
    const EvalResult ete = evaluate(net, pd.test, cfg.train.eval_chunk);

    const auto curv = kfac_blocks(net, pd.train.images, cfg.train.kfac_chunk);
    const auto spectra = block_spectra(curv, priors);
    std::vector<double> rho(priors.blocks.size());
    for (size_t i = 0; i < priors.blocks.size(); ++i) rho[i] = priors.blocks[i].rho;
    const auto vsq = priors.block_sq_norms(net.params);
    const double N = static_cast<double>(pd.train.images.dim(0));
    const MarglikParts mp = marglik(etr.nll * N, priors.blocks, rho, vsq, spectra);
    const SymmetryReport rep = symmetry_report(net, priors, rho, spectra);

    json r;
    r["version"] = kVersionString;
    r["mode"] = train_mode_name(cfg.train.mode);
    r["train_nll"] = etr.nll;
    r["train_acc"] = etr.acc;
    r["test_nll"] = ete.nll;
    r["test_acc"] = ete.acc;
    r["marglik"] = {{"total", mp.total},
                    {"nll", mp.nll},
                    {"log_prior", mp.log_prior},
                    {"half_logdet", mp.half_logdet},
                    {"const_term", mp.const_term}};
    json layers = json::array();
    for (const LayerShare& ls : rep.layers) {
        json lj;
        lj["layer"] = ls.layer;
        lj["inferred"] = ls.branches[static_cast<size_t>(ls.dominant)].kind;
        json bs = json::array();
        for (size_t bi = 0; bi < ls.branches.size(); ++bi) {
            const BranchShare& b = ls.branches[bi];
            json bj;
            bj["kind"] = b.kind;
            bj["precision"] = b.precision;
            bj["sq_norm"] = branch_sq_norm(priors, vsq, ls.layer, static_cast<int>(bi));
            bj["gamma"] = b.gamma;
            bj["P"] = b.P;
            bj["gamma_per_param"] = b.P > 0 ? b.gamma / static_cast<double>(b.P) : 0.0;
            bj["share"] = b.share;
            bs.push_back(bj);
        }
        lj["branches"] = bs;
        layers.push_back(lj);
    }
    r["layers"] = layers;
    return r;
}

struct Rebuilt {
    ExperimentConfig cfg;
    PreparedData data;
    Network net;
    PriorSet priors;
};

Rebuilt rebuild_from_checkpoint(const Checkpoint& ck) {
    Rebuilt rb;
    try {
        rb.cfg = parse_config(ck.config_json);
    } catch (const std::exception& ex) {
        throw ExperimentError(std::string("embedded checkpoint config is invalid: ") + ex.what());
    }
    rb.data = prepare_data(rb.cfg);
    rb.net = make_network(rb.cfg, rb.data.train);
    rb.priors = PriorSet::build(rb.net, rb.cfg.prior);
    restore_params(rb.net, ck);
    if (ck.rhos.size() != rb.priors.blocks.size())
        throw ExperimentError("checkpoint does not match the prior layout");
    for (size_t i = 0; i < rb.priors.blocks.size(); ++i) rb.priors.blocks[i].rho = ck.rhos[i];
    return rb;
}

std::string fmt(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

}  // namespace

PreparedData prepare_data(const ExperimentConfig& cfg) {
    PreparedData pd;
    uint64_t train_tseed, test_tseed;
    if (cfg.task_kind == TaskKind::Glyphs) {
        pd.train = gen_glyph_quadrant(cfg.task, cfg.train_size);
        TaskSpec te = cfg.task;
        te.seed = splitmix64(cfg.task.seed ^ 0x7465737453504cULL);  // independent test stream
        pd.test = gen_glyph_quadrant(te, cfg.test_size);
        train_tseed = cfg.task.seed ^ 0x7472616e73ULL;
        test_tseed = te.seed ^ 0x7472616e73ULL;
    } else {
        pd.train = load_idx(cfg.idx_images, cfg.idx_labels);
        pd.test = load_idx(cfg.idx_test_images, cfg.idx_test_labels);
        const int classes = std::max(pd.train.classes, pd.test.classes);
        pd.train.classes = pd.test.classes = classes;
        train_tseed = cfg.task.seed ^ 0x7472616e73ULL;
        test_tseed = splitmix64(cfg.task.seed) ^ 0x7472616e73ULL;
    }
    if (cfg.task.transform != TransformKind::None) {
        pd.train = apply_transform(pd.train, cfg.task.transform, cfg.task.max_translate, train_tseed);
        pd.test = apply_transform(pd.test, cfg.task.transform, cfg.task.max_translate, test_tseed);
    }
    standardize(pd.train);
    standardize(pd.test);
    return pd;
}

Network make_network(const ExperimentConfig& cfg, const Dataset& train) {
    const int64_t H = train.images.dim(2), W = train.images.dim(3);
    if (H != W) throw ExperimentError("architecture requires square images, got " +
                                      std::to_string(H) + "x" + std::to_string(W));
    ArchConfig ac = cfg.arch;
    ac.spatial = static_cast<int>(H);
    ac.in_channels = static_cast<int>(train.images.dim(1));
    ac.classes = train.classes;
    Network net = build_architecture(ac);
    net.init_params(cfg.train.seed);
    return net;
}

RunSummary run_experiment(const ExperimentConfig& cfg, bool resume) {
    const std::string out = cfg.output_dir;
    fs::create_directories(out);
    const std::string canonical = cfg.canonical_json();
    const std::string ckpt_path = out + "/checkpoint.bin";
    const std::string csv_path = out + "/metrics.csv";

    PreparedData pd = prepare_data(cfg);
    Network net = make_network(cfg, pd.train);
    PriorSet priors = PriorSet::build(net, cfg.prior);

    Checkpoint ck;
    bool resumed = false;
    if (resume && fs::exists(ckpt_path)) {
        ck = load_checkpoint(ckpt_path);
        if (ck.config_json != canonical)
            throw ExperimentError("checkpoint in '" + out + "' was produced by a different config");
        resumed = true;
    }
    ck.config_json = canonical;

    write_atomic(out + "/config.json", canonical + "\n");
    write_atomic(out + "/VERSION", std::string(kVersionString) + "\n");
    if (!resumed) write_atomic(csv_path, metrics_header(priors) + "\n");

    TrainHooks hooks;
    hooks.on_epoch = [&](const MetricsRow& row, const Checkpoint& state) {
        std::ofstream os(csv_path, std::ios::app);
        if (!os) throw ExperimentError("cannot append to '" + csv_path + "'");
        os << metrics_csv_row(row) << "\n";
        os.flush();
        if (!os) throw ExperimentError("write failure on '" + csv_path + "'");
        save_checkpoint(state, ckpt_path);
    };

    const TrainResult tr = train(net, priors, pd.train, pd.test, cfg.train, ck, hooks);
    if (ck.epoch_next > 0 && !resumed && tr.rows.empty())
        throw ExperimentError("internal: training produced no metrics");
    if (!fs::exists(ckpt_path)) save_checkpoint(ck, ckpt_path);  // epochs == 0 edge

    const json report = build_report(net, priors, pd, cfg);
    write_atomic(out + "/report.json", report.dump(2) + "\n");

    RunSummary rs;
    rs.out_dir = out;
    rs.epochs_run = static_cast<int>(tr.rows.size());
    rs.test_acc = report["test_acc"].get<double>();
    rs.test_nll = report["test_nll"].get<double>();
    return rs;
}

std::string eval_checkpoint(const std::string& ckpt_path, const std::string& split) {
    if (split != "train" && split != "test")
        throw ExperimentError("split must be 'train' or 'test', got '" + split + "'");
    const Checkpoint ck = load_checkpoint(ckpt_path);
    Rebuilt rb = rebuild_from_checkpoint(ck);
    const Dataset& d = split == "train" ? rb.data.train : rb.data.test;
    const EvalResult ev = evaluate(rb.net, d, rb.cfg.train.eval_chunk);
    json j;
    j["checkpoint"] = ckpt_path;
    j["split"] = split;
    j["examples"] = d.images.dim(0);
    j["nll"] = ev.nll;
    j["acc"] = ev.acc;
    return j.dump(2);
}

InspectResult inspect_checkpoint(const std::string& ckpt_path, bool recompute_report) {
    const Checkpoint ck = load_checkpoint(ckpt_path);
    Rebuilt rb = rebuild_from_checkpoint(ck);

    std::string text;
    text += "checkpoint " + ckpt_path + " (version " + std::to_string(ck.version) + ")\n";
    text += "epochs completed: " + std::to_string(ck.epoch_next) +
            ", inner steps: " + std::to_string(ck.adam_t) +
            ", hyper steps: " + std::to_string(ck.hyper_t) + "\n";
    text += "mode: " + train_mode_name(rb.cfg.train.mode) + "\n\n";
    char line[128];
    std::snprintf(line, sizeof line, "%-18s %12s %10s %10s\n", "block", "sigma^-2", "P", "learnable");
    text += line;
    for (size_t i = 0; i < rb.priors.blocks.size(); ++i) {
        const PriorBlock& b = rb.priors.blocks[i];
        std::snprintf(line, sizeof line, "%-18s %12s %10lld %10s\n", b.name.c_str(),
                      fmt(std::exp(ck.rhos[i])).c_str(), static_cast<long long>(b.P),
                      b.learnable ? "yes" : "no");
        text += line;
    }

    InspectResult res;
    if (recompute_report) {
        const json report = build_report(rb.net, rb.priors, rb.data, rb.cfg);
        res.report_json = report.dump(2);
        text += "\nper-layer attribution (share = normalised gamma/P):\n";
        for (const auto& lj : report["layers"]) {
            std::string shares;
            for (const auto& bj : lj["branches"])
                shares += "  " + bj["kind"].get<std::string>() + " " + fmt(bj["share"].get<double>());
            std::snprintf(line, sizeof line, "L%-3d -> %-8s", lj["layer"].get<int>(),
                          lj["inferred"].get<std::string>().c_str());
            text += line + shares + "\n";
        }
    }
    res.summary_text = text;
    return res;
}

}  // namespace symmetria
