#include "symmetria/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "symmetria/curvature.hpp"
#include "symmetria/rng.hpp"

namespace symmetria {

namespace {

constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kAdamEps = 1e-8;
constexpr uint64_t kShuffleSalt = 0x73687566666c65ULL;

void fill_batch(const Dataset& d, const std::vector<int64_t>& order, int64_t first, int64_t B,
                int64_t classes, Tensor& images, Tensor& onehot) {
    const int64_t per = d.images.size() / d.images.dim(0);
    onehot.fill(0.0);
    for (int64_t b = 0; b < B; ++b) {
        const int64_t src = order.empty() ? first + b : order[static_cast<size_t>(first + b)];
        std::copy(d.images.data() + src * per, d.images.data() + (src + 1) * per,
                  images.data() + b * per);
        onehot.flat(b * classes + d.labels[static_cast<size_t>(src)]) = 1.0;
    }
}

double cosine_lr(double lr, int epoch, int total) {
    const double t = static_cast<double>(epoch) / static_cast<double>(total);
    return lr * 0.5 * (1.0 + std::cos(3.14159265358979323846 * t));
}

Tensor& moment(std::map<std::string, Tensor>& m, const std::string& k, const Shape& shape) {
    auto it = m.find(k);
    if (it == m.end()) it = m.emplace(k, Tensor::zeros(shape)).first;
    return it->second;
}

std::string fmt_g(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

// --- checkpoint stream helpers (native-endian binary) ---

void need(std::istream& is, const char* what) {
    if (!is) throw TrainError(std::string("checkpoint: truncated reading ") + what);
}

void put_u32(std::ostream& os, uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }
void put_i64(std::ostream& os, int64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); }
void put_f64s(std::ostream& os, const double* p, size_t n) {
    if (n) os.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n) * 8);
}
void put_str(std::ostream& os, const std::string& s) {
    put_u32(os, static_cast<uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}
void put_tensor(std::ostream& os, const Tensor& t) {
    put_u32(os, static_cast<uint32_t>(t.rank()));
    for (int i = 0; i < t.rank(); ++i) put_i64(os, t.dim(i));
    put_f64s(os, t.data(), static_cast<size_t>(t.size()));
}

uint32_t get_u32(std::istream& is, const char* what) {
    uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 4);
    need(is, what);
    return v;
}
int64_t get_i64(std::istream& is, const char* what) {
    int64_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 8);
    need(is, what);
    return v;
}
void get_f64s(std::istream& is, double* p, size_t n, const char* what) {
    if (n) is.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n) * 8);
    need(is, what);
}
std::string get_str(std::istream& is, const char* what) {
    const uint32_t n = get_u32(is, what);
    if (n > (1u << 24)) throw TrainError("checkpoint: implausible string length");
    std::string s(n, '\0');
    if (n) is.read(s.data(), n);
    need(is, what);
    return s;
}
Tensor get_tensor(std::istream& is, const char* what) {
    const uint32_t rank = get_u32(is, what);
    if (rank > 16) throw TrainError("checkpoint: implausible tensor rank");
    Shape shape(rank);
    int64_t total = 1;
    for (uint32_t i = 0; i < rank; ++i) {
        shape[i] = get_i64(is, what);
        if (shape[i] < 0 || (shape[i] > 0 && total > (1 << 30) / shape[i]))
            throw TrainError("checkpoint: implausible tensor shape");
        total *= shape[i];
    }
    Tensor t(shape);
    get_f64s(is, t.data(), static_cast<size_t>(t.size()), what);
    return t;
}

void put_named_tensors(std::ostream& os, const std::map<std::string, Tensor>& m) {
    put_u32(os, static_cast<uint32_t>(m.size()));
    for (const auto& [k, t] : m) {
        put_str(os, k);
        put_tensor(os, t);
    }
}
std::map<std::string, Tensor> get_named_tensors(std::istream& is, const char* what) {
    const uint32_t n = get_u32(is, what);
    std::map<std::string, Tensor> m;
    for (uint32_t i = 0; i < n; ++i) {
        std::string k = get_str(is, what);
        m.emplace(std::move(k), get_tensor(is, what));
    }
    return m;
}
void put_f64_vec(std::ostream& os, const std::vector<double>& v) {
    put_u32(os, static_cast<uint32_t>(v.size()));
    put_f64s(os, v.data(), v.size());
}
std::vector<double> get_f64_vec(std::istream& is, const char* what) {
    const uint32_t n = get_u32(is, what);
    if (n > (1u << 24)) throw TrainError("checkpoint: implausible vector length");
    std::vector<double> v(n);
    get_f64s(is, v.data(), v.size(), what);
    return v;
}

constexpr char kCkptMagic[8] = {'S', 'Y', 'M', 'C', 'K', 'P', 'T', '1'};

}  // namespace

std::string train_mode_name(TrainMode m) { return m == TrainMode::Map ? "map" : "laplace"; }

TrainMode train_mode_from(const std::string& s) {
    if (s == "map") return TrainMode::Map;
    if (s == "laplace") return TrainMode::Laplace;
    throw TrainError("unknown training mode '" + s + "'");
}

EvalResult evaluate(const Network& net, const Dataset& d, int chunk) {
    if (d.images.empty()) throw TrainError("evaluate: empty dataset");
    const int64_t N = d.images.dim(0);
    if (chunk <= 0) throw TrainError("evaluate: chunk must be positive");
    const int64_t K = d.classes;
    const int64_t main_b = std::min<int64_t>(chunk, N);
    BuiltNet bt = net.build(static_cast<int>(main_b));
    Tensor images({main_b, net.in_channels, 1, net.spatial, net.spatial});
    Tensor onehot({main_b, K});
    double nll = 0;
    int64_t correct = 0, done = 0;
    while (done < N) {
        const int64_t b = std::min<int64_t>(main_b, N - done);
        if (b != images.dim(0)) {  // single tail chunk: rebuild once
            bt = net.build(static_cast<int>(b));
            images = Tensor({b, net.in_channels, 1, net.spatial, net.spatial});
            onehot = Tensor({b, K});
        }
        fill_batch(d, {}, done, b, K, images, onehot);
        bt.g.set_input(bt.input, images);
        bt.g.set_input(bt.onehot, onehot);
        bt.g.forward();
        nll += bt.g.value(bt.nll_sum).flat(0);
        const Tensor& lg = bt.g.value(bt.logits);
        for (int64_t i = 0; i < b; ++i) {
            int64_t best = 0;
            for (int64_t k = 1; k < K; ++k)
                if (lg.flat(i * K + k) > lg.flat(i * K + best)) best = k;
            if (best == d.labels[static_cast<size_t>(done + i)]) ++correct;
        }
        done += b;
    }
    return {nll / static_cast<double>(N), static_cast<double>(correct) / static_cast<double>(N)};
}

std::string metrics_header(const PriorSet& priors) {
    std::string s = "epoch,train_nll,test_nll,test_acc,marglik";
    for (int i : priors.learnable_indices()) s += "," + priors.blocks[static_cast<size_t>(i)].csv_name();
    return s;
}

std::string metrics_csv_row(const MetricsRow& r) {
    std::string s = std::to_string(r.epoch);
    s += "," + fmt_g(r.train_nll) + "," + fmt_g(r.test_nll) + "," + fmt_g(r.test_acc) + ",";
    if (r.has_marglik) s += fmt_g(r.marglik);
    for (double v : r.rhos) s += "," + fmt_g(v);
    return s;
}

void save_checkpoint(const Checkpoint& ck, const std::string& path) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw TrainError("cannot open '" + tmp + "' for writing");
        os.write(kCkptMagic, 8);
        put_u32(os, ck.version);
        put_str(os, ck.config_json);
        put_u32(os, static_cast<uint32_t>(ck.epoch_next));
        put_named_tensors(os, ck.params);
        put_i64(os, ck.adam_t);
        put_named_tensors(os, ck.adam_m);
        put_named_tensors(os, ck.adam_v);
        put_f64_vec(os, ck.rhos);
        put_i64(os, ck.hyper_t);
        os.flush();
        if (!os) throw TrainError("write failure on '" + tmp + "'");
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw TrainError("cannot move checkpoint into place at '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw TrainError("cannot open checkpoint '" + path + "'");
    char magic[8];
    is.read(magic, 8);
    need(is, "magic");
    if (std::string(magic, 8) != std::string(kCkptMagic, 8))
        throw TrainError("'" + path + "' is not a checkpoint");
    Checkpoint ck;
    ck.version = get_u32(is, "version");
    if (ck.version != 2) throw TrainError("unsupported checkpoint version");
    ck.config_json = get_str(is, "config");
    ck.epoch_next = static_cast<int>(get_u32(is, "epoch"));
    ck.params = get_named_tensors(is, "parameters");
    ck.adam_t = get_i64(is, "adam step");
    ck.adam_m = get_named_tensors(is, "adam first moments");
    ck.adam_v = get_named_tensors(is, "adam second moments");
    ck.rhos = get_f64_vec(is, "precisions");
    ck.hyper_t = get_i64(is, "hyper step");
    return ck;
}

TrainResult train(Network& net, PriorSet& priors, const Dataset& dtrain, const Dataset& dtest,
                  const TrainConfig& cfg, Checkpoint& ck, const TrainHooks& hooks) {
    if (dtrain.images.empty()) throw TrainError("train: empty dataset");
    const int64_t N = dtrain.images.dim(0);
    const int64_t B = cfg.batch;
    if (B <= 0 || B > N) throw TrainError("batch size must lie in [1, dataset size]");
    const int64_t nb = N / B;
    const int64_t K = dtrain.classes;
    const auto learn = priors.learnable_indices();

    if (ck.epoch_next == 0 && ck.params.empty()) {
        ck.params = net.params;
        ck.rhos.resize(priors.blocks.size());
        for (size_t i = 0; i < priors.blocks.size(); ++i) ck.rhos[i] = priors.blocks[i].rho;
    } else {
        if (ck.params.size() != net.params.size())
            throw TrainError("checkpoint does not match the architecture (parameter count)");
        for (const auto& [name, t] : ck.params) {
            auto it = net.params.find(name);
            if (it == net.params.end() || it->second.shape() != t.shape())
                throw TrainError("checkpoint parameter '" + name + "' does not match the architecture");
            it->second = t;
        }
        for (const auto* mp : {&ck.adam_m, &ck.adam_v})
            for (const auto& [name, t] : *mp) {
                auto it = net.params.find(name);
                if (it == net.params.end() || it->second.shape() != t.shape())
                    throw TrainError("checkpoint moment '" + name + "' does not match the architecture");
            }
        if (ck.rhos.size() != priors.blocks.size())
            throw TrainError("checkpoint does not match the prior layout");
        for (size_t i = 0; i < priors.blocks.size(); ++i) priors.blocks[i].rho = ck.rhos[i];
    }

    BuiltNet bt = net.build(static_cast<int>(B));
    Tensor images({B, net.in_channels, 1, net.spatial, net.spatial});
    Tensor onehot({B, K});
    const Tensor seed = Tensor::scalar(1.0);
    std::vector<double> rho_all(priors.blocks.size());

    TrainResult res;
    for (int epoch = ck.epoch_next; epoch < cfg.epochs; ++epoch) {
        std::vector<int64_t> order(static_cast<size_t>(N));
        std::iota(order.begin(), order.end(), 0);
        Rng shuf = Rng::substream(cfg.seed ^ kShuffleSalt, static_cast<uint64_t>(epoch));
        for (int64_t i = N - 1; i > 0; --i)
            std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(shuf.uniform_int(i + 1))]);

        const double lr = cosine_lr(cfg.lr, epoch, cfg.epochs);
        double nll_acc = 0;
        for (int64_t ib = 0; ib < nb; ++ib) {
            fill_batch(dtrain, order, ib * B, B, K, images, onehot);
            bt.g.set_input(bt.input, images);
            bt.g.set_input(bt.onehot, onehot);
            bt.g.forward();
            const double batch_nll = bt.g.value(bt.nll_sum).flat(0);
            if (!std::isfinite(batch_nll))
                throw TrainError("training diverged at epoch " + std::to_string(epoch));
            nll_acc += batch_nll;
            bt.g.backward(bt.nll_sum, seed);
            GradientMap grads = bt.g.leaf_grads();
            const double data_scale = static_cast<double>(N) / static_cast<double>(B);
            for (auto& [name, gt] : grads) gt.scale(data_scale);
            priors.add_neg_log_prior_grad(net.params, grads);

            ck.adam_t += 1;
            const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(ck.adam_t));
            const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(ck.adam_t));
            for (auto& [name, gt] : grads) {
                Tensor& m = moment(ck.adam_m, name, gt.shape());
                Tensor& v = moment(ck.adam_v, name, gt.shape());
                Tensor& p = net.params.at(name);
                for (int64_t i = 0; i < gt.size(); ++i) {
                    const double g = gt.flat(i);
                    m.flat(i) = kBeta1 * m.flat(i) + (1 - kBeta1) * g;
                    v.flat(i) = kBeta2 * v.flat(i) + (1 - kBeta2) * g * g;
                    p.flat(i) -= lr * (m.flat(i) / bc1) / (std::sqrt(v.flat(i) / bc2) + kAdamEps);
                }
            }
        }

        MetricsRow row;
        row.epoch = epoch;
        row.train_nll = nll_acc / static_cast<double>(nb * B);

        const bool hyper = cfg.mode == TrainMode::Laplace && epoch >= cfg.burnin &&
                           (epoch - cfg.burnin) % cfg.hyper_every == 0;
        if (hyper) {
            const double nll_sum = evaluate(net, dtrain, cfg.eval_chunk).nll * static_cast<double>(N);
            const auto curv = kfac_blocks(net, dtrain.images, cfg.kfac_chunk);
            const auto spectra = block_spectra(curv, priors);
            const auto vsq = priors.block_sq_norms(net.params);
            for (size_t i = 0; i < priors.blocks.size(); ++i) rho_all[i] = priors.blocks[i].rho;
            const double base = marglik(nll_sum, priors.blocks, rho_all, vsq, spectra).total;
            if (!std::isfinite(base))
                throw TrainError("marginal likelihood non-finite at epoch " + std::to_string(epoch));

            ck.hyper_t += 1;
            // with the spectrum held fixed the objective is a sum of strictly
            // convex per-block terms, so the update minimises each coordinate
            // exactly (bisection on the monotone derivative) inside a trust
            // region of hyper_lr: moving towards a convex minimiser can only
            // decrease the objective, so every step is monotone, and a block
            // that has converged no longer limits blocks still moving
            std::vector<double> cand = rho_all;
            for (size_t i = 0; i < learn.size(); ++i) {
                const size_t b = static_cast<size_t>(learn[i]);
                const auto& sp = spectra[b];
                const double P = static_cast<double>(priors.blocks[b].P);
                // d/d rho of this block's marglik term; increasing in rho
                const auto slope = [&](double r) {
                    const double alpha = std::exp(r);
                    double s = 0.5 * (alpha * vsq[b] - P + static_cast<double>(sp.zero_dims));
                    for (double h : sp.products) s += 0.5 * alpha / (h + alpha);
                    return s;
                };
                double lo = kRhoMin, hi = kRhoMax;
                if (slope(lo) >= 0.0)
                    hi = lo;
                else if (slope(hi) <= 0.0)
                    lo = hi;
                else
                    for (int it = 0; it < 64 && hi - lo > 1e-12; ++it) {
                        const double mid = 0.5 * (lo + hi);
                        (slope(mid) < 0.0 ? lo : hi) = mid;
                    }
                const double r0 = rho_all[b];
                const double target = 0.5 * (lo + hi);
                cand[b] = std::min(r0 + cfg.hyper_lr, std::max(r0 - cfg.hyper_lr, target));
            }
            for (int li : learn) priors.blocks[static_cast<size_t>(li)].rho = cand[static_cast<size_t>(li)];
            row.has_marglik = true;
            const double accepted = marglik(nll_sum, priors.blocks, cand, vsq, spectra).total;
            if (accepted > base + 1e-9 * (1.0 + std::abs(base)))
                throw TrainError("hyper step increased the objective at epoch " + std::to_string(epoch));
            row.marglik = accepted;
        }

        const EvalResult ev = evaluate(net, dtest, cfg.eval_chunk);
        row.test_nll = ev.nll;
        row.test_acc = ev.acc;
        if (!std::isfinite(row.test_nll))
            throw TrainError("training diverged at epoch " + std::to_string(epoch));
        row.rhos.resize(learn.size());
        for (size_t i = 0; i < learn.size(); ++i)
            row.rhos[i] = priors.blocks[static_cast<size_t>(learn[i])].rho;

        ck.epoch_next = epoch + 1;
        ck.params = net.params;
        ck.rhos.resize(priors.blocks.size());
        for (size_t i = 0; i < priors.blocks.size(); ++i) ck.rhos[i] = priors.blocks[i].rho;

        res.rows.push_back(row);
        if (hooks.on_epoch) hooks.on_epoch(row, ck);
    }
    return res;
}

}  // namespace symmetria
