#pragma once
// Two-level optimisation. Inner level: Adam on the weights against the MAP
// objective (full-data scaled minibatch NLL plus the Gaussian prior terms).
// Outer level: per-block log precisions against the Laplace
// marginal-likelihood estimate, refreshed from a full curvature sweep on a
// fixed cadence. With the curvature spectrum held fixed the objective is
// separable and strictly convex in each block's log precision, so the hyper
// step moves every block to its exact coordinate minimiser, clipped to a
// trust region — a stale-spectrum step can never increase the objective it
// was computed from. Checkpoints snapshot every piece of optimiser state at
// epoch boundaries; together with per-epoch RNG substreams this makes
// resumption bit-exact.
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "symmetria/data.hpp"
#include "symmetria/laplace.hpp"
#include "symmetria/layers.hpp"
#include "symmetria/priors.hpp"

namespace symmetria {

struct TrainError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class TrainMode { Map, Laplace };

std::string train_mode_name(TrainMode m);
TrainMode train_mode_from(const std::string& s);

struct TrainConfig {
    TrainMode mode = TrainMode::Laplace;
    int epochs = 40;
    int batch = 128;
    double lr = 0.01;        // inner Adam, cosine-decayed to zero over `epochs`
    double hyper_lr = 0.1;   // trust-region half-width per hyper step (nats)
    int burnin = 10;         // epochs before the first hyper step
    int hyper_every = 5;     // hyper cadence once past burn-in
    int eval_chunk = 128;    // evaluation minibatch bound (memory, not math)
    int kfac_chunk = 64;     // curvature sweep chunk
    uint64_t seed = 0;       // shuffle streams; parameter init happens elsewhere
};

struct EvalResult {
    double nll = 0;  // mean per-sample negative log-likelihood
    double acc = 0;
};

EvalResult evaluate(const Network& net, const Dataset& d, int chunk = 128);

struct MetricsRow {
    int epoch = 0;  // 0-based
    double train_nll = 0;  // mean over the epoch's optimisation batches
    double test_nll = 0;
    double test_acc = 0;
    bool has_marglik = false;  // only on epochs that ran a hyper step
    double marglik = 0;
    std::vector<double> rhos;  // learnable blocks, PriorSet order
};

std::string metrics_header(const PriorSet& priors);
std::string metrics_csv_row(const MetricsRow& r);

// Complete optimiser snapshot at an epoch boundary. `config_json` is an
// opaque payload (the run configuration) so a checkpoint is self-describing.
struct Checkpoint {
    uint32_t version = 2;
    std::string config_json;
    int epoch_next = 0;
    ParamStore params;
    int64_t adam_t = 0;
    std::map<std::string, Tensor> adam_m, adam_v;
    std::vector<double> rhos;   // all prior blocks, PriorSet order
    int64_t hyper_t = 0;        // hyper steps taken so far
};

void save_checkpoint(const Checkpoint& ck, const std::string& path);  // atomic
Checkpoint load_checkpoint(const std::string& path);

struct TrainHooks {
    // called after every completed epoch with the metrics row and the
    // up-to-date checkpoint state (callers persist them as they see fit)
    std::function<void(const MetricsRow&, const Checkpoint&)> on_epoch;
};

struct TrainResult {
    std::vector<MetricsRow> rows;  // epochs executed by this call
};

// Runs epochs [ck.epoch_next, cfg.epochs). A default-constructed checkpoint
// starts fresh from the network's current parameters; a loaded one restores
// weights, moments and precisions exactly and continues. Throws TrainError
// (with the epoch) if the objective stops being finite.
TrainResult train(Network& net, PriorSet& priors, const Dataset& dtrain, const Dataset& dtest,
                  const TrainConfig& cfg, Checkpoint& ck, const TrainHooks& hooks = {});

}  // namespace symmetria
