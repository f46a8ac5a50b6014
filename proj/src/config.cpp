#include "symmetria/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace symmetria {

namespace {

using nlohmann::json;

// strict section reader: every access marks its key, close() rejects leftovers
class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_ + " must be an object");
    }

    bool has(const std::string& key) const { return j_.contains(key); }

    int geti(const std::string& key, int def) {
        const json* v = take(key);
        if (!v) return def;
        if (!v->is_number_integer()) throw ConfigError(path_ + "." + key + " must be an integer");
        return v->get<int>();
    }
    uint64_t getu(const std::string& key, uint64_t def) {
        const json* v = take(key);
        if (!v) return def;
        if (!v->is_number_integer() || (v->is_number_integer() && v->get<int64_t>() < 0 && !v->is_number_unsigned()))
            throw ConfigError(path_ + "." + key + " must be a non-negative integer");
        return v->get<uint64_t>();
    }
    double getd(const std::string& key, double def) {
        const json* v = take(key);
        if (!v) return def;
        if (!v->is_number()) throw ConfigError(path_ + "." + key + " must be a number");
        return v->get<double>();
    }
    bool getb(const std::string& key, bool def) {
        const json* v = take(key);
        if (!v) return def;
        if (!v->is_boolean()) throw ConfigError(path_ + "." + key + " must be a boolean");
        return v->get<bool>();
    }
    std::string gets(const std::string& key, const std::string& def) {
        const json* v = take(key);
        if (!v) return def;
        if (!v->is_string()) throw ConfigError(path_ + "." + key + " must be a string");
        return v->get<std::string>();
    }
    std::string require_s(const std::string& key) {
        if (!has(key)) throw ConfigError(path_ + "." + key + " is required");
        return gets(key, "");
    }
    const json* take(const std::string& key) {
        seen_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }
    Section sub(const std::string& key) {
        const json* v = take(key);
        if (!v) throw ConfigError(path_ + "." + key + " is required");
        return Section(*v, path_ + "." + key);
    }
    bool has_sub(const std::string& key) const { return j_.contains(key); }

    void close() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key()))
                throw ConfigError("unknown key '" + path_ + "." + it.key() + "'");
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

std::vector<BranchKind> parse_menu(const json& arr, const std::string& path) {
    if (!arr.is_array() || arr.empty())
        throw ConfigError(path + " must be a nonempty array of branch kinds");
    std::vector<BranchKind> menu;
    for (const auto& e : arr) {
        if (!e.is_string()) throw ConfigError(path + " entries must be strings");
        try {
            menu.push_back(branch_kind_from(e.get<std::string>()));
        } catch (const std::exception& ex) {
            throw ConfigError(path + ": " + ex.what());
        }
    }
    return menu;
}

std::vector<std::vector<BranchKind>> parse_menus(const json& arr, const std::string& path) {
    if (!arr.is_array() || arr.empty())
        throw ConfigError(path + " must be a nonempty array");
    if (arr.front().is_string()) return {parse_menu(arr, path)};  // broadcast form
    std::vector<std::vector<BranchKind>> menus;
    for (size_t i = 0; i < arr.size(); ++i)
        menus.push_back(parse_menu(arr[i], path + "[" + std::to_string(i) + "]"));
    return menus;
}

template <typename F>
auto wrap(const std::string& what, F&& f) {
    try {
        return f();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& ex) {
        throw ConfigError(what + ": " + ex.what());
    }
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
    json root = wrap("config", [&] { return json::parse(text); });
    Section top(root, "config");
    ExperimentConfig cfg;

    {
        Section task = top.sub("task");
        const std::string kind = task.gets("kind", "glyphs");
        if (kind == "glyphs") {
            cfg.task_kind = TaskKind::Glyphs;
        } else if (kind == "idx") {
            cfg.task_kind = TaskKind::Idx;
        } else {
            throw ConfigError("config.task.kind must be 'glyphs' or 'idx'");
        }
        cfg.task.canvas = task.geti("canvas", cfg.task.canvas);
        cfg.task.label_mode =
            wrap("config.task.label_mode",
                 [&] { return label_mode_from(task.gets("label_mode", label_mode_name(cfg.task.label_mode))); });
        cfg.task.transform =
            wrap("config.task.transform",
                 [&] { return transform_from(task.gets("transform", transform_name(cfg.task.transform))); });
        cfg.task.max_translate = task.geti("max_translate", cfg.task.max_translate);
        cfg.task.seed = task.getu("seed", cfg.task.seed);
        cfg.train_size = task.geti("train_size", cfg.train_size);
        cfg.test_size = task.geti("test_size", cfg.test_size);
        if (cfg.task_kind == TaskKind::Idx) {
            cfg.idx_images = task.require_s("images");
            cfg.idx_labels = task.require_s("labels");
            cfg.idx_test_images = task.require_s("test_images");
            cfg.idx_test_labels = task.require_s("test_labels");
        }
        task.close();
        if (cfg.train_size <= 0 || cfg.test_size <= 0)
            throw ConfigError("config.task sizes must be positive");
    }

    if (top.has_sub("architecture")) {
        Section arch = top.sub("architecture");
        cfg.arch.alpha = arch.geti("alpha", cfg.arch.alpha);
        cfg.arch.filter_size = arch.geti("filter_size", cfg.arch.filter_size);
        cfg.arch.trainable_locations = arch.getb("trainable_locations", cfg.arch.trainable_locations);
        if (const json* m = arch.take("menus")) cfg.arch.menus = parse_menus(*m, "config.architecture.menus");
        arch.close();
        if (cfg.arch.alpha <= 0) throw ConfigError("config.architecture.alpha must be positive");
        if (cfg.arch.filter_size <= 0 || cfg.arch.filter_size % 2 == 0)
            throw ConfigError("config.architecture.filter_size must be odd and positive");
    }
    if (cfg.arch.menus.empty()) cfg.arch.menus = {{BranchKind::FC, BranchKind::CONV}};

    if (top.has_sub("prior")) {
        Section prior = top.sub("prior");
        cfg.prior.sigma_init = prior.getd("sigma_init", cfg.prior.sigma_init);
        cfg.prior.s_placement =
            wrap("config.prior.s_placement",
                 [&] { return placement_from(prior.gets("s_placement", placement_name(cfg.prior.s_placement))); });
        prior.close();
        if (!(cfg.prior.sigma_init > 0)) throw ConfigError("config.prior.sigma_init must be positive");
    }

    if (top.has_sub("train")) {
        Section tr = top.sub("train");
        cfg.train.mode = wrap("config.train.mode",
                              [&] { return train_mode_from(tr.gets("mode", train_mode_name(cfg.train.mode))); });
        cfg.train.epochs = tr.geti("epochs", cfg.train.epochs);
        cfg.train.batch = tr.geti("batch", cfg.train.batch);
        cfg.train.lr = tr.getd("lr", cfg.train.lr);
        cfg.train.hyper_lr = tr.getd("hyper_lr", cfg.train.hyper_lr);
        cfg.train.burnin = tr.geti("burnin", cfg.train.burnin);
        cfg.train.hyper_every = tr.geti("hyper_every", cfg.train.hyper_every);
        cfg.train.eval_chunk = tr.geti("eval_chunk", cfg.train.eval_chunk);
        cfg.train.kfac_chunk = tr.geti("kfac_chunk", cfg.train.kfac_chunk);
        cfg.train.seed = tr.getu("seed", cfg.train.seed);
        tr.close();
        if (cfg.train.epochs < 0) throw ConfigError("config.train.epochs must be non-negative");
        if (cfg.train.batch <= 0) throw ConfigError("config.train.batch must be positive");
        if (cfg.train.burnin < 0) throw ConfigError("config.train.burnin must be non-negative");
        if (cfg.train.hyper_every < 1) throw ConfigError("config.train.hyper_every must be at least 1");
    }

    cfg.output_dir = top.gets("output_dir", cfg.output_dir);
    top.close();
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config '" + path + "'");
    std::ostringstream ss;
    ss << is.rdbuf();
    return parse_config(ss.str());
}

std::string ExperimentConfig::canonical_json() const {
    json j;
    json t;
    t["kind"] = task_kind == TaskKind::Glyphs ? "glyphs" : "idx";
    t["canvas"] = task.canvas;
    t["label_mode"] = label_mode_name(task.label_mode);
    t["transform"] = transform_name(task.transform);
    t["max_translate"] = task.max_translate;
    t["seed"] = task.seed;
    t["train_size"] = train_size;
    t["test_size"] = test_size;
    if (task_kind == TaskKind::Idx) {
        t["images"] = idx_images;
        t["labels"] = idx_labels;
        t["test_images"] = idx_test_images;
        t["test_labels"] = idx_test_labels;
    }
    j["task"] = t;

    json a;
    a["alpha"] = arch.alpha;
    a["filter_size"] = arch.filter_size;
    a["trainable_locations"] = arch.trainable_locations;
    json menus = json::array();
    for (const auto& menu : arch.menus) {
        json m = json::array();
        for (BranchKind k : menu) m.push_back(branch_kind_name(k));
        menus.push_back(m);
    }
    a["menus"] = menus;
    j["architecture"] = a;

    json p;
    p["sigma_init"] = prior.sigma_init;
    p["s_placement"] = placement_name(prior.s_placement);
    j["prior"] = p;

    json tr;
    tr["mode"] = train_mode_name(train.mode);
    tr["epochs"] = train.epochs;
    tr["batch"] = train.batch;
    tr["lr"] = train.lr;
    tr["hyper_lr"] = train.hyper_lr;
    tr["burnin"] = train.burnin;
    tr["hyper_every"] = train.hyper_every;
    tr["eval_chunk"] = train.eval_chunk;
    tr["kfac_chunk"] = train.kfac_chunk;
    tr["seed"] = train.seed;
    j["train"] = tr;

    j["output_dir"] = output_dir;
    return j.dump(2);
}

}  // namespace symmetria
