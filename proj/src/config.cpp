#include "nest/config.hpp"

#include "nest/error.hpp"
#include "nest/seeds.hpp"
#include "nest/trace_io.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <initializer_list>

namespace nest {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

void only_keys(const json& obj, std::string_view where, std::initializer_list<std::string_view> keys) {
    if (!obj.is_object()) throw InputError("config: " + std::string(where) + " must be an object");
    for (const auto& [key, value] : obj.items()) {
        if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
            throw InputError("config: unknown key " + std::string(where) + "." + key);
        }
    }
}

template <class T>
void read(const json& obj, const char* key, T& out) {
    if (!obj.contains(key)) return;
    try {
        out = obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw InputError(std::string("config: bad value for ") + key);
    }
}

void read_path(const json& obj, const char* key, std::filesystem::path& out) {
    std::string s = out.string();
    read(obj, key, s);
    out = s;
}

} // namespace

void validate_config(const RunConfig& cfg) {
    auto bad = [](const std::string& what) { throw InputError("config: " + what); };
    if (!(cfg.generator.scale > 0.0) || !std::isfinite(cfg.generator.scale)) bad("generator.scale must be positive");
    if (!(cfg.generator.window_dt > 0.0)) bad("generator.window_dt must be positive");
    validate_split_spec(cfg.preprocess.split);
    const auto& ps = cfg.preprocess.settings;
    if (ps.denoise_window == 0 || ps.denoise_window % 2 == 0) bad("preprocess.denoise_window must be odd");
    if (!(ps.range.lo < ps.range.hi)) bad("preprocess.range needs lo < hi");
    if (cfg.model.blocks == 0 || cfg.model.width == 0) bad("model.blocks and model.width must be positive");
    if (cfg.model.dim != kDefaultDim) bad("model.dim must be " + std::to_string(kDefaultDim));
    if (cfg.model.actions != static_cast<std::size_t>(kActionAlphabetSize)) {
        bad("model.actions must be " + std::to_string(kActionAlphabetSize));
    }
    validate_train_config(cfg.train);
    const auto& ev = cfg.eval;
    for (double s : ev.sweep_speeds) {
        if (!(s > 0.0) || !std::isfinite(s)) bad("eval.sweep_speeds must be positive");
    }
    if (ev.sweep_count == 0) bad("eval.sweep_count must be positive");
    if (ev.sweep_length < 64) bad("eval.sweep_length must be >= 64");
    if (ev.unseen_count == 0) bad("eval.unseen_count must be positive");
    if (ev.unseen_length < 64) bad("eval.unseen_length must be >= 64");
    if (ev.stride == 0) bad("eval.stride must be positive");
    if (ev.persistence == 0) bad("eval.persistence must be positive");
}

RunConfig config_from_json(std::string_view text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw InputError(std::string("config is not valid JSON: ") + e.what());
    }
    RunConfig cfg;
    only_keys(doc, "config", {"seed", "paths", "generator", "preprocess", "model", "train", "eval"});
    read(doc, "seed", cfg.seed);
    if (doc.contains("paths")) {
        const auto& p = doc["paths"];
        only_keys(p, "paths", {"data_dir", "prep_dir", "model_dir", "report_dir"});
        read_path(p, "data_dir", cfg.paths.data_dir);
        read_path(p, "prep_dir", cfg.paths.prep_dir);
        read_path(p, "model_dir", cfg.paths.model_dir);
        read_path(p, "report_dir", cfg.paths.report_dir);
    }
    if (doc.contains("generator")) {
        const auto& g = doc["generator"];
        only_keys(g, "generator", {"scale", "window_dt", "onset_shift"});
        read(g, "scale", cfg.generator.scale);
        read(g, "window_dt", cfg.generator.window_dt);
        read(g, "onset_shift", cfg.generator.onset_shift);
    }
    if (doc.contains("preprocess")) {
        const auto& p = doc["preprocess"];
        only_keys(p, "preprocess", {"split", "denoise_window", "range", "table_faithful"});
        if (p.contains("split")) {
            const auto& s = p["split"];
            only_keys(s, "preprocess.split", {"train", "val", "test"});
            read(s, "train", cfg.preprocess.split.train);
            read(s, "val", cfg.preprocess.split.val);
            read(s, "test", cfg.preprocess.split.test);
        }
        read(p, "denoise_window", cfg.preprocess.settings.denoise_window);
        if (p.contains("range")) {
            std::vector<double> r;
            read(p, "range", r);
            if (r.size() != 2) throw InputError("config: preprocess.range must be [lo, hi]");
            cfg.preprocess.settings.range = {r[0], r[1]};
        }
        read(p, "table_faithful", cfg.preprocess.settings.table_faithful);
    }
    if (doc.contains("model")) {
        const auto& m = doc["model"];
        only_keys(m, "model", {"dim", "actions", "blocks", "width"});
        read(m, "dim", cfg.model.dim);
        read(m, "actions", cfg.model.actions);
        read(m, "blocks", cfg.model.blocks);
        read(m, "width", cfg.model.width);
    }
    if (doc.contains("train")) {
        const auto& t = doc["train"];
        only_keys(t, "train",
                  {"alpha", "beta", "learning_rate", "beta1", "beta2", "epsilon", "weight_decay",
                   "dropout_p", "epochs", "batch_size", "max_window"});
        read(t, "alpha", cfg.train.alpha);
        read(t, "beta", cfg.train.beta);
        read(t, "learning_rate", cfg.train.learning_rate);
        read(t, "beta1", cfg.train.beta1);
        read(t, "beta2", cfg.train.beta2);
        read(t, "epsilon", cfg.train.epsilon);
        read(t, "weight_decay", cfg.train.weight_decay);
        read(t, "dropout_p", cfg.train.dropout_p);
        read(t, "epochs", cfg.train.epochs);
        read(t, "batch_size", cfg.train.batch_size);
        read(t, "max_window", cfg.train.max_window);
    }
    if (doc.contains("eval")) {
        const auto& e = doc["eval"];
        only_keys(e, "eval",
                  {"sweep_speeds", "sweep_count", "sweep_length", "unseen_families", "unseen_count",
                   "unseen_length", "stride", "persistence"});
        read(e, "sweep_speeds", cfg.eval.sweep_speeds);
        read(e, "sweep_count", cfg.eval.sweep_count);
        read(e, "sweep_length", cfg.eval.sweep_length);
        read(e, "unseen_families", cfg.eval.unseen_families);
        read(e, "unseen_count", cfg.eval.unseen_count);
        read(e, "unseen_length", cfg.eval.unseen_length);
        read(e, "stride", cfg.eval.stride);
        read(e, "persistence", cfg.eval.persistence);
    }
    validate_config(cfg);
    return cfg;
}

std::string config_to_json(const RunConfig& cfg) {
    ordered_json doc;
    doc["seed"] = cfg.seed;
    doc["paths"] = {{"data_dir", cfg.paths.data_dir.string()},
                    {"prep_dir", cfg.paths.prep_dir.string()},
                    {"model_dir", cfg.paths.model_dir.string()},
                    {"report_dir", cfg.paths.report_dir.string()}};
    doc["generator"] = {{"scale", cfg.generator.scale},
                        {"window_dt", cfg.generator.window_dt},
                        {"onset_shift", cfg.generator.onset_shift}};
    const auto& p = cfg.preprocess;
    doc["preprocess"] = {
        {"split", {{"train", p.split.train}, {"val", p.split.val}, {"test", p.split.test}}},
        {"denoise_window", p.settings.denoise_window},
        {"range", {p.settings.range.lo, p.settings.range.hi}},
        {"table_faithful", p.settings.table_faithful}};
    doc["model"] = {{"dim", cfg.model.dim},
                    {"actions", cfg.model.actions},
                    {"blocks", cfg.model.blocks},
                    {"width", cfg.model.width}};
    const auto& t = cfg.train;
    doc["train"] = {{"alpha", t.alpha},
                    {"beta", t.beta},
                    {"learning_rate", t.learning_rate},
                    {"beta1", t.beta1},
                    {"beta2", t.beta2},
                    {"epsilon", t.epsilon},
                    {"weight_decay", t.weight_decay},
                    {"dropout_p", t.dropout_p},
                    {"epochs", t.epochs},
                    {"batch_size", t.batch_size},
                    {"max_window", t.max_window}};
    const auto& e = cfg.eval;
    doc["eval"] = {{"sweep_speeds", e.sweep_speeds},
                   {"sweep_count", e.sweep_count},
                   {"sweep_length", e.sweep_length},
                   {"unseen_families", e.unseen_families},
                   {"unseen_count", e.unseen_count},
                   {"unseen_length", e.unseen_length},
                   {"stride", e.stride},
                   {"persistence", e.persistence}};
    return doc.dump(2) + "\n";
}

RunConfig load_config(const std::filesystem::path& path) {
    return config_from_json(read_text(path));
}

std::uint64_t gen_seed(const RunConfig& cfg) { return derive_seed(cfg.seed, "gen"); }
std::uint64_t train_seed(const RunConfig& cfg) { return derive_seed(cfg.seed, "train"); }
std::uint64_t eval_seed(const RunConfig& cfg) { return derive_seed(cfg.seed, "eval"); }

} // namespace nest
