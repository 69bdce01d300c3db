#include "nest/checkpoint.hpp"

#include "nest/error.hpp"
#include "nest/trace_io.hpp"

#include <json.hpp>

#include <charconv>
#include <cstdio>

namespace nest {

using nlohmann::json;
using nlohmann::ordered_json;

std::string hex64(std::uint64_t x) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(x));
    return buf;
}

std::uint64_t parse_hex64(std::string_view text) {
    std::uint64_t x = 0;
    auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), x, 16);
    if (ec != std::errc{} || end != text.data() + text.size()) {
        throw InputError("bad hex digest: " + std::string(text));
    }
    return x;
}

namespace {

json parse(std::string_view text, const char* what) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw InputError(std::string("malformed ") + what + ": " + e.what());
    }
}

template <class F>
auto guarded(const char* what, F&& f) {
    try {
        return f();
    } catch (const json::exception& e) {
        throw InputError(std::string("malformed ") + what + ": " + e.what());
    }
}

} // namespace

std::string checkpoint_to_json(const Checkpoint& ckpt) {
    validate_params(ckpt.params);
    const ParamLayout layout(ckpt.params.shape);
    ordered_json doc;
    doc["format"] = "nest-checkpoint";
    doc["version"] = kCheckpointVersion;
    doc["d"] = ckpt.params.shape.dim;
    doc["blocks"] = ckpt.params.shape.blocks;
    doc["width"] = ckpt.params.shape.width;
    doc["action_alphabet_size"] = ckpt.params.shape.actions;
    ordered_json tensors = ordered_json::object();
    for (const auto& slot : layout.tensors()) {
        const auto first = ckpt.params.values.begin() + static_cast<std::ptrdiff_t>(slot.offset);
        tensors[slot.name] = std::vector<double>(first, first + static_cast<std::ptrdiff_t>(slot.size()));
    }
    doc["tensors"] = tensors;
    doc["normalization"] = {{"file", ckpt.normalization.file},
                            {"provenance", ckpt.normalization.provenance},
                            {"source_count", ckpt.normalization.source_count},
                            {"source_digest", hex64(ckpt.normalization.source_digest)}};
    doc["threshold"] = {{"tau", ckpt.threshold.tau}, {"provenance", ckpt.threshold.provenance}};
    return doc.dump() + "\n";
}

Checkpoint checkpoint_from_json(std::string_view text) {
    const json doc = parse(text, "checkpoint");
    return guarded("checkpoint", [&] {
        if (doc.at("format").get<std::string>() != "nest-checkpoint") {
            throw InputError("not a checkpoint file");
        }
        const int version = doc.at("version").get<int>();
        if (version != kCheckpointVersion) {
            throw InputError("unsupported checkpoint version " + std::to_string(version));
        }
        Checkpoint ckpt;
        ModelShape shape;
        shape.dim = doc.at("d").get<std::size_t>();
        shape.blocks = doc.at("blocks").get<std::size_t>();
        shape.width = doc.at("width").get<std::size_t>();
        shape.actions = doc.at("action_alphabet_size").get<std::size_t>();
        ckpt.params = zero_params(shape);
        const ParamLayout layout(shape);
        const auto& tensors = doc.at("tensors");
        for (const auto& slot : layout.tensors()) {
            const auto values = tensors.at(slot.name).get<std::vector<double>>();
            if (values.size() != slot.size()) {
                throw InputError("checkpoint tensor " + slot.name + " has the wrong size");
            }
            std::copy(values.begin(), values.end(),
                      ckpt.params.values.begin() + static_cast<std::ptrdiff_t>(slot.offset));
        }
        if (tensors.size() != layout.tensors().size()) throw InputError("checkpoint has extra tensors");
        validate_params(ckpt.params);
        const auto& norm = doc.at("normalization");
        ckpt.normalization.file = norm.at("file").get<std::string>();
        ckpt.normalization.provenance = norm.at("provenance").get<std::string>();
        ckpt.normalization.source_count = norm.at("source_count").get<std::size_t>();
        ckpt.normalization.source_digest = parse_hex64(norm.at("source_digest").get<std::string>());
        ckpt.threshold.tau = doc.at("threshold").at("tau").get<double>();
        ckpt.threshold.provenance = doc.at("threshold").at("provenance").get<std::string>();
        return ckpt;
    });
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    write_text_atomic(path, checkpoint_to_json(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    return checkpoint_from_json(read_text(path));
}

std::string preprocessor_to_json(const Preprocessor& pre) {
    ordered_json doc;
    doc["provenance"] = pre.stats.provenance;
    doc["source_count"] = pre.stats.source_count;
    doc["source_digest"] = hex64(pre.stats.source_digest);
    doc["range"] = {pre.stats.range.lo, pre.stats.range.hi};
    doc["mins"] = pre.stats.mins;
    doc["maxs"] = pre.stats.maxs;
    doc["denoise_window"] = pre.settings.denoise_window;
    doc["table_faithful"] = pre.settings.table_faithful;
    return doc.dump(2) + "\n";
}

Preprocessor preprocessor_from_json(std::string_view text) {
    const json doc = parse(text, "stats file");
    return guarded("stats file", [&] {
        Preprocessor pre;
        pre.stats.provenance = doc.at("provenance").get<std::string>();
        pre.stats.source_count = doc.at("source_count").get<std::size_t>();
        pre.stats.source_digest = parse_hex64(doc.at("source_digest").get<std::string>());
        const auto range = doc.at("range").get<std::vector<double>>();
        if (range.size() != 2) throw InputError("stats range must have two entries");
        pre.stats.range = {range[0], range[1]};
        pre.stats.mins = doc.at("mins").get<std::vector<double>>();
        pre.stats.maxs = doc.at("maxs").get<std::vector<double>>();
        if (pre.stats.mins.size() != pre.stats.maxs.size() || pre.stats.mins.empty()) {
            throw InputError("stats mins and maxs disagree");
        }
        pre.settings.range = pre.stats.range;
        pre.settings.denoise_window = doc.at("denoise_window").get<std::size_t>();
        pre.settings.table_faithful = doc.at("table_faithful").get<bool>();
        return pre;
    });
}

std::string baseline_to_json(const BaselineParams& params) {
    ordered_json doc;
    doc["theta"] = params.theta;
    doc["window"] = params.window;
    doc["cosine_threshold"] = params.cosine_threshold;
    doc["entropy_channel"] = params.entropy_channel;
    doc["benign_mean"] = params.benign_mean;
    ordered_json sigs = ordered_json::array();
    for (const auto& s : params.signatures) sigs.push_back({{"family", s.family}, {"profile", s.profile}});
    doc["signatures"] = sigs;
    return doc.dump(2) + "\n";
}

BaselineParams baseline_from_json(std::string_view text) {
    const json doc = parse(text, "baseline file");
    return guarded("baseline file", [&] {
        BaselineParams p;
        p.theta = doc.at("theta").get<double>();
        p.window = doc.at("window").get<std::size_t>();
        p.cosine_threshold = doc.at("cosine_threshold").get<double>();
        p.entropy_channel = doc.at("entropy_channel").get<std::size_t>();
        p.benign_mean = doc.at("benign_mean").get<std::vector<double>>();
        for (const auto& s : doc.at("signatures")) {
            p.signatures.push_back({s.at("family").get<std::string>(), s.at("profile").get<std::vector<double>>()});
        }
        return p;
    });
}

} // namespace nest
