#include "nest/trace_io.hpp"

#include "nest/error.hpp"

#include <json.hpp>

#include <fcntl.h>
#include <unistd.h>

#include <charconv>
#include <cmath>
#include <sstream>
#include <system_error>

namespace nest {

namespace fs = std::filesystem;
using nlohmann::json;

std::string format_double(double x) {
    if (x == 0.0 && std::signbit(x)) return "-0.0"; // "-0" would read back as integer zero
    char buf[32];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::general, 17);
    if (ec != std::errc{}) throw Error("cannot format double");
    return std::string(buf, end);
}

namespace {

void append_json_string(std::string& out, std::string_view s) {
    out += json(std::string(s)).dump();
}

} // namespace

std::string trace_to_json_line(const StateTrace& trace) {
    std::string out;
    out.reserve(trace.features.size() * 22 + trace.actions.size() * 2 + 128);
    out += "{\"id\":";
    append_json_string(out, trace.id);
    out += ",\"label\":";
    append_json_string(out, to_string(trace.label));
    out += ",\"family\":";
    append_json_string(out, trace.family);
    out += ",\"window_dt\":";
    out += format_double(trace.window_dt);
    out += ",\"states\":[";
    const std::size_t n = trace.length();
    for (std::size_t t = 0; t < n; ++t) {
        if (t) out += ',';
        out += '[';
        for (std::size_t j = 0; j < trace.dim; ++j) {
            if (j) out += ',';
            out += format_double(trace.at(t, j));
        }
        out += ']';
    }
    out += "],\"actions\":[";
    for (std::size_t i = 0; i < trace.actions.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(trace.actions[i]);
    }
    out += "]}";
    return out;
}

StateTrace trace_from_json_line(std::string_view line) {
    json doc;
    try {
        doc = json::parse(line);
    } catch (const json::exception& e) {
        throw InputError(std::string("malformed trace record: ") + e.what());
    }
    try {
        StateTrace trace;
        trace.id = doc.at("id").get<std::string>();
        trace.label = parse_label(doc.at("label").get<std::string>());
        trace.family = doc.at("family").get<std::string>();
        trace.window_dt = doc.at("window_dt").get<double>();
        const auto& states = doc.at("states");
        if (!states.is_array() || states.empty()) throw InputError("trace " + trace.id + " has no states");
        trace.dim = states.front().size();
        trace.features.reserve(states.size() * trace.dim);
        for (const auto& row : states) {
            if (row.size() != trace.dim) {
                throw InputError("trace " + trace.id + " has ragged state rows");
            }
            for (const auto& v : row) trace.features.push_back(v.get<double>());
        }
        trace.actions = doc.at("actions").get<std::vector<int>>();
        return trace;
    } catch (const json::exception& e) {
        throw InputError(std::string("malformed trace record: ") + e.what());
    }
}

void write_traces(const fs::path& path, std::span<const StateTrace> traces) {
    AtomicFile file(path);
    for (const auto& t : traces) file.stream() << trace_to_json_line(t) << '\n';
    file.commit();
}

std::vector<StateTrace> read_traces(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open trace file " + path.string());
    std::vector<StateTrace> traces;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        traces.push_back(trace_from_json_line(line));
    }
    return traces;
}

Manifest manifest_of(const Dataset& dataset) {
    return {dataset.dim, dataset.action_alphabet_size, dataset.manifest, dataset.seed};
}

void write_manifest(const fs::path& path, const Manifest& manifest) {
    json doc = {
        {"d", manifest.d},
        {"action_alphabet_size", manifest.action_alphabet_size},
        {"families", manifest.families},
        {"seed", manifest.seed},
    };
    write_text_atomic(path, doc.dump(2) + "\n");
}

Manifest read_manifest(const fs::path& path) {
    try {
        const json doc = json::parse(read_text(path));
        Manifest m;
        m.d = doc.at("d").get<std::size_t>();
        m.action_alphabet_size = doc.at("action_alphabet_size").get<int>();
        m.families = doc.at("families").get<std::map<std::string, std::size_t>>();
        m.seed = doc.at("seed").get<std::uint64_t>();
        return m;
    } catch (const json::exception& e) {
        throw InputError("malformed manifest " + path.string() + ": " + e.what());
    }
}

void write_dataset(const fs::path& dir, const Dataset& dataset) {
    fs::create_directories(dir);
    write_traces(dir / "traces.jsonl", dataset.traces);
    write_manifest(dir / "manifest.json", manifest_of(dataset));
}

Dataset read_dataset(const fs::path& dir) {
    const Manifest m = read_manifest(dir / "manifest.json");
    Dataset ds;
    ds.traces = read_traces(dir / "traces.jsonl");
    ds.dim = m.d;
    ds.action_alphabet_size = m.action_alphabet_size;
    ds.manifest = m.families;
    ds.seed = m.seed;
    const auto check = validate_dataset(ds);
    if (!check.ok()) throw InputError("dataset " + dir.string() + ": " + check.violations.front().message);
    return ds;
}

AtomicFile::AtomicFile(fs::path path) : path_(std::move(path)) {
    tmp_ = path_;
    tmp_ += ".tmp." + std::to_string(::getpid());
    out_.open(tmp_, std::ios::binary | std::ios::trunc);
    if (!out_) throw InputError("cannot write " + tmp_.string());
}

AtomicFile::~AtomicFile() {
    if (!committed_) {
        out_.close();
        std::error_code ec;
        fs::remove(tmp_, ec);
    }
}

void AtomicFile::commit() {
    out_.flush();
    if (!out_) throw InputError("write failed for " + path_.string());
    out_.close();
    std::error_code ec;
    fs::rename(tmp_, path_, ec);
    if (ec) throw InputError("cannot rename into " + path_.string() + ": " + ec.message());
    committed_ = true;
}

void write_text_atomic(const fs::path& path, std::string_view content) {
    AtomicFile file(path);
    file.stream() << content;
    file.commit();
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

DirectoryLock::DirectoryLock(const fs::path& dir) : lock_path_(dir / ".nest.lock") {
    std::error_code ec;
    fs::create_directories(dir, ec);
    const int fd = ::open(lock_path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd < 0) {
        throw InputError("output directory " + dir.string() +
                         " is locked by another run (remove " + lock_path_.string() +
                         " if stale)");
    }
    ::close(fd);
}

DirectoryLock::~DirectoryLock() {
    std::error_code ec;
    fs::remove(lock_path_, ec);
}

} // namespace nest
