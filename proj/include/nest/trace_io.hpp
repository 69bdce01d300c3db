#pragma once

// On-disk formats.
//
// Trace file: JSON Lines, one trace per line, keys in the order
//   {"id","label","family","window_dt","states","actions"}
// with every float printed at 17 significant digits so a read/write cycle
// is bit-exact. Manifest: one JSON document
//   {"d", "action_alphabet_size", "families": {name: count}, "seed"}.
//
// All writers go through AtomicFile (write to a sibling temp file, then
// rename) so an interrupted run never leaves a truncated artifact.

#include "nest/statespace.hpp"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace nest {

/// `x` printed with 17 significant digits (round-trips exactly).
std::string format_double(double x);

std::string trace_to_json_line(const StateTrace& trace);
StateTrace trace_from_json_line(std::string_view line);

void write_traces(const std::filesystem::path& path, std::span<const StateTrace> traces);
std::vector<StateTrace> read_traces(const std::filesystem::path& path);

struct Manifest {
    std::size_t d = kDefaultDim;
    int action_alphabet_size = kActionAlphabetSize;
    std::map<std::string, std::size_t> families;
    std::uint64_t seed = 0;
};

Manifest manifest_of(const Dataset& dataset);
void write_manifest(const std::filesystem::path& path, const Manifest& manifest);
Manifest read_manifest(const std::filesystem::path& path);

/// Writes the dataset as `<dir>/traces.jsonl` plus `<dir>/manifest.json`.
void write_dataset(const std::filesystem::path& dir, const Dataset& dataset);
Dataset read_dataset(const std::filesystem::path& dir);

/// Temp-then-rename file writer. Destroying an uncommitted AtomicFile
/// removes the temp file and leaves `path` untouched.
class AtomicFile {
public:
    explicit AtomicFile(std::filesystem::path path);
    AtomicFile(const AtomicFile&) = delete;
    AtomicFile& operator=(const AtomicFile&) = delete;
    ~AtomicFile();

    std::ofstream& stream() noexcept { return out_; }
    void commit();

private:
    std::filesystem::path path_;
    std::filesystem::path tmp_;
    std::ofstream out_;
    bool committed_ = false;
};

void write_text_atomic(const std::filesystem::path& path, std::string_view content);
std::string read_text(const std::filesystem::path& path);

/// Exclusive lock on an output directory (`<dir>/.nest.lock`, O_EXCL).
/// Throws InputError if another run holds it.
class DirectoryLock {
public:
    explicit DirectoryLock(const std::filesystem::path& dir);
    DirectoryLock(const DirectoryLock&) = delete;
    DirectoryLock& operator=(const DirectoryLock&) = delete;
    ~DirectoryLock();

private:
    std::filesystem::path lock_path_;
};

} // namespace nest
