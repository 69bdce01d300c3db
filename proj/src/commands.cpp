#include "nest/commands.hpp"

#include "nest/checkpoint.hpp"
#include "nest/error.hpp"
#include "nest/generator.hpp"
#include "nest/seeds.hpp"
#include "nest/trace_io.hpp"

#include <chrono>
#include <sstream>

namespace nest {

namespace fs = std::filesystem;

namespace {

const fs::path kTrain = "train.jsonl";
const fs::path kVal = "val.jsonl";
const fs::path kTest = "test.jsonl";
const fs::path kStats = "stats.json";
const fs::path kCheckpoint = "checkpoint.json";
const fs::path kBaseline = "baseline.json";
const fs::path kTrainLog = "train_log.csv";

Preprocessor load_preprocessor(const RunConfig& cfg) {
    return preprocessor_from_json(read_text(cfg.paths.prep_dir / kStats));
}

void require_train_stats(const Preprocessor& pre, std::span<const StateTrace> train) {
    if (pre.stats.provenance != "train" || !audit_stats(pre.stats, train)) {
        throw InputError("normalization stats were not computed over the training split");
    }
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

// Copies a CSV under a new header after checking the source header.
void reshape_csv(const fs::path& src, const std::string& expected_header, const fs::path& dst,
                 const std::string& new_header) {
    if (!fs::exists(src)) throw InputError("missing report artifact " + src.string());
    std::istringstream in(read_text(src));
    std::string line;
    if (!std::getline(in, line) || line != expected_header) {
        throw InputError("unexpected header in " + src.string());
    }
    const std::size_t columns = split_csv_line(expected_header).size();
    std::string out = new_header + "\n";
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (split_csv_line(line).size() != columns) throw InputError("malformed row in " + src.string());
        out += line + "\n";
    }
    write_text_atomic(dst, out);
}

} // namespace

RunConfig resolve_config(std::string_view command, const CommandOptions& opts) {
    RunConfig cfg = opts.config ? load_config(*opts.config) : RunConfig{};
    if (opts.seed) cfg.seed = *opts.seed;
    if (opts.scale) {
        if (command != "gen") throw InputError("--scale applies to gen only");
        cfg.generator.scale = *opts.scale;
    }
    if (opts.table_faithful) {
        if (command != "prep") throw InputError("--table-faithful applies to prep only");
        cfg.preprocess.settings.table_faithful = true;
    }
    if (opts.out) {
        if (command == "gen") {
            cfg.paths.data_dir = *opts.out;
        } else if (command == "prep") {
            cfg.paths.prep_dir = *opts.out;
        } else if (command == "train") {
            cfg.paths.model_dir = *opts.out;
        } else if (command == "eval") {
            cfg.paths.report_dir = *opts.out;
        }
    }
    validate_config(cfg);
    return cfg;
}

void cmd_gen(const RunConfig& cfg, std::ostream& log) {
    CompositionSpec spec = benchmark_composition(cfg.generator.scale, gen_seed(cfg));
    spec.window_dt = cfg.generator.window_dt;
    spec.onset_shift = cfg.generator.onset_shift;
    const auto counts = planned_counts(spec); // validates before anything touches the disk

    DirectoryLock lock(cfg.paths.data_dir);
    Dataset ds = gen_dataset(spec);
    ds.seed = cfg.seed;
    write_dataset(cfg.paths.data_dir, ds);
    log << "generated " << ds.traces.size() << " traces in " << cfg.paths.data_dir.string() << "\n";
    for (const auto& [family, count] : counts) log << "  " << family << ": " << count << "\n";
}

void cmd_prep(const RunConfig& cfg, std::ostream& log) {
    const Dataset ds = read_dataset(cfg.paths.data_dir);
    const Split split = stratified_split(ds.traces, cfg.preprocess.split);

    Preprocessor pre;
    pre.settings = cfg.preprocess.settings;
    std::vector<StateTrace> smooth;
    smooth.reserve(split.train.size());
    for (const auto& t : split.train) smooth.push_back(prepare_denoise(t, pre.settings));
    pre.stats = compute_stats(smooth, pre.settings.range, "train");
    require_train_stats(pre, split.train);

    DirectoryLock lock(cfg.paths.prep_dir);
    write_traces(cfg.paths.prep_dir / kTrain, pre.apply(split.train));
    write_traces(cfg.paths.prep_dir / kVal, pre.apply(split.val));
    write_traces(cfg.paths.prep_dir / kTest, pre.apply(split.test));
    write_text_atomic(cfg.paths.prep_dir / kStats, preprocessor_to_json(pre));
    log << "split " << ds.traces.size() << " traces: train " << split.train.size() << ", val "
        << split.val.size() << ", test " << split.test.size() << "\n";
}

void cmd_train(const RunConfig& cfg, std::ostream& log) {
    const auto train_set = read_traces(cfg.paths.prep_dir / kTrain);
    const auto val_set = read_traces(cfg.paths.prep_dir / kVal);
    const Preprocessor pre = load_preprocessor(cfg);
    require_train_stats(pre, train_set);

    TrainConfig tc = cfg.train;
    tc.seed = train_seed(cfg);
    const TrainResult result = train(train_set, val_set, cfg.model, tc);
    const BaselineParams baseline = fit_baseline(train_set);

    Checkpoint ckpt;
    ckpt.params = result.params;
    ckpt.threshold = result.threshold;
    ckpt.normalization = {kStats.string(), pre.stats.provenance, pre.stats.source_count,
                          pre.stats.source_digest};

    std::string csv = "epoch,total,bce,prediction,regularizer,weight_decay,val_balanced_accuracy,val_tau\n";
    for (const auto& e : result.log) {
        csv += std::to_string(e.epoch) + "," + format_double(e.loss.total) + "," +
               format_double(e.loss.bce) + "," + format_double(e.loss.prediction) + "," +
               format_double(e.loss.regularizer) + "," + format_double(e.loss.weight_decay) + "," +
               format_double(e.val_balanced_accuracy) + "," + format_double(e.val_tau) + "\n";
    }

    DirectoryLock lock(cfg.paths.model_dir);
    save_checkpoint(cfg.paths.model_dir / kCheckpoint, ckpt);
    write_text_atomic(cfg.paths.model_dir / kTrainLog, csv);
    write_text_atomic(cfg.paths.model_dir / kBaseline, baseline_to_json(baseline));
    log << "trained " << result.log.size() << " epochs, best epoch " << result.best_epoch
        << ", tau " << format_double(result.threshold.tau) << "\n";
}

EvalReport cmd_eval(const RunConfig& cfg, std::ostream& log) {
    const auto train_set = read_traces(cfg.paths.prep_dir / kTrain);
    const auto val_set = read_traces(cfg.paths.prep_dir / kVal);
    const auto test_set = read_traces(cfg.paths.prep_dir / kTest);
    const Preprocessor pre = load_preprocessor(cfg);
    require_train_stats(pre, train_set);
    const Checkpoint ckpt = load_checkpoint(cfg.paths.model_dir / kCheckpoint);
    if (ckpt.normalization.source_digest != pre.stats.source_digest) {
        throw InputError("checkpoint was trained against different normalization stats");
    }
    const BaselineParams baseline = baseline_from_json(read_text(cfg.paths.model_dir / kBaseline));

    const std::uint64_t seed = eval_seed(cfg);
    UnseenSpec us;
    us.count_per_family = cfg.eval.unseen_count;
    us.length = cfg.eval.unseen_length;
    us.window_dt = cfg.generator.window_dt;
    us.onset_shift = cfg.generator.onset_shift;
    const Dataset unseen_raw = gen_unseen_families(cfg.eval.unseen_families, us, derive_seed(seed, "unseen"));
    const auto unseen = pre.apply(unseen_raw.traces);

    // Every speed shares one seed, so the sets differ only in encryption speed.
    std::vector<SweepSet> sweep;
    for (double speed : cfg.eval.sweep_speeds) {
        const auto raw = gen_speed_set(speed, cfg.eval.sweep_count, cfg.eval.sweep_length,
                                       cfg.generator.window_dt, derive_seed(seed, "sweep"));
        sweep.push_back({speed, pre.apply(raw)});
    }

    ExperimentInputs in;
    in.train = train_set;
    in.val = val_set;
    in.test = test_set;
    in.unseen = unseen;
    in.sweep = sweep;
    in.model = &ckpt.params;
    in.threshold = ckpt.threshold;
    in.baseline = &baseline;
    in.stride = cfg.eval.stride;
    in.persistence = cfg.eval.persistence;
    EvalReport report = run_experiments(in);

    DirectoryLock lock(cfg.paths.report_dir);
    write_report(cfg.paths.report_dir, report);
    const auto& nest = report.summary("nest");
    const auto& base = report.summary("baseline");
    log << "test accuracy: nest " << format_fixed(nest.metrics.accuracy) << ", baseline "
        << format_fixed(base.metrics.accuracy) << "\n";
    log << "report written to " << cfg.paths.report_dir.string() << "\n";
    return report;
}

void cmd_report(const fs::path& report_dir, const fs::path& out_dir, std::ostream& log) {
    const std::pair<const char*, const char*> inputs[] = {
        {"families.csv", "family,model,detection_rate"},
        {"latency.csv", "family,median_s,detected,missed"},
        {"sweep.csv", "speed_mbps,model,accuracy"},
    };
    for (const auto& input : inputs) {
        if (!fs::exists(report_dir / input.first)) {
            throw InputError("missing report artifact " + (report_dir / input.first).string());
        }
    }
    DirectoryLock lock(out_dir);
    reshape_csv(report_dir / "families.csv", inputs[0].second, out_dir / "fig2_detection_rates.csv",
                "family,model,rate");
    reshape_csv(report_dir / "latency.csv", inputs[1].second, out_dir / "fig3_latency.csv",
                "family,median_s,detected,missed");
    reshape_csv(report_dir / "sweep.csv", inputs[2].second, out_dir / "fig4_speed_accuracy.csv",
                "speed_mbps,model,accuracy");
    log << "plot data written to " << out_dir.string() << "\n";
}

int run_command(std::string_view command, const CommandOptions& opts, std::ostream& out,
                std::ostream& err) {
    try {
        const RunConfig cfg = resolve_config(command, opts);
        if (command == "gen") {
            cmd_gen(cfg, out);
        } else if (command == "prep") {
            cmd_prep(cfg, out);
        } else if (command == "train") {
            cmd_train(cfg, out);
        } else if (command == "eval") {
            const auto start = std::chrono::steady_clock::now();
            const EvalReport report = cmd_eval(cfg, out);
            const double seconds =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            std::size_t traces = report.summary("nest").confusion.total();
            for (const auto& u : report.unseen) traces += u.traces;
            for (const auto& s : report.sweep) traces += s.traces;
            err << "timing: eval took " << format_fixed(seconds) << " s ("
                << format_fixed(seconds / static_cast<double>(traces)) << " s per scored trace)\n";
        } else if (command == "report") {
            cmd_report(cfg.paths.report_dir, opts.out.value_or(cfg.paths.report_dir), out);
        } else {
            throw InputError("unknown command " + std::string(command));
        }
        return kExitOk;
    } catch (const DivergenceError& e) {
        err << "nest: training diverged: " << e.what() << " (epoch " << e.where() << ")\n";
        return kExitDivergence;
    } catch (const LeakageError& e) {
        err << "nest: leakage: " << e.what() << "\n";
        return kExitLeakage;
    } catch (const Error& e) {
        err << "nest: " << e.what() << "\n";
        return kExitInput;
    } catch (const fs::filesystem_error& e) {
        err << "nest: " << e.what() << "\n";
        return kExitInput;
    }
}

} // namespace nest
