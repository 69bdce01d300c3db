#include "nest/eval.hpp"

#include "nest/error.hpp"
#include "nest/generator.hpp"
#include "nest/trace_io.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <set>

namespace nest {

using nlohmann::ordered_json;

const ModelSummary& EvalReport::summary(std::string_view model) const {
    for (const auto& m : models) {
        if (m.model == model) return m;
    }
    throw InputError("no summary for model " + std::string(model));
}

double EvalReport::family_rate(std::string_view family, std::string_view model) const {
    for (const auto& r : families) {
        if (r.family == family && r.model == model) return r.rate;
    }
    throw InputError("no detection rate for " + std::string(family));
}

double EvalReport::unseen_accuracy(std::string_view family, std::string_view model) const {
    for (const auto& r : unseen) {
        if (r.family == family && r.model == model) return r.accuracy;
    }
    throw InputError("no unseen accuracy for " + std::string(family));
}

double EvalReport::sweep_accuracy(double speed, std::string_view model) const {
    for (const auto& p : sweep) {
        if (p.speed_mbps == speed && p.model == model) return p.accuracy;
    }
    throw InputError("no sweep point at this speed");
}

void check_leakage(const ExperimentInputs& in) {
    std::set<std::string> fitted;
    for (const auto& t : in.train) fitted.insert(t.id);
    for (const auto& t : in.val) fitted.insert(t.id);
    auto check = [&](std::span<const StateTrace> traces, const char* what) {
        for (const auto& t : traces) {
            if (fitted.count(t.id)) {
                throw LeakageError(std::string(what) + " trace " + t.id + " was used for fitting");
            }
        }
    };
    check(in.test, "test");
    check(in.unseen, "unseen");
    for (const auto& s : in.sweep) check(s.traces, "sweep");
}

namespace {

constexpr std::string_view kNest = "nest";
constexpr std::string_view kBaseline = "baseline";

struct Scored {
    std::vector<Label> nest;
    std::vector<Label> baseline;
};

Scored predict(std::span<const StateTrace> traces, const ExperimentInputs& in) {
    Scored s;
    s.nest.reserve(traces.size());
    s.baseline.reserve(traces.size());
    for (const auto& t : traces) {
        s.nest.push_back(classify(t, *in.model, in.threshold.tau).label);
        s.baseline.push_back(baseline_detect(t, *in.baseline).label);
    }
    return s;
}

std::vector<Label> labels_of(std::span<const StateTrace> traces) {
    std::vector<Label> out;
    out.reserve(traces.size());
    for (const auto& t : traces) out.push_back(t.label);
    return out;
}

ModelSummary summarize(std::string_view model, std::span<const Label> preds, std::span<const Label> labels) {
    ModelSummary s;
    s.model = std::string(model);
    s.confusion = confusion(preds, labels);
    s.metrics = metrics(s.confusion);
    s.rates = rates(s.confusion);
    return s;
}

double accuracy_of(std::span<const Label> preds, std::span<const Label> labels) {
    return metrics(confusion(preds, labels)).accuracy;
}

// Detection rate of each model over the ransomware traces selected by `keep`.
template <class Keep>
void add_family_rate(EvalReport& report, std::string family, std::span<const StateTrace> test,
                     const Scored& pred, Keep keep) {
    std::size_t n = 0, nest_hits = 0, base_hits = 0;
    for (std::size_t i = 0; i < test.size(); ++i) {
        if (test[i].label != Label::Ransomware || !keep(test[i])) continue;
        ++n;
        nest_hits += pred.nest[i] == Label::Ransomware ? 1 : 0;
        base_hits += pred.baseline[i] == Label::Ransomware ? 1 : 0;
    }
    if (n == 0) return;
    const auto dn = static_cast<double>(n);
    report.families.push_back({family, std::string(kNest), static_cast<double>(nest_hits) / dn, n});
    report.families.push_back({family, std::string(kBaseline), static_cast<double>(base_hits) / dn, n});
}

} // namespace

EvalReport run_experiments(const ExperimentInputs& in) {
    if (in.model == nullptr || in.baseline == nullptr) throw InputError("model and baseline required");
    if (in.test.empty()) throw InputError("test split is empty");
    check_leakage(in);

    EvalReport report;
    report.threshold = in.threshold;

    const auto labels = labels_of(in.test);
    const Scored pred = predict(in.test, in);
    report.models.push_back(summarize(kNest, pred.nest, labels));
    report.models.push_back(summarize(kBaseline, pred.baseline, labels));

    for (const auto& tmpl : training_templates()) {
        add_family_rate(report, tmpl.name, in.test, pred,
                        [&](const StateTrace& t) { return t.family == tmpl.name; });
    }
    for (Evasion e : kAllEvasions) {
        if (e == Evasion::None) continue;
        add_family_rate(report, "evasion:" + std::string(to_string(e)), in.test, pred,
                        [&](const StateTrace& t) { return evasion_of(t) == e; });
    }
    add_family_rate(report, "evasive", in.test, pred,
                    [](const StateTrace& t) { return evasion_of(t) != Evasion::None; });
    add_family_rate(report, "non_evasive", in.test, pred,
                    [](const StateTrace& t) { return evasion_of(t) == Evasion::None; });

    for (const auto& tmpl : training_templates()) {
        LatencyRow row;
        row.family = tmpl.name;
        std::vector<double> seconds;
        for (const auto& t : in.test) {
            if (t.family != tmpl.name || t.label != Label::Ransomware) continue;
            const auto idx = classify_prefix(t, *in.model, in.threshold.tau, in.stride, in.persistence);
            if (idx) {
                seconds.push_back(static_cast<double>(*idx) * t.window_dt);
            } else {
                ++row.missed;
            }
        }
        row.detected = seconds.size();
        if (row.detected + row.missed == 0) continue;
        row.median_s = median(std::move(seconds));
        report.latency.push_back(row);
    }

    // Unseen families are scored together with the benign test traces so
    // accuracy stays a two-class quantity.
    std::vector<std::string> unseen_families;
    for (const auto& t : in.unseen) {
        if (std::find(unseen_families.begin(), unseen_families.end(), t.family) == unseen_families.end()) {
            unseen_families.push_back(t.family);
        }
    }
    std::vector<StateTrace> benign_test;
    for (const auto& t : in.test) {
        if (t.label == Label::Benign) benign_test.push_back(t);
    }
    for (const auto& family : unseen_families) {
        std::vector<StateTrace> set = benign_test;
        for (const auto& t : in.unseen) {
            if (t.family == family) set.push_back(t);
        }
        const auto lab = labels_of(set);
        const Scored p = predict(set, in);
        report.unseen.push_back({family, std::string(kNest), accuracy_of(p.nest, lab), set.size()});
        report.unseen.push_back({family, std::string(kBaseline), accuracy_of(p.baseline, lab), set.size()});
    }

    for (const auto& s : in.sweep) {
        const auto lab = labels_of(s.traces);
        const Scored p = predict(s.traces, in);
        report.sweep.push_back({s.speed_mbps, std::string(kNest), accuracy_of(p.nest, lab), s.traces.size()});
        report.sweep.push_back({s.speed_mbps, std::string(kBaseline), accuracy_of(p.baseline, lab), s.traces.size()});
    }
    return report;
}

namespace {

ordered_json number_or_null(double x) {
    return std::isnan(x) ? ordered_json(nullptr) : ordered_json(x);
}

} // namespace

void write_report(const std::filesystem::path& dir, const EvalReport& report) {
    std::filesystem::create_directories(dir);

    std::string metrics_csv = "model,metric,value\n";
    for (const auto& m : report.models) {
        const std::pair<const char*, double> rows[] = {
            {"accuracy", m.metrics.accuracy}, {"precision", m.metrics.precision},
            {"recall", m.metrics.recall},     {"f1", m.metrics.f1},
            {"fpr", m.rates.fpr},             {"fnr", m.rates.fnr},
        };
        for (const auto& [name, value] : rows) {
            metrics_csv += m.model + "," + name + "," + format_fixed(value) + "\n";
        }
    }

    std::string latency_csv = "family,median_s,detected,missed\n";
    for (const auto& r : report.latency) {
        latency_csv += r.family + "," + format_fixed(r.median_s) + "," + std::to_string(r.detected) +
                       "," + std::to_string(r.missed) + "\n";
    }

    std::string sweep_csv = "speed_mbps,model,accuracy\n";
    for (const auto& p : report.sweep) {
        sweep_csv += format_double(p.speed_mbps) + "," + p.model + "," + format_fixed(p.accuracy) + "\n";
    }

    std::string families_csv = "family,model,detection_rate\n";
    for (const auto& r : report.families) {
        families_csv += r.family + "," + r.model + "," + format_fixed(r.rate) + "\n";
    }

    std::string unseen_csv = "family,model,accuracy\n";
    for (const auto& r : report.unseen) {
        unseen_csv += r.family + "," + r.model + "," + format_fixed(r.accuracy) + "\n";
    }

    ordered_json doc;
    doc["threshold"] = {{"tau", report.threshold.tau}, {"provenance", report.threshold.provenance}};
    ordered_json models = ordered_json::array();
    for (const auto& m : report.models) {
        models.push_back({{"model", m.model},
                          {"tp", m.confusion.tp},
                          {"fp", m.confusion.fp},
                          {"tn", m.confusion.tn},
                          {"fn", m.confusion.fn},
                          {"accuracy", m.metrics.accuracy},
                          {"precision", m.metrics.precision},
                          {"recall", m.metrics.recall},
                          {"f1", m.metrics.f1},
                          {"fpr", m.rates.fpr},
                          {"fnr", m.rates.fnr}});
    }
    doc["models"] = models;
    ordered_json fams = ordered_json::array();
    for (const auto& r : report.families) {
        fams.push_back({{"family", r.family}, {"model", r.model}, {"detection_rate", r.rate}, {"traces", r.traces}});
    }
    doc["families"] = fams;
    ordered_json lat = ordered_json::array();
    for (const auto& r : report.latency) {
        lat.push_back({{"family", r.family},
                       {"median_s", number_or_null(r.median_s)},
                       {"detected", r.detected},
                       {"missed", r.missed}});
    }
    doc["latency"] = lat;
    ordered_json unseen = ordered_json::array();
    for (const auto& r : report.unseen) {
        unseen.push_back({{"family", r.family}, {"model", r.model}, {"accuracy", r.accuracy}, {"traces", r.traces}});
    }
    doc["unseen"] = unseen;
    ordered_json sweep = ordered_json::array();
    for (const auto& p : report.sweep) {
        sweep.push_back({{"speed_mbps", p.speed_mbps}, {"model", p.model}, {"accuracy", p.accuracy}, {"traces", p.traces}});
    }
    doc["sweep"] = sweep;

    write_text_atomic(dir / "metrics.csv", metrics_csv);
    write_text_atomic(dir / "latency.csv", latency_csv);
    write_text_atomic(dir / "sweep.csv", sweep_csv);
    write_text_atomic(dir / "families.csv", families_csv);
    write_text_atomic(dir / "unseen.csv", unseen_csv);
    write_text_atomic(dir / "report.json", doc.dump(2) + "\n");
}

} // namespace nest
