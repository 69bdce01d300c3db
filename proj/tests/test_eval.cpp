#include "nest/error.hpp"
#include "nest/eval.hpp"
#include "nest/generator.hpp"
#include "nest/trace_io.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace nest;

namespace {

StateTrace flat_trace(std::string id, Label label, std::string family, std::vector<double> entropy,
                      std::size_t dim = 2) {
    StateTrace t;
    t.id = std::move(id);
    t.dim = dim;
    t.label = label;
    t.family = std::move(family);
    for (double e : entropy) {
        t.features.push_back(e);
        for (std::size_t j = 1; j < dim; ++j) t.features.push_back(0.1 * static_cast<double>(j));
    }
    t.actions.assign(entropy.size() - 1, 0);
    return t;
}

// Model whose score is a monotone function of the mean residual: with
// zero dynamics the residual is the state increment.
ModelParams increment_detector(std::size_t d) {
    ModelParams p = zero_params({d, kActionAlphabetSize, 1, 2});
    const ParamLayout L(p.shape);
    p.values[L.head_w()] = 50.0;
    p.values[L.head_b()] = -5.0;
    return p;
}

StateTrace jumpy(std::string id, bool ransomware, std::size_t n, std::string family = "") {
    std::vector<double> e(n);
    for (std::size_t t = 0; t < n; ++t) e[t] = ransomware ? (t % 2 == 0 ? 0.8 : -0.8) : 0.0;
    if (family.empty()) family = ransomware ? "lockbit3" : "benign";
    return flat_trace(std::move(id), ransomware ? Label::Ransomware : Label::Benign, family, e);
}

} // namespace

TEST_CASE("confusion counts") {
    std::vector<Label> y(10);
    for (std::size_t i = 0; i < 10; ++i) y[i] = i < 5 ? Label::Ransomware : Label::Benign;
    CHECK(confusion(y, y) == Confusion{5, 0, 5, 0});
    std::vector<Label> inv(10);
    for (std::size_t i = 0; i < 10; ++i) inv[i] = i < 5 ? Label::Benign : Label::Ransomware;
    CHECK(confusion(inv, y) == Confusion{0, 5, 0, 5});
    CHECK_THROWS_AS(confusion(y, std::span<const Label>(inv).subspan(0, 3)), InputError);
    CHECK_THROWS_AS(confusion(std::vector<Label>{}, std::vector<Label>{}), InputError);
}

TEST_CASE("confusion matches a recount on random pairs") {
    std::mt19937_64 rng(1);
    std::bernoulli_distribution coin(0.5);
    for (int rep = 0; rep < 200; ++rep) {
        const std::size_t n = 1 + rep % 30;
        std::vector<Label> p(n), y(n);
        for (std::size_t i = 0; i < n; ++i) {
            p[i] = coin(rng) ? Label::Ransomware : Label::Benign;
            y[i] = coin(rng) ? Label::Ransomware : Label::Benign;
        }
        Confusion c;
        for (std::size_t i = 0; i < n; ++i) {
            const bool pp = p[i] == Label::Ransomware, yy = y[i] == Label::Ransomware;
            if (pp && yy) ++c.tp;
            if (pp && !yy) ++c.fp;
            if (!pp && !yy) ++c.tn;
            if (!pp && yy) ++c.fn;
        }
        REQUIRE(confusion(p, y) == c);
        REQUIRE(c.total() == n);
    }
}

TEST_CASE("metrics examples and zero rules") {
    const auto m = metrics({9, 1, 9, 1});
    CHECK(m.accuracy == doctest::Approx(0.9));
    CHECK(m.precision == doctest::Approx(0.9));
    CHECK(m.recall == doctest::Approx(0.9));
    CHECK(m.f1 == doctest::Approx(0.9));
    const auto z = metrics({0, 0, 5, 3});
    CHECK(z.precision == 0.0);
    CHECK(z.recall == 0.0);
    CHECK(z.f1 == 0.0);
    CHECK_THROWS_AS(metrics({}), InputError);
}

TEST_CASE("metrics agree with the direct formulas on fuzzed confusions") {
    std::mt19937_64 rng(2);
    std::uniform_int_distribution<std::size_t> u(0, 20);
    for (int rep = 0; rep < 500; ++rep) {
        Confusion c{u(rng), u(rng), u(rng), u(rng)};
        if (c.total() == 0) continue;
        const auto m = metrics(c);
        const double n = static_cast<double>(c.total());
        REQUIRE(m.accuracy == 1.0 - static_cast<double>(c.fp + c.fn) / n);
        const double p = c.tp + c.fp ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp) : 0.0;
        const double r = c.tp + c.fn ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn) : 0.0;
        const double f = p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
        REQUIRE(m.precision == doctest::Approx(p));
        REQUIRE(m.recall == doctest::Approx(r));
        REQUIRE(m.f1 == doctest::Approx(f));
        REQUIRE(m.f1 >= std::min(p, r) - 1e-12);
        REQUIRE(m.f1 <= std::max(p, r) + 1e-12);
    }
}

TEST_CASE("rates examples") {
    CHECK(rates({5, 0, 5, 2}).fpr == 0.0);
    const auto sym = rates({4, 2, 4, 2});
    CHECK(sym.fpr == sym.fnr);
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<std::size_t> u(1, 20);
    for (int rep = 0; rep < 100; ++rep) {
        Confusion c{u(rng), u(rng), u(rng), u(rng)};
        const auto r = rates(c);
        REQUIRE(r.fpr == static_cast<double>(c.fp) / static_cast<double>(c.fp + c.tn));
        REQUIRE(r.fnr == static_cast<double>(c.fn) / static_cast<double>(c.fn + c.tp));
    }
    CHECK_THROWS_AS(rates({3, 0, 0, 1}), InputError);
    CHECK_THROWS_AS(rates({0, 2, 3, 0}), InputError);
}

TEST_CASE("median and fixed formatting") {
    CHECK(median({3.0, 1.0, 2.0}) == 2.0);
    CHECK(median({4.0, 1.0, 2.0, 3.0}) == 2.5);
    CHECK(std::isnan(median({})));
    CHECK(format_fixed(0.5) == "0.500000");
    CHECK(format_fixed(NAN) == "nan");
}

TEST_CASE("max run mean examples") {
    const auto t = flat_trace("a", Label::Benign, "benign", {0.0, 1.0, 1.0, 0.0, 0.5});
    CHECK(max_run_mean(t, 0, 1) == 1.0);
    CHECK(max_run_mean(t, 0, 2) == 1.0);
    CHECK(max_run_mean(t, 0, 3) == doctest::Approx(2.0 / 3.0));
    CHECK(max_run_mean(t, 0, 50) == doctest::Approx(2.5 / 5.0));
}

TEST_CASE("baseline clauses") {
    BaselineParams params;
    params.theta = 0.5;
    params.window = 2;
    params.benign_mean = {0.0, 0.0};

    SUBCASE("neither clause fires") {
        const auto t = flat_trace("b", Label::Benign, "benign", {0.1, 0.2, 0.1, 0.0});
        params.signatures.push_back({"lockbit3", {-1.0, 0.0}});
        CHECK(baseline_detect(t, params).label == Label::Benign);
    }
    SUBCASE("signature clause fires on the signature's own source") {
        const auto t = flat_trace("r", Label::Ransomware, "lockbit3", {0.1, 0.3, 0.2, 0.2});
        params.signatures.push_back({"lockbit3", post_peak_profile(t, 0, params.benign_mean)});
        CHECK(signature_match(t, params) == doctest::Approx(1.0));
        const auto r = baseline_detect(t, params);
        CHECK(r.label == Label::Ransomware);
        CHECK(r.score == doctest::Approx(0.05));
    }
    SUBCASE("run clause fires") {
        const auto t = flat_trace("h", Label::Ransomware, "hive", {0.0, 0.9, 0.9, 0.0});
        CHECK(baseline_detect(t, params).label == Label::Ransomware);
    }
    SUBCASE("unfitted") {
        CHECK_THROWS_AS(baseline_detect(flat_trace("u", Label::Benign, "benign", {0.0, 0.0}), BaselineParams{}),
                        InputError);
    }
}

TEST_CASE("baseline grid search equals an exhaustive scan") {
    std::mt19937_64 rng(8);
    for (int rep = 0; rep < 10; ++rep) {
        std::vector<StateTrace> train;
        for (int i = 0; i < 12; ++i) {
            const bool bad = i % 3 == 0;
            train.push_back(testutil::random_trace(rng, 40, 4, bad ? Label::Ransomware : Label::Benign,
                                                   bad ? -0.6 : -1.0, bad ? 1.0 : 0.7,
                                                   bad ? (i % 2 ? "conti" : "hive") : "benign"));
        }
        BaselineGrid grid;
        grid.thetas = {-0.2, 0.0, 0.2, 0.4, 0.6};
        grid.windows = {2, 4, 8, 64};
        const auto fitted = fit_baseline(train, grid);

        double best = -1.0, best_theta = 0.0;
        std::size_t best_w = 0;
        for (std::size_t w : grid.windows) {
            for (double theta : grid.thetas) {
                BaselineParams p = fitted;
                p.theta = theta;
                p.window = w;
                double tp = 0, tn = 0, pos = 0, neg = 0;
                for (const auto& t : train) {
                    const bool flagged = baseline_detect(t, p).label == Label::Ransomware;
                    if (t.label == Label::Ransomware) {
                        ++pos;
                        tp += flagged;
                    } else {
                        ++neg;
                        tn += !flagged;
                    }
                }
                const double bal = 0.5 * (tp / pos + tn / neg);
                if (bal > best) {
                    best = bal;
                    best_theta = theta;
                    best_w = w;
                }
            }
        }
        REQUIRE(fitted.theta == best_theta);
        REQUIRE(fitted.window == best_w);
        REQUIRE(fitted.signatures.size() == 2);
    }
}

TEST_CASE("default baseline grid") {
    const auto g = default_baseline_grid();
    CHECK(g.thetas.size() == 41);
    CHECK(g.thetas.front() == -1.0);
    CHECK(g.thetas.back() == 1.0);
    CHECK(g.windows.size() == 10);
}

TEST_CASE("leakage is refused") {
    const std::vector<StateTrace> train{jumpy("a", false, 10), jumpy("b", true, 10)};
    const std::vector<StateTrace> val{jumpy("c", false, 10), jumpy("d", true, 10)};
    const std::vector<StateTrace> test{jumpy("e", false, 10), jumpy("b", true, 10)};
    ExperimentInputs in;
    in.train = train;
    in.val = val;
    in.test = test;
    CHECK_THROWS_AS(check_leakage(in), LeakageError);

    const std::vector<StateTrace> clean{jumpy("e", false, 10), jumpy("f", true, 10)};
    in.test = clean;
    CHECK_NOTHROW(check_leakage(in));
    const std::vector<SweepSet> sweep{{10.0, {jumpy("c", true, 10)}}};
    in.sweep = sweep;
    CHECK_THROWS_AS(check_leakage(in), LeakageError);
}

namespace {

struct Toy {
    std::vector<StateTrace> train, val, test, unseen;
    std::vector<SweepSet> sweep;
    ModelParams model = increment_detector(2);
    BaselineParams baseline;

    Toy() {
        for (int i = 0; i < 6; ++i) {
            train.push_back(jumpy("tr" + std::to_string(i), i % 2, 64));
            val.push_back(jumpy("va" + std::to_string(i), i % 2, 64));
        }
        const char* fams[] = {"lockbit3", "blackcat", "hive", "conti", "babuk"};
        for (int i = 0; i < 10; ++i) {
            test.push_back(jumpy(make_trace_id("benign", i, Evasion::None), false, 64));
            auto r = jumpy(make_trace_id(fams[i % 5], i, Evasion::None), true, 64, fams[i % 5]);
            r.window_dt = 0.025;
            test.push_back(r);
        }
        test[1].id = make_trace_id("lockbit3", 0, Evasion::Delayed);
        for (int i = 0; i < 4; ++i) unseen.push_back(jumpy("un" + std::to_string(i), true, 64, i % 2 ? "royal" : "play"));
        for (double speed : {1.0, 5.0, 10.0, 25.0, 50.0}) {
            SweepSet s{speed, {}};
            for (int i = 0; i < 6; ++i) s.traces.push_back(jumpy("sw" + std::to_string(speed) + "-" + std::to_string(i), i % 2, 64));
            sweep.push_back(s);
        }
        baseline = fit_baseline(train);
    }

    ExperimentInputs inputs() const {
        ExperimentInputs in;
        in.train = train;
        in.val = val;
        in.test = test;
        in.unseen = unseen;
        in.sweep = sweep;
        in.model = &model;
        in.threshold = {0.5, "val:test"};
        in.baseline = &baseline;
        return in;
    }
};

} // namespace

TEST_CASE("report on a perfect separator") {
    const Toy toy;
    const auto report = run_experiments(toy.inputs());
    const auto& nest = report.summary("nest");
    CHECK(nest.metrics.accuracy == 1.0);
    CHECK(nest.metrics.precision == 1.0);
    CHECK(nest.metrics.recall == 1.0);
    CHECK(nest.metrics.f1 == 1.0);
    CHECK(nest.rates.fpr == 0.0);
    CHECK(nest.rates.fnr == 0.0);
    CHECK(nest.confusion.total() == toy.test.size());

    REQUIRE(report.sweep.size() == 10);
    for (const auto& p : report.sweep) {
        CHECK(p.accuracy >= 0.0);
        CHECK(p.accuracy <= 1.0);
        CHECK(p.traces >= 6);
    }
    CHECK(report.family_rate("evasion:delayed", "nest") == 1.0);
    CHECK(report.family_rate("evasive", "nest") == 1.0);
    CHECK(report.family_rate("non_evasive", "nest") == 1.0);
    CHECK_THROWS_AS(report.family_rate("evasion:memory_resident", "nest"), InputError);
    CHECK(report.unseen.size() == 4);
    CHECK(report.unseen_accuracy("royal", "nest") == 1.0);
    CHECK(report.latency.size() == 5);
    for (const auto& row : report.latency) {
        CHECK(row.detected + row.missed == 2);
        CHECK(row.median_s == doctest::Approx(24 * 0.025)); // three stride-8 prefixes
    }
}

TEST_CASE("reports are written deterministically with the documented headers") {
    const Toy toy;
    testutil::TempDir a("report-a"), b("report-b");
    write_report(a.path(), run_experiments(toy.inputs()));
    write_report(b.path(), run_experiments(toy.inputs()));
    for (const char* f : {"metrics.csv", "latency.csv", "sweep.csv", "families.csv", "unseen.csv", "report.json"}) {
        CHECK(read_text(a.path() / f) == read_text(b.path() / f));
    }
    CHECK(read_text(a.path() / "metrics.csv").rfind("model,metric,value\n", 0) == 0);
    CHECK(read_text(a.path() / "latency.csv").rfind("family,median_s,detected,missed\n", 0) == 0);
    CHECK(read_text(a.path() / "sweep.csv").rfind("speed_mbps,model,accuracy\n", 0) == 0);
    CHECK(read_text(a.path() / "families.csv").rfind("family,model,detection_rate\n", 0) == 0);
    CHECK(read_text(a.path() / "metrics.csv").find("nest,accuracy,1.000000\n") != std::string::npos);
}
