#include <chrono>
#include <cstdio>
#include <functional>
#include <iomanip>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "gramsld/clustering.hpp"
#include "gramsld/evaluation.hpp"
#include "gramsld/gram_kernels.hpp"
#include "gramsld/key_selection.hpp"
#include "gramsld/orchestrator.hpp"
#include "gramsld/self_labeling.hpp"
#include "oracles.hpp"
#include "scenario_fixture.hpp"
#include "test_util.hpp"

using namespace gramsld;
using testutil::box;
using Clock = std::chrono::steady_clock;

namespace {

struct Verdict {
    bool ok = true;
    std::ostringstream detail;

    void check(bool cond, const std::string& what) {
        if (!cond) {
            if (ok) detail << "failed: ";
            else detail << "; ";
            detail << what;
            ok = false;
        }
    }
};

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::string fmt(double v, int digits = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

// 1
void gradient_check(Verdict& v) {
    const auto start = Clock::now();
    std::mt19937_64 rng(1001);
    double worst = 0;
    for (int kind = 0; kind < 2; ++kind) {
        for (int t = 0; t < 50; ++t) {
            const auto f1 = kind == 0 ? oracle::random_conv(rng) : oracle::random_fc(rng);
            const auto f2 = oracle::random_like(rng, f1);
            const auto l = gram_loss(f1, f2);
            std::vector<double> n1, n2;
            oracle::numeric_gradient(f1, f2, 1e-5, n1, n2);
            const double e = std::max(oracle::relative_error(l.grad_f1, n1), oracle::relative_error(l.grad_f2, n2));
            worst = std::max(worst, e);
            v.check(e < 1e-4, (kind ? "fc" : "conv") + std::string(" map ") + std::to_string(t) + " error " +
                                  std::to_string(e));
        }
    }
    const double secs = seconds_since(start);
    v.check(secs < 10.0, "runtime " + fmt(secs, 2) + " s");
    v.detail << (v.ok ? "" : "; ") << "100 maps, worst relative error " << worst << ", " << fmt(secs, 2) << " s";
}

// 2
void gram_properties(Verdict& v) {
    std::mt19937_64 rng(1002);
    std::normal_distribution<double> z(0, 1);
    double min_q = 1e300;
    int matrices = 0;
    for (int kind = 0; kind < 2; ++kind) {
        for (int t = 0; t < 50; ++t, ++matrices) {
            const auto f = kind == 0 ? oracle::random_conv(rng) : oracle::random_fc(rng);
            const auto g = gram(f);
            const int c = g.size();
            bool sym = true;
            for (int i = 0; i < c; ++i)
                for (int j = 0; j < c; ++j) sym = sym && g(i, j) == g(j, i);
            v.check(sym, "asymmetric gram");
            for (int p = 0; p < 100; ++p) {
                std::vector<double> x(c);
                for (double& e : x) e = z(rng);
                double q = 0;
                for (int i = 0; i < c; ++i)
                    for (int j = 0; j < c; ++j) q += x[i] * g(i, j) * x[j];
                min_q = std::min(min_q, q);
                v.check(q >= -1e-9, "x'Gx = " + std::to_string(q));
            }
            std::vector<int> perm(c);
            std::iota(perm.begin(), perm.end(), 0);
            std::shuffle(perm.begin(), perm.end(), rng);
            auto pf = f;
            for (int pos = 0; pos < f.positions(); ++pos)
                for (int k = 0; k < c; ++k) pf.at(pos, k) = f.at(pos, perm[k]);
            const auto pg = gram(pf);
            bool eq = true;
            for (int i = 0; i < c; ++i)
                for (int j = 0; j < c; ++j) eq = eq && pg(i, j) == g(perm[i], perm[j]);
            v.check(eq, "permutation equivariance broken");
        }
    }
    v.detail << (v.ok ? "" : "; ") << matrices << " matrices, min x'Gx " << min_q;
}

// 3
void epsilon_guard(Verdict& v) {
    std::mt19937_64 rng(1003);
    for (int t = 0; t < 20; ++t) {
        const auto f = t % 2 ? oracle::random_conv(rng) : oracle::random_fc(rng);
        v.check(gram_loss(f, f).value == 1e8, "identical features did not give exactly 1e8");
    }
    const double hand =
        gram_loss(FeatureMap::fully_connected(2, {1, 0}), FeatureMap::fully_connected(2, {0, 0})).value;
    const double expect = 1.0 / (0.25 + 1e-8);
    const double rel = std::abs(hand - expect) / expect;
    v.check(rel <= 1e-9, "hand case relative error " + std::to_string(rel));
    v.detail << (v.ok ? "" : "; ") << "identical -> 1e8 exactly; hand case " << std::setprecision(12) << hand
             << " (relative error " << rel << ")";
}

// 4
void clustering_oracle(Verdict& v) {
    std::mt19937_64 rng(1004);
    auto [pts, truth] = oracle::histogram_blobs(rng, 200, 3);
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < pts.size(); ++i) ids.push_back("h" + std::to_string(i));
    const auto m = select_k(agglomerate(pts), pts, ids, default_k_range(pts.size()));
    const double pur = oracle::purity(m.labels, truth);
    v.check(m.k == 3, "K = " + std::to_string(m.k));
    v.check(pur >= 0.95, "purity " + fmt(pur));
    double worst = 0;
    std::uniform_real_distribution<double> u(0, 1);
    for (int t = 0; t < 200; ++t) {
        const int n = 3 + static_cast<int>(u(rng) * 48);
        const int k = 2 + static_cast<int>(u(rng) * std::min(n - 2, 8));
        std::vector<Point> p(n, Point(6));
        for (auto& row : p)
            for (double& e : row) e = u(rng);
        std::vector<int> labels(n);
        for (int i = 0; i < n; ++i) labels[i] = i < k ? i : static_cast<int>(u(rng) * k);
        const double a = calinski_harabasz(p, labels), b = oracle::calinski_harabasz(p, labels);
        const double err = std::abs(a - b) / std::max(1.0, std::abs(b));
        worst = std::max(worst, err);
        v.check(err <= 1e-9, "CH mismatch " + std::to_string(err));
    }
    v.detail << (v.ok ? "" : "; ") << "K=" << m.k << ", purity " << fmt(pur) << ", CH worst relative diff " << worst
             << " over 200 sets";
}

// 5
void key_selection(Verdict& v) {
    std::mt19937_64 rng(1005);
    for (int n = 1; n <= 400; ++n) {
        for (int p = 1; p <= 100; ++p) {
            const int expect = std::min((p * n + 99) / 100, n);
            if (keys_for_cluster(n, {p / 100.0, std::nullopt}) != expect) {
                v.check(false, "count for N=" + std::to_string(n) + " ratio " + std::to_string(p) + "%");
            }
        }
    }
    std::uniform_int_distribution<int> nk(1, 12), size(1, 40), ent(0, 50);
    for (int trial = 0; trial < 1000; ++trial) {
        ClusterModel m;
        const int k = nk(rng);
        for (int c = 0; c < k; ++c) m.labels.insert(m.labels.end(), size(rng), c);
        std::shuffle(m.labels.begin(), m.labels.end(), rng);
        m.k = k;
        m.sizes.assign(k, 0);
        for (int l : m.labels) ++m.sizes[l];
        std::map<std::string, double> e;
        for (std::size_t i = 0; i < m.labels.size(); ++i) {
            m.sample_ids.push_back("s" + std::to_string(i));
            e[m.sample_ids.back()] = ent(rng) / 10.0;
        }
        const double ratio = std::uniform_int_distribution<int>(1, 1000)(rng) / 1000.0;
        const auto ks = select_keys(m, e, {ratio, std::nullopt});
        for (int c = 0; c < k; ++c) {
            const auto& chosen = ks.by_cluster.at(c);
            const std::set<std::string> in(chosen.begin(), chosen.end());
            double min_in = 1e300;
            for (const auto& id : chosen) min_in = std::min(min_in, e.at(id));
            for (std::size_t i = 0; i < m.labels.size(); ++i) {
                if (m.labels[i] == c && !in.count(m.sample_ids[i]) && e.at(m.sample_ids[i]) > min_in) {
                    v.check(false, "exchange property violated in trial " + std::to_string(trial));
                }
            }
        }
        if (!v.ok) break;
    }
    std::size_t lo = 1u << 30, hi = 0;
    for (int trial = 0; trial < 200; ++trial) {
        std::set<int> cuts = {0, 3851};
        while (cuts.size() < 16) cuts.insert(std::uniform_int_distribution<int>(1, 3850)(rng));
        const std::vector<int> c(cuts.begin(), cuts.end());
        std::size_t total = 0;
        for (int i = 0; i < 15; ++i) total += keys_for_cluster(c[i + 1] - c[i], {0.05, std::nullopt});
        lo = std::min(lo, total);
        hi = std::max(hi, total);
        v.check(total >= 193 && total <= 208, "3851/15 total " + std::to_string(total));
    }
    v.detail << (v.ok ? "" : "; ") << "count formula, 1000 exchange instances, 3851/15/0.05 totals in [" << lo << ", "
             << hi << "]";
}

// 6
void scoring_oracle(Verdict& v) {
    std::mt19937_64 rng(1006);
    const ScoringConfig base{0.9, 0.75, 1.0, 0.01};
    int agree = 0;
    for (int t = 0; t < 1000; ++t) {
        const auto p = oracle::random_pair(rng);
        agree += score(p, base) == oracle::score(p, base.delta_acc, base.delta_iou);
    }
    v.check(agree == 1000, std::to_string(1000 - agree) + " score mismatches");

    std::uniform_int_distribution<int> sc(0, 7), len(1, 40);
    for (int t = 0; t < 500; ++t) {
        std::vector<int> s(len(rng));
        for (int& x : s) x = sc(rng);
        const double beta = std::uniform_int_distribution<int>(1, 40)(rng) / 20.0;
        double sum = 0;
        for (int x : s) sum += x;
        if (cluster_threshold(s, beta) != beta / static_cast<double>(s.size()) * sum) {
            v.check(false, "threshold arithmetic differs");
            break;
        }
    }

    bool mono = true;
    for (int t = 0; t < 200; ++t) {
        const auto p = oracle::random_pair(rng);
        int prev = 1 << 20;
        for (double acc : {0.5, 0.6, 0.7, 0.8, 0.85, 0.9, 0.95, 0.99}) {
            const int s = score(p, {acc, 0.75, 1.0, 0.01});
            mono = mono && s <= prev;
            prev = s;
        }
        prev = 1 << 20;
        for (double io : {0.1, 0.3, 0.5, 0.6, 0.75, 0.9, 0.99}) {
            const int s = score(p, {0.9, io, 1.0, 0.01});
            mono = mono && s <= prev;
            prev = s;
        }
    }
    v.check(mono, "score not monotone in thresholds");

    bool beta_mono = true;
    std::uniform_int_distribution<int> cl(0, 3);
    for (int t = 0; t < 200; ++t) {
        std::map<std::string, Sample> pool;
        std::vector<ScoredSample> scored;
        for (int i = 0; i < 30; ++i) {
            Sample s;
            s.id = "s" + std::to_string(i);
            s.cluster_id = cl(rng);
            pool[s.id] = s;
            ScoredSample x;
            x.prediction.sample_id = s.id;
            x.score = sc(rng);
            scored.push_back(x);
        }
        std::size_t prev = 1000;
        for (double beta : {0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 2.0}) {
            auto copy = pool;
            const auto n = update_pool(copy, scored, {0.9, 0.75, beta, 0.01}).added.size();
            beta_mono = beta_mono && n <= prev;
            prev = n;
        }
    }
    v.check(beta_mono, "accepted set grew with beta");
    v.detail << (v.ok ? "" : "; ") << agree << "/1000 exhaustive agreements, threshold exact, monotone sweeps";
}

// 7
void evaluator(Verdict& v) {
    auto far = [](const std::string& c, double conf) { return box(500, 500, 510, 510, c, conf); };
    auto close = [&](double got, double want, const std::string& what) {
        v.check(std::abs(got - want) <= 1e-9, what + " = " + std::to_string(got) + ", want " + std::to_string(want));
    };
    {
        const BoxesBySample gt = {{"a", {box(0, 0, 10, 10), box(20, 20, 30, 30)}}};
        const BoxesBySample pr = {
            {"a", {box(0, 0, 10, 10, "car", 0.9), far("car", 0.8), box(20, 20, 30, 30, "car", 0.7)}}};
        close(evaluate(pr, gt).map, 0.5 + 0.5 * 2.0 / 3.0, "scenario A mAP");
    }
    {
        const BoxesBySample gt = {
            {"a", {box(0, 0, 10, 10, "car"), box(40, 40, 50, 50, "car"), box(0, 20, 10, 30, "dog")}},
            {"b", {box(5, 5, 15, 15, "car")}},
        };
        const BoxesBySample pr = {
            {"a", {box(0, 0, 10, 10, "car", 0.95), box(0, 0, 10, 9, "car", 0.9), far("car", 0.6),
                   box(0, 20, 10, 23, "dog", 0.7), box(0, 20, 10, 30, "dog", 0.4)}},
            {"b", {box(5, 5, 15, 15, "car", 0.85)}},
        };
        const auto r = evaluate(pr, gt);
        close(r.per_class.at("car"), 5.0 / 9.0, "scenario B car AP");
        close(r.per_class.at("dog"), 0.5, "scenario B dog AP");
        close(r.map, 19.0 / 36.0, "scenario B mAP");
    }
    {
        const BoxesBySample gt = {
            {"s1", {box(0, 0, 10, 10, "car"), box(30, 30, 40, 40, "person")}},
            {"s2", {box(0, 0, 10, 10, "car")}},
        };
        const BoxesBySample pr = {
            {"s1", {box(0, 0, 10, 10, "car", 0.8), box(0, 0, 10, 10, "bike", 0.99)}},
            {"s2", {far("car", 0.8), box(0, 0, 10, 10, "car", 0.5)}},
        };
        close(evaluate(pr, gt).map, 5.0 / 12.0, "scenario C mAP");
    }
    v.check(iou(box(0, 0, 2, 2), box(0, 0, 2, 2)) == 1.0, "IoU identical");
    v.check(iou(box(0, 0, 2, 2), box(3, 3, 4, 4)) == 0.0, "IoU disjoint");
    v.check(iou(box(0, 0, 2, 2), box(1, 1, 3, 3)) == 1.0 / 7.0, "IoU 1/7");
    v.detail << (v.ok ? "" : "; ") << "3 PR scenarios within 1e-9; IoU 1, 0, 1/7 exact";
}

// Synthetic-harness runs shared by 8-12.
struct Harness {
    testutil::TempDir dir{"acceptance"};
    ScenarioConfig sc;
    RunConfig base;
    std::map<std::string, ModeResults> runs;
    std::map<std::string, double> seconds;
    std::map<std::string, double> min_precision;

    Harness() {
        sc.n_train = 600;
        sc.n_test = 2000;
        sc.classes = 6;
        sc.seed = 23;
        base = testutil::scenario_config(dir / "scenario", sc);
        base.selection.ratio = 0.05;
        base.scoring = {0.9, 0.75, 1.0, 0.01};
        base.detector.synthetic.seed = sc.seed;
    }

    const ModeResults& get(const std::string& tag, const std::function<void(RunConfig&)>& tweak) {
        auto it = runs.find(tag);
        if (it != runs.end()) return it->second;
        auto cfg = base;
        cfg.work_dir = dir / ("work_" + tag);
        tweak(cfg);
        const auto start = Clock::now();
        auto r = run_modes(cfg);
        seconds[tag] = seconds_since(start);
        double lo = 1.0;
        for (const auto& rec : read_journal(cfg.work_dir / "journal.jsonl")) {
            if (rec.value("event", "") == "iteration" && !rec.at("pseudo_precision").is_null()) {
                lo = std::min(lo, rec.at("pseudo_precision").get<double>());
            }
        }
        min_precision[tag] = lo;
        return runs.emplace(tag, std::move(r)).first->second;
    }

    const ModeResults& reference() {
        return get("beta_1.0", [](RunConfig&) {});
    }
    const ModeResults& beta(double b) {
        if (b == 1.0) return reference();
        return get("beta_" + fmt(b, 1), [b](RunConfig& c) { c.scoring.beta = b; });
    }
    const ModeResults& rho(double r) {
        return get("rho_" + fmt(r, 1), [r](RunConfig& c) { c.detector.synthetic.rho = r; });
    }
    const ModeResults& ratio(double q) {
        if (q == 0.05) return reference();
        return get("ratio_" + fmt(q, 2), [q](RunConfig& c) { c.selection.ratio = q; });
    }
};

// 8
void end_to_end(Verdict& v, Harness& h) {
    const auto& r = h.reference();
    const double secs = h.seconds.at("beta_1.0");
    const double pmin = h.min_precision.at("beta_1.0");
    v.check(r.iterations <= 12, std::to_string(r.iterations) + " iterations");
    v.check(pmin >= 0.90, "pseudo-label precision " + fmt(pmin));
    v.check(r.it.map + 0.03 <= r.gram_sld.map, "IT + 3 points > Gram-SLD");
    v.check(r.gram_sld.map <= r.fs.map, "Gram-SLD > FS");
    v.check(secs < 120.0, "runtime " + fmt(secs, 1) + " s");
    v.detail << (v.ok ? "" : "; ") << r.iterations << " iterations (" << r.state.termination_reason
             << "), min pseudo precision " << fmt(pmin) << ", IT " << fmt(r.it.map) << " / Gram-SLD "
             << fmt(r.gram_sld.map) << " / FS " << fmt(r.fs.map) << ", " << fmt(secs, 1) << " s";
}

// 9
void beta_direction(Verdict& v, Harness& h) {
    const auto& a = h.beta(0.5);
    const auto& b = h.beta(1.0);
    const auto& c = h.beta(1.5);
    v.check(c.iterations >= b.iterations && b.iterations >= a.iterations, "iteration ordering");
    v.check(c.gram_sld.map >= b.gram_sld.map && b.gram_sld.map >= a.gram_sld.map, "mAP ordering");
    v.detail << (v.ok ? "" : "; ") << "iterations " << a.iterations << "/" << b.iterations << "/" << c.iterations
             << ", mAP " << fmt(a.gram_sld.map) << "/" << fmt(b.gram_sld.map) << "/" << fmt(c.gram_sld.map)
             << " for beta 0.5/1.0/1.5";
}

// 10
void rho_direction(Verdict& v, Harness& h) {
    const double lo = h.rho(0.2).gram_sld.map, hi = h.rho(0.8).gram_sld.map;
    v.check(lo > hi, "rho 0.2 does not beat rho 0.8");
    v.detail << (v.ok ? "" : "; ") << "mAP " << fmt(lo) << " at rho 0.2 vs " << fmt(hi) << " at rho 0.8";
}

// 11
void ratio_saturation(Verdict& v, Harness& h) {
    const double q2 = h.ratio(0.02).gram_sld.map, q5 = h.ratio(0.05).gram_sld.map, q10 = h.ratio(0.10).gram_sld.map;
    v.check(q10 - q5 < q5 - q2, "gain did not shrink");
    v.detail << (v.ok ? "" : "; ") << "mAP " << fmt(q2) << " / " << fmt(q5) << " / " << fmt(q10)
             << " at ratio 0.02/0.05/0.10, gains " << fmt(q5 - q2) << " then " << fmt(q10 - q5);
}

// 12
void determinism(Verdict& v, Harness& h) {
    h.reference();
    auto cfg = h.base;
    cfg.work_dir = h.dir / "work_repeat";
    run_pipeline(cfg);
    const auto a = testutil::read_text(h.dir / "work_beta_1.0" / "journal.jsonl");
    const auto b = testutil::read_text(cfg.work_dir / "journal.jsonl");
    v.check(!a.empty() && a == b, "journals differ");
    v.detail << (v.ok ? "" : "; ") << a.size() << "-byte journals " << (a == b ? "identical" : "differ");
}

}  // namespace

int main() {
    Harness harness;
    const std::vector<std::pair<std::string, std::function<void(Verdict&)>>> criteria = {
        {"gram gradient check", gradient_check},
        {"gram matrix properties", gram_properties},
        {"degenerate-loss guard", epsilon_guard},
        {"clustering oracle", clustering_oracle},
        {"key selection", key_selection},
        {"scoring oracle", scoring_oracle},
        {"mAP evaluator", evaluator},
        {"end-to-end synthetic run", [&](Verdict& v) { end_to_end(v, harness); }},
        {"beta direction", [&](Verdict& v) { beta_direction(v, harness); }},
        {"correlation direction", [&](Verdict& v) { rho_direction(v, harness); }},
        {"key-ratio saturation", [&](Verdict& v) { ratio_saturation(v, harness); }},
        {"determinism", [&](Verdict& v) { determinism(v, harness); }},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Verdict v;
        try {
            criteria[i].second(v);
        } catch (const std::exception& e) {
            v.check(false, std::string("exception: ") + e.what());
        }
        failed += !v.ok;
        std::printf("%s %2zu %s: %s\n", v.ok ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                    v.detail.str().c_str());
        std::fflush(stdout);
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed ? 1 : 0;
}
