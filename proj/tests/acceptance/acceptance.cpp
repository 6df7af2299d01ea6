// Acceptance run: one PASS/FAIL line per criterion with the measured values.

#include "support/oracles.hpp"

#include <chrono>
#include <cstdio>
#include <thread>

using namespace regmpc;
using namespace regmpc::testing;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void report(int id, bool ok, const std::string& detail) {
    std::printf("%s criterion %d: %s\n", ok ? "PASS" : "FAIL", id, detail.c_str());
    std::fflush(stdout);
    failures += ok ? 0 : 1;
}

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

bool within(double v, double target, double tol) { return std::abs(v - target) <= tol; }

// Largest state/input gap between any two strategies on any trajectory.
double pairwise_deviation(const StrategyComparison& cmp) {
    double dev = 0.0;
    for (std::size_t a = 0; a < cmp.traces.size(); ++a)
        for (std::size_t b = a + 1; b < cmp.traces.size(); ++b)
            for (std::size_t i = 0; i < cmp.traces[a].size(); ++i)
                dev = std::max(dev, trace_deviation(cmp.traces[a][i], cmp.traces[b][i]));
    return dev;
}

const std::vector<Strategy> kStrategies{Strategy::EveryStepQp, Strategy::SinglePolytope, Strategy::CandidateFamily,
                                        Strategy::GammaOracle};

constexpr int kTrajectories = 1000;
constexpr std::uint64_t kSeed = 42;
constexpr std::uint64_t kNetSeed = 7;

struct ExampleRun {
    StrategyComparison cmp;
    double atlas_s = 0.0, batch_s = 0.0;
    std::size_t atlas_sets = 0;
    [[nodiscard]] const BatchStats& stats(Strategy s) const { return cmp.stats.at(static_cast<std::size_t>(s)); }
};

ExampleRun run_example(const Problem& p, int grid, unsigned threads) {
    ExampleRun r;
    auto t0 = Clock::now();
    const ActiveSetAtlas atlas = enumerate_by_grid(p.qp, p.spec.Xset, grid, threads);
    r.atlas_s = seconds_since(t0);
    r.atlas_sets = atlas.entries.size();
    SimOptions opt;
    opt.atlas = &atlas;
    t0 = Clock::now();
    r.cmp = compare_strategies(p, kStrategies, kTrajectories, kSeed, opt, threads);
    r.batch_s = seconds_since(t0);
    return r;
}

bool property_suites(std::string& detail) {
    int bad = 0;
    auto check = [&](bool ok, const char* what) {
        if (!ok) {
            ++bad;
            detail += std::string(" [") + what + " failed]";
        }
    };
    const Problem& e1 = ex1();
    const Problem& pd = pendulum();

    // Affine law optimal on its polytope.
    {
        std::mt19937_64 rng(1);
        int sets = 0;
        double worst = 0.0;
        for (const auto& A : harvest_active_sets(e1, 3000, 2)) {
            const RegionalLaw rl = regional_law(e1.qp, A);
            const auto pts = interior_samples(rl.region, 20, rng);
            if (pts.size() < 20)
                continue;
            for (const auto& x : pts)
                worst = std::max(worst, (rl.law(x) - solve_qp(e1.qp, x).U_star).cwiseAbs().maxCoeff());
            if (++sets == 50)
                break;
        }
        check(sets == 50 && worst <= 1e-6, "region law");
        detail += fmt(" law-on-region: %d sets, max err %.1e;", sets, worst);
    }
    // Stage-subset law equals the head of the full law.
    {
        double worst = 0.0;
        int sets = 0;
        for (const Problem* p : {&e1, &pd}) {
            std::set<ActiveSet> seen;
            for (const auto& x : feasible_states(*p, 1500, 3)) {
                const QpResult r = solve_qp(p->qp, x);
                for (const ActiveSet& A : {r.active, r.working_set}) {
                    if (!criterion_applies(p->qp, A) || !seen.insert(A).second)
                        continue;
                    const FeedbackLaw s = simplified_feedback(p->qp, stage_subset(A, p->qp.q_stage));
                    const FeedbackLaw h = feedback_head(control_law_from_active_set(p->qp, A), p->qp.m);
                    worst = std::max({worst, (s.K - h.K).cwiseAbs().maxCoeff(), (s.b - h.b).cwiseAbs().maxCoeff()});
                    ++sets;
                }
            }
        }
        check(worst <= 1e-8, "common law");
        detail += fmt(" common-law: %d sets, max err %.1e;", sets, worst);
    }
    // Candidates the QP never returns have empty polytopes.
    {
        // Example 1 has about 40 such candidates; the pendulum supplies the rest.
        const auto u1 = nonexistent_candidates(e1, grid_active_sets(e1, 201), 50);
        const auto u2 = nonexistent_candidates(pd, sampled_active_sets(pd, 3000, 7), 50 - u1.size());
        int empty = 0;
        for (const auto& c : u1)
            empty += polytope_is_empty(polytope_from_active_set(e1.qp, c)) ? 1 : 0;
        for (const auto& c : u2)
            empty += polytope_is_empty(polytope_from_active_set(pd.qp, c)) ? 1 : 0;
        const std::size_t total = u1.size() + u2.size();
        check(total == 50 && empty == 50, "emptiness");
        detail += fmt(" emptiness: %d/%zu (%zu Example 1, %zu pendulum);", empty, total, u1.size(), u2.size());
    }
    // Terminal set invariant and admissible.
    {
        int viol = 0;
        for (const Problem* p : {&e1, &pd}) {
            std::mt19937_64 rng(4);
            const Matrix& K = p->terminal.lqr.K;
            const Matrix Acl = p->spec.sys.A + p->spec.sys.B * K;
            for (const auto& x : interior_samples(p->terminal.Tset, 1000, rng, 0.0)) {
                viol += !polytope_contains(p->terminal.Tset, Acl * x) || !polytope_contains(p->spec.Xset, x) ||
                        !polytope_contains(p->spec.Uset, K * x);
            }
        }
        check(viol == 0, "terminal set");
        detail += fmt(" terminal-set violations: %d;", viol);
    }
    // KKT residuals.
    {
        double worst = 0.0;
        for (const Problem* p : {&e1, &pd}) {
            for (const auto& x : feasible_states(*p, 500, 5)) {
                const QpResult r = solve_qp(p->qp, x);
                const KktResiduals k = kkt_residuals(p->qp, x, r);
                worst = std::max({worst, k.stationarity, k.primal, k.complementarity, -k.min_multiplier});
            }
        }
        check(worst <= 1e-7, "kkt");
        detail += fmt(" kkt max %.1e;", worst);
    }
    // Codec round-trips.
    {
        std::mt19937_64 rng(6);
        int bad_rt = 0;
        for (int q : {8, 32, 138}) {
            std::bernoulli_distribution bit(0.2);
            for (int t = 0; t < 1000; ++t) {
                std::vector<int> idx;
                for (int i = 1; i <= q; ++i)
                    if (bit(rng))
                        idx.push_back(i);
                const ActiveSet A(idx);
                bad_rt += netsim::decode_active_set(netsim::encode_active_set(A, q)) != A;
            }
        }
        check(bad_rt == 0, "codec");
        detail += fmt(" codec mismatches: %d", bad_rt);
    }
    return bad == 0;
}

}  // namespace

int main() {
    const unsigned threads = std::max(1u, std::thread::hardware_concurrency());
    const auto t_all = Clock::now();

    // Criteria 1, 3, 4 (Example 1).
    const ExampleRun e1 = run_example(ex1(), 201, threads);
    {
        const double g = 100 * e1.stats(Strategy::GammaOracle).reuse_pct;
        const double j = 100 * e1.stats(Strategy::SinglePolytope).reuse_pct;
        const double c = 100 * e1.stats(Strategy::CandidateFamily).reuse_pct;
        const bool ok = within(g, 39.0, 5.0) && within(j, 7.2, 5.0) && within(c, 34.0, 5.0) &&
                        e1.batch_s <= 120.0 && e1.atlas_s <= 600.0;
        report(1, ok,
               fmt("Example 1 reuse gamma %.1f%% (39+-5), single polytope %.1f%% (7.2+-5), candidate family %.1f%% "
                   "(34+-5); %ld counted steps; atlas %zu sets in %.2fs, batch %.2fs",
                   g, j, c, e1.stats(Strategy::EveryStepQp).total_steps, e1.atlas_sets, e1.atlas_s, e1.batch_s));
    }

    // Criterion 2 (pendulum).
    const ExampleRun pd = run_example(pendulum(), 15, threads);
    {
        const double g = 100 * pd.stats(Strategy::GammaOracle).reuse_pct;
        const double j = 100 * pd.stats(Strategy::SinglePolytope).reuse_pct;
        const double c = 100 * pd.stats(Strategy::CandidateFamily).reuse_pct;
        const bool ok = j < 2.0 && within(c, 41.0, 5.0) && g >= c && pd.atlas_s + pd.batch_s <= 900.0;
        report(2, ok,
               fmt("pendulum reuse single polytope %.1f%% (<2), candidate family %.1f%% (41+-5), gamma %.1f%% (>= "
                   "candidate family); %ld counted steps; atlas %zu sets (15^4 grid) in %.2fs, batch %.2fs",
                   j, c, g, pd.stats(Strategy::EveryStepQp).total_steps, pd.atlas_sets, pd.atlas_s, pd.batch_s));
    }

    {
        const long jq = e1.stats(Strategy::SinglePolytope).total_qps;
        const long cq = e1.stats(Strategy::CandidateFamily).total_qps;
        const double rel = jq ? static_cast<double>(jq - cq) / static_cast<double>(jq) : 0.0;
        report(3, within(rel, 0.29, 0.029),
               fmt("Example 1 QP savings %ld (%ld -> %ld), %.1f%% (29%% +-10%% relative; reference 1536 QPs)", jq - cq,
                   jq, cq, 100 * rel));
    }

    {
        const double d1 = pairwise_deviation(e1.cmp);
        const double d2 = pairwise_deviation(pd.cmp);
        report(4, std::max(d1, d2) <= 1e-6,
               fmt("max pairwise trajectory deviation Example 1 %.2e, pendulum %.2e (<= 1e-6)", d1, d2));
    }

    // Criterion 5.
    {
        const Problem& p = ex1();
        const ActiveSet A{1, 7, 13};
        const auto fam = candidate_family(A, p.qp.q_stage);
        const std::vector<ActiveSet> expect{{1, 7, 13}, {1, 13}, {1, 7}, {1}};
        std::vector<ActiveSet> sorted_fam = fam, sorted_expect = expect;
        std::sort(sorted_fam.begin(), sorted_fam.end());
        std::sort(sorted_expect.begin(), sorted_expect.end());
        const ReuseRegion rr = build_reuse_region(p.qp, A);
        const QpResult at = solve_qp(p.qp, simulate(p, Strategy::EveryStepQp, Eigen::Vector2d(-0.8, 0.95)).states[5]);
        std::string listed;
        for (const auto& s : fam)
            listed += s.to_string();
        const bool ok = sorted_fam == sorted_expect && rr.candidates.size() == 3 && at.working_set == A &&
                        std::abs(rr.law.b(0) - 2.0) < 1e-12 && rr.law.K.cwiseAbs().maxCoeff() == 0.0;
        report(5, ok,
               fmt("family %s, %zu non-empty polytopes after pruning, QP at the saturated state returns %s, law u=%.3g",
                   listed.c_str(), rr.candidates.size(), at.working_set.to_string().c_str(), rr.law.b(0)));
    }

    // Criterion 6.
    {
        using namespace regmpc::netsim;
        const Problem& p = pendulum();
        auto t0 = Clock::now();
        const auto x0s = sample_initial_states(p, kTrajectories, kNetSeed);
        const NetsimResult base = run_session(p, x0s, CentralConfig{1, false}, Transport::Pipe);
        bool ok = true;
        std::string detail = fmt("baseline %ld requests;", base.stats.requests);
        const std::vector<std::pair<std::size_t, double>> targets{{50, 37.6}, {10, 33.1}, {5, 27.5}};
        for (const auto& [l, target] : targets) {
            const NetsimResult tcp = run_session(p, x0s, CentralConfig{l, true}, Transport::Tcp);
            const NetsimResult pipe = run_session(p, x0s, CentralConfig{l, true}, Transport::Pipe);
            const double red = 100 * request_reduction(base.stats, tcp.stats);
            const bool same = tcp.transcript_digest == pipe.transcript_digest && tcp.bytes == pipe.bytes;
            ok = ok && within(red, target, 8.0) && same;
            detail += fmt(" l=%zu %ld requests, -%.1f%% (%.1f+-8), digest %016llx %s;", l, tcp.stats.requests, red,
                          target, static_cast<unsigned long long>(tcp.transcript_digest),
                          same ? "tcp==pipe" : "tcp!=pipe");
        }
        const NetsimResult again = run_session(p, x0s, CentralConfig{50, true}, Transport::Tcp);
        const NetsimResult first = run_session(p, x0s, CentralConfig{50, true}, Transport::Pipe);
        const bool repro = again.transcript_digest == first.transcript_digest;
        ok = ok && repro;
        detail += fmt(" rerun %s; %.2fs", repro ? "bit-identical" : "differs", seconds_since(t0));
        report(6, ok, detail);
    }

    // Criterion 7.
    {
        auto t0 = Clock::now();
        std::string detail;
        const bool ok = property_suites(detail);
        report(7, ok, detail + fmt("; %.2fs", seconds_since(t0)));
    }

    std::printf("acceptance: %d of 7 criteria failed, %.1fs total\n", failures, seconds_since(t_all));
    return failures == 0 ? 0 : 1;
}
