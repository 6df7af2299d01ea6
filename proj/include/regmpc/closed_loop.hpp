#pragma once

#include "regmpc/gamma_oracle.hpp"

#include <atomic>
#include <random>
#include <string_view>

namespace regmpc {

enum class Strategy {
    EveryStepQp,      // solve a QP at every step
    SinglePolytope,   // reuse on the polytope of the last active set (Jost et al.)
    CandidateFamily,  // reuse on the candidate family of the last active set
    GammaOracle,      // reuse on the full stage-subset group from an offline atlas
};

inline std::string_view to_string(Strategy s) {
    switch (s) {
        case Strategy::EveryStepQp: return "qp";
        case Strategy::SinglePolytope: return "jost";
        case Strategy::CandidateFamily: return "proposed";
        case Strategy::GammaOracle: return "gamma";
    }
    return "?";
}

inline Strategy parse_strategy(std::string_view s) {
    if (s == "qp" || s == "every" || s == "every-step")
        return Strategy::EveryStepQp;
    if (s == "jost" || s == "single" || s == "single-polytope")
        return Strategy::SinglePolytope;
    if (s == "proposed" || s == "family" || s == "candidate-family")
        return Strategy::CandidateFamily;
    if (s == "gamma" || s == "oracle")
        return Strategy::GammaOracle;
    throw ParseError("unknown strategy '" + std::string(s) + "'");
}

// One reuse structure built after a QP solve.
struct BuiltRegion {
    int step = 0;
    ActiveSet active_set;  // set the polytope belongs to
    HalfspacePolytope polytope;
};

struct ClosedLoopTrace {
    std::vector<Vector> states;
    std::vector<Vector> inputs;
    std::vector<int> e;  // 1 = QP solved at step k
    std::optional<int> entered_terminal_at;
    int qp_count = 0;
    std::vector<ActiveSet> solved_active_sets;  // solver working set, one per QP
    std::vector<BuiltRegion> regions;           // only with SimOptions::record_regions

    [[nodiscard]] int steps() const noexcept { return static_cast<int>(inputs.size()); }
    [[nodiscard]] int reused() const noexcept { return steps() - qp_count; }
};

struct SimOptions {
    int max_steps = 1000;
    bool prune_empty = true;
    std::size_t max_candidates = 0;  // truncate each candidate family to its first l sets
    int family_cap = kDefaultFamilyCap;
    bool record_regions = false;
    // Process the first state inside T like any other step before stopping.
    // The reused law there is the QP's, so only e(k) is affected.
    bool count_terminal_entry = true;
    // After a solve, apply the rebuilt law instead of U*(0), as a node
    // without the QP solution would.
    bool input_from_law = false;
    const ActiveSetAtlas* atlas = nullptr;  // required by GammaOracle
};

namespace detail {

struct ReuseCache {
    FeedbackLaw law;
    std::vector<HalfspacePolytope> regions;

    [[nodiscard]] bool covers(const Vector& x) const {
        return std::any_of(regions.begin(), regions.end(),
                           [&](const HalfspacePolytope& p) { return polytope_contains(p, x); });
    }
};

inline std::optional<ReuseCache> single_polytope_cache(const CondensedQp& qp, const ActiveSet& A,
                                                       std::vector<BuiltRegion>* log, int step) {
    if (!has_full_row_rank(qp, A))
        return std::nullopt;
    RegionalLaw rl = regional_law(qp, A);
    if (log)
        log->push_back({step, A, rl.region});
    ReuseCache c{std::move(rl.head), {}};
    c.regions.push_back(std::move(rl.region));
    return c;
}

inline std::optional<ReuseCache> build_cache(const CondensedQp& qp, Strategy strategy, const ActiveSet& A,
                                             const SimOptions& opt, std::vector<BuiltRegion>* log, int step) {
    switch (strategy) {
        case Strategy::EveryStepQp: return std::nullopt;
        case Strategy::SinglePolytope: return single_polytope_cache(qp, A, log, step);
        case Strategy::CandidateFamily:
        case Strategy::GammaOracle: break;
    }
    if (!criterion_applies(qp, A))
        return single_polytope_cache(qp, A, log, step);
    ReuseOptions ropt;
    ropt.prune_empty = opt.prune_empty;
    ropt.max_candidates = opt.max_candidates;
    ropt.family_cap = opt.family_cap;
    ReuseCache cache;
    std::vector<ActiveSet> have;
    try {
        ReuseRegion rr = build_reuse_region(qp, A, ropt);
        cache.law = std::move(rr.law);
        for (auto& cand : rr.candidates) {
            if (log)
                log->push_back({step, cand.set, cand.region});
            have.push_back(std::move(cand.set));
            cache.regions.push_back(std::move(cand.region));
        }
    } catch (const FamilyTooLarge&) {
        // Fall back to the polytope of A itself with the stage-subset law.
        cache.law = simplified_feedback(qp, stage_subset(A, qp.q_stage));
        HalfspacePolytope region = polytope_from_active_set(qp, A);
        if (log)
            log->push_back({step, A, region});
        have.push_back(A);
        cache.regions.push_back(std::move(region));
    }
    if (strategy == Strategy::GammaOracle) {
        if (!opt.atlas)
            throw AssumptionError("GammaOracle strategy requires an atlas");
        std::sort(have.begin(), have.end());
        for (const auto& member : gamma_members(*opt.atlas, A)) {
            if (std::binary_search(have.begin(), have.end(), member))
                continue;
            cache.regions.push_back(opt.atlas->entries.at(member));
        }
    }
    return cache;
}

}  // namespace detail

// Drives x+ = Ax + Bu from x0 until T is reached. `control(x, k, trace)`
// returns the input and whether a QP (or a request) was needed for it.
template <typename Control>
ClosedLoopTrace run_closed_loop(const OcpSpec& spec, const HalfspacePolytope& tset, const Vector& x0, int max_steps,
                                bool count_terminal_entry, Control&& control) {
    ClosedLoopTrace tr;
    tr.states.push_back(x0);
    for (int k = 0; k < max_steps; ++k) {
        const Vector x = tr.states.back();
        const bool in_t = polytope_contains(tset, x);
        if (in_t && (k == 0 || !count_terminal_entry || tr.entered_terminal_at)) {
            if (!tr.entered_terminal_at)
                tr.entered_terminal_at = k;
            return tr;
        }
        if (in_t)
            tr.entered_terminal_at = k;
        auto [u, solved] = control(x, k, tr);
        tr.e.push_back(solved ? 1 : 0);
        tr.qp_count += solved ? 1 : 0;
        tr.states.push_back(spec.sys.A * x + spec.sys.B * u);
        tr.inputs.push_back(std::move(u));
    }
    if (tr.entered_terminal_at)
        return tr;
    if (polytope_contains(tset, tr.states.back())) {
        tr.entered_terminal_at = max_steps;
        return tr;
    }
    throw MaxIterations("simulate: terminal set not reached within " + std::to_string(max_steps) + " steps");
}

inline ClosedLoopTrace simulate(const CondensedQp& qp, const OcpSpec& spec, const HalfspacePolytope& tset,
                                Strategy strategy, const Vector& x0, const SimOptions& opt = {}) {
    if (x0.size() != qp.n)
        throw DimensionError("simulate: initial state has wrong dimension");
    if (strategy == Strategy::GammaOracle && !opt.atlas)
        throw AssumptionError("GammaOracle strategy requires an atlas");
    std::optional<detail::ReuseCache> cache;
    auto control = [&](const Vector& x, int k, ClosedLoopTrace& tr) -> std::pair<Vector, bool> {
        if (cache && cache->covers(x))
            return {cache->law(x), false};
        const QpResult r = solve_qp(qp, x);
        if (!r.optimal())
            throw InfeasibleError(k == 0 ? "infeasible initial state" : "QP infeasible at step " + std::to_string(k));
        tr.solved_active_sets.push_back(r.working_set);
        cache = detail::build_cache(qp, strategy, r.working_set, opt, opt.record_regions ? &tr.regions : nullptr, k);
        if (opt.input_from_law && cache)
            return {cache->law(x), true};
        return {r.first_input(qp.m), true};
    };
    return run_closed_loop(spec, tset, x0, opt.max_steps, opt.count_terminal_entry, control);
}

inline ClosedLoopTrace simulate(const Problem& prob, Strategy strategy, const Vector& x0, const SimOptions& opt = {}) {
    return simulate(prob.qp, prob.spec, prob.terminal.Tset, strategy, x0, opt);
}

// ============================================================================
// Batches
// ============================================================================

struct BatchStats {
    Strategy strategy = Strategy::EveryStepQp;
    int n_traj = 0;
    double reuse_pct = 0.0;  // fraction of counted steps without a QP
    long total_qps = 0;
    long total_steps = 0;
    double mean_steps = 0.0;
    std::uint64_t seed = 0;
};

inline nlohmann::json to_json(const BatchStats& s) {
    return {{"strategy", std::string(to_string(s.strategy))},
            {"n", s.n_traj},
            {"seed", s.seed},
            {"reuse_pct", s.reuse_pct},
            {"total_qps", s.total_qps},
            {"total_steps", s.total_steps},
            {"mean_steps", s.mean_steps}};
}

inline std::mt19937_64 trajectory_rng(std::uint64_t seed, std::size_t index) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
    return std::mt19937_64(seq);
}

// Uniform over the bounding box of X, rejecting states with an infeasible QP
// and states already inside T.
inline Vector sample_initial_state(const CondensedQp& qp, const OcpSpec& spec, const HalfspacePolytope& tset,
                                   std::mt19937_64& rng, int max_tries = 1000000) {
    const auto [lo, hi] = bounding_box(spec.Xset);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Vector x(qp.n);
    for (int t = 0; t < max_tries; ++t) {
        for (Eigen::Index i = 0; i < qp.n; ++i)
            x(i) = lo(i) + (hi(i) - lo(i)) * unit(rng);
        if (!polytope_contains(spec.Xset, x) || polytope_contains(tset, x))
            continue;
        if (solve_qp(qp, x).optimal())
            return x;
    }
    throw InfeasibleError("sample_initial_state: no feasible state found");
}

inline std::vector<Vector> sample_initial_states(const Problem& prob, int n, std::uint64_t seed) {
    std::vector<Vector> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        auto rng = trajectory_rng(seed, static_cast<std::size_t>(i));
        out.push_back(sample_initial_state(prob.qp, prob.spec, prob.terminal.Tset, rng));
    }
    return out;
}

// Runs fn(i) for i in [0, n) over `threads` workers; fn must write only to slot i.
template <typename Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
    if (threads == 1) {
        for (std::size_t i = 0; i < n; ++i)
            fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr err;
    std::mutex err_mu;
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(err_mu);
                    if (!err)
                        err = std::current_exception();
                }
            }
        });
    }
    for (auto& th : pool)
        th.join();
    if (err)
        std::rethrow_exception(err);
}

inline BatchStats summarize(Strategy strategy, const std::vector<ClosedLoopTrace>& traces, std::uint64_t seed) {
    BatchStats s;
    s.strategy = strategy;
    s.seed = seed;
    s.n_traj = static_cast<int>(traces.size());
    for (const auto& tr : traces) {
        s.total_qps += tr.qp_count;
        s.total_steps += tr.steps();
    }
    s.reuse_pct = s.total_steps ? static_cast<double>(s.total_steps - s.total_qps) / static_cast<double>(s.total_steps)
                                : 0.0;
    s.mean_steps = s.n_traj ? static_cast<double>(s.total_steps) / s.n_traj : 0.0;
    return s;
}

inline std::vector<ClosedLoopTrace> run_traces(const Problem& prob, Strategy strategy, const std::vector<Vector>& x0s,
                                               const SimOptions& opt, unsigned threads = 1) {
    std::vector<ClosedLoopTrace> traces(x0s.size());
    parallel_for(x0s.size(), threads, [&](std::size_t i) { traces[i] = simulate(prob, strategy, x0s[i], opt); });
    return traces;
}

inline BatchStats batch(const Problem& prob, Strategy strategy, int n, std::uint64_t seed, const SimOptions& opt = {},
                        unsigned threads = 1) {
    if (n < 1)
        throw DimensionError("batch: n must be positive");
    const auto x0s = sample_initial_states(prob, n, seed);
    return summarize(strategy, run_traces(prob, strategy, x0s, opt, threads), seed);
}

// Largest sup-norm gap between two traces' states and inputs.
inline double trace_deviation(const ClosedLoopTrace& a, const ClosedLoopTrace& b) {
    if (a.states.size() != b.states.size() || a.inputs.size() != b.inputs.size())
        return std::numeric_limits<double>::infinity();
    double dev = 0.0;
    for (std::size_t k = 0; k < a.states.size(); ++k)
        dev = std::max(dev, (a.states[k] - b.states[k]).cwiseAbs().maxCoeff());
    for (std::size_t k = 0; k < a.inputs.size(); ++k)
        dev = std::max(dev, (a.inputs[k] - b.inputs[k]).cwiseAbs().maxCoeff());
    return dev;
}

struct StrategyComparison {
    std::vector<BatchStats> stats;
    std::vector<std::vector<ClosedLoopTrace>> traces;  // per strategy
    double max_trajectory_deviation = 0.0;             // across all strategy pairs
    long qp_savings_vs_first = 0;                      // first strategy minus last, in QPs
};

inline StrategyComparison compare_strategies(const Problem& prob, const std::vector<Strategy>& strategies, int n,
                                             std::uint64_t seed, const SimOptions& opt = {}, unsigned threads = 1) {
    const auto x0s = sample_initial_states(prob, n, seed);
    StrategyComparison cmp;
    for (Strategy s : strategies) {
        cmp.traces.push_back(run_traces(prob, s, x0s, opt, threads));
        cmp.stats.push_back(summarize(s, cmp.traces.back(), seed));
    }
    for (std::size_t a = 1; a < cmp.traces.size(); ++a) {
        for (std::size_t i = 0; i < x0s.size(); ++i)
            cmp.max_trajectory_deviation =
                std::max(cmp.max_trajectory_deviation, trace_deviation(cmp.traces[0][i], cmp.traces[a][i]));
    }
    if (!cmp.stats.empty())
        cmp.qp_savings_vs_first = cmp.stats.front().total_qps - cmp.stats.back().total_qps;
    return cmp;
}

}  // namespace regmpc
