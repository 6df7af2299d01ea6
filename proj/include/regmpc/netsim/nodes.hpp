#pragma once

// Central node: solves QPs on request and answers with the (sorted,
// truncated) candidate family. Local node: holds only the static condensed
// data, rebuilds laws and polytopes from the received sets, and asks again
// when the state leaves all of them.

#include "regmpc/closed_loop.hpp"
#include "regmpc/netsim/transport.hpp"

#include <iostream>

namespace regmpc::netsim {

struct CentralConfig {
    std::size_t l = 50;          // sets per response
    bool use_criterion = true;   // false: always a single set, flags=0
    int family_cap = kDefaultFamilyCap;
};

class CentralNode {
public:
    CentralNode(const CondensedQp& qp, CentralConfig cfg) : qp_(qp), cfg_(cfg) {
        if (cfg_.l < 1)
            throw DimensionError("CentralNode: l must be at least 1");
    }

    [[nodiscard]] const CentralConfig& config() const noexcept { return cfg_; }

    [[nodiscard]] Frame handle(const RequestFrame& req) const {
        if (req.state.size() != qp_.n)
            return ErrorFrame{ErrorCode::Malformed};
        if (!req.state.allFinite())
            return ErrorFrame{ErrorCode::Malformed};
        const QpResult r = solve_qp(qp_, req.state);
        if (!r.optimal())
            return ErrorFrame{ErrorCode::Infeasible};
        const ActiveSet& A = r.working_set;
        ResponseFrame resp;
        resp.q = qp_.q;
        if (cfg_.use_criterion && criterion_applies(qp_, A)) {
            resp.flags = kFlagCriterion;
            try {
                resp.sets = sort_and_truncate(candidate_family(A, qp_.q_stage, cfg_.family_cap), cfg_.l);
            } catch (const FamilyTooLarge&) {
                resp.sets = {A};
            }
        } else {
            resp.sets = {A};
        }
        return resp;
    }

    // Serves one session until the peer closes. Returns the number of
    // requests answered. A malformed frame is answered and ends the session.
    std::size_t serve_session(ByteStream& s) const {
        std::size_t served = 0;
        for (;;) {
            std::optional<Frame> in;
            try {
                in = read_frame(s);
            } catch (const ProtocolError&) {
                write_frame(s, ErrorFrame{ErrorCode::Malformed});
                return served;
            }
            if (!in)
                return served;
            const auto* req = std::get_if<RequestFrame>(&*in);
            if (!req) {
                write_frame(s, ErrorFrame{ErrorCode::Malformed});
                return served;
            }
            write_frame(s, handle(*req));
            ++served;
        }
    }

private:
    const CondensedQp& qp_;
    CentralConfig cfg_;
};

// Accepts sessions until the listener is closed or `max_sessions` (0: no
// limit) have been served. I/O failures drop the session only.
inline std::size_t central_serve(TcpListener& listener, const CentralNode& node, std::size_t max_sessions = 0,
                                 std::ostream* log = &std::cerr) {
    std::size_t sessions = 0;
    while (max_sessions == 0 || sessions < max_sessions) {
        auto conn = listener.accept();
        if (!conn)
            break;
        try {
            node.serve_session(*conn);
        } catch (const std::exception& ex) {
            if (log)
                *log << "central: session dropped: " << ex.what() << '\n';
        }
        ++sessions;
    }
    return sessions;
}

struct SessionStats {
    long requests = 0;
    long steps = 0;
    std::size_t l_limit = 0;

    SessionStats& operator+=(const SessionStats& o) {
        requests += o.requests;
        steps += o.steps;
        return *this;
    }
};

struct LocalRun {
    SessionStats stats;
    ClosedLoopTrace trace;
};

struct LocalOptions {
    int max_steps = 1000;
    bool count_terminal_entry = true;
    std::size_t l_limit = 0;  // reported in SessionStats only
};

namespace detail {

inline regmpc::detail::ReuseCache cache_from_response(const CondensedQp& qp, const ResponseFrame& resp) {
    if (resp.q != qp.q)
        throw ProtocolError("response q=" + std::to_string(resp.q) + " does not match local q=" +
                            std::to_string(qp.q));
    if (resp.sets.empty())
        throw ProtocolError("response carries no active set");
    regmpc::detail::ReuseCache cache;
    try {
        if (resp.criterion_applied()) {
            cache.law = simplified_feedback(qp, stage_subset(resp.sets.front(), qp.q_stage));
            for (const auto& A : resp.sets) {
                if (has_full_row_rank(qp, A))
                    cache.regions.push_back(polytope_from_active_set(qp, A));
            }
        } else {
            if (resp.sets.size() != 1)
                throw ProtocolError("single-set response carries " + std::to_string(resp.sets.size()) + " sets");
            RegionalLaw rl = regional_law(qp, resp.sets.front());
            cache.law = std::move(rl.head);
            cache.regions.push_back(std::move(rl.region));
        }
    } catch (const ProtocolError&) {
        throw;
    } catch (const Error& ex) {
        throw ProtocolError("cannot rebuild law from " + resp.sets.front().to_string() + ": " + ex.what());
    }
    return cache;
}

}  // namespace detail

// Runs one trajectory, asking the central node over `s` whenever no cached
// polytope contains the state.
inline LocalRun local_run(ByteStream& s, const CondensedQp& qp, const OcpSpec& spec, const HalfspacePolytope& tset,
                          const Vector& x0, const LocalOptions& opt = {}) {
    if (x0.size() != qp.n)
        throw DimensionError("local_run: initial state has wrong dimension");
    std::optional<regmpc::detail::ReuseCache> cache;
    auto control = [&](const Vector& x, int k, ClosedLoopTrace& tr) -> std::pair<Vector, bool> {
        if (cache && cache->covers(x))
            return {cache->law(x), false};
        write_frame(s, RequestFrame{x});
        auto in = read_frame(s);
        if (!in)
            throw ProtocolError("central node closed the session");
        if (const auto* err = std::get_if<ErrorFrame>(&*in)) {
            if (err->code == ErrorCode::Infeasible)
                throw InfeasibleError(k == 0 ? "infeasible initial state"
                                             : "central node reports infeasible state at step " + std::to_string(k));
            throw ProtocolError("central node rejected request as malformed");
        }
        const auto* resp = std::get_if<ResponseFrame>(&*in);
        if (!resp)
            throw ProtocolError("expected a response frame");
        cache = detail::cache_from_response(qp, *resp);
        tr.solved_active_sets.push_back(resp->sets.front());
        return {cache->law(x), true};
    };
    LocalRun out;
    out.trace = run_closed_loop(spec, tset, x0, opt.max_steps, opt.count_terminal_entry, control);
    out.stats.requests = out.trace.qp_count;
    out.stats.steps = out.trace.steps();
    out.stats.l_limit = opt.l_limit;
    return out;
}

// ---------------------------------------------------------------------------
// Experiment harness

enum class Transport { Pipe, Tcp };

struct NetsimResult {
    SessionStats stats;
    std::vector<ClosedLoopTrace> traces;
    std::uint64_t transcript_digest = 0;
    std::uint64_t bytes = 0;
};

// All trajectories over one session to a freshly started central node.
inline NetsimResult run_session(const Problem& prob, const std::vector<Vector>& x0s, const CentralConfig& cfg,
                                Transport transport, const LocalOptions& lopt = {}) {
    const CentralNode node(prob.qp, cfg);
    std::unique_ptr<ByteStream> local_end;
    std::unique_ptr<TcpListener> listener;
    std::thread server;
    std::exception_ptr server_err;
    if (transport == Transport::Pipe) {
        auto [a, b] = make_pipe();
        local_end = std::move(a);
        server = std::thread([&node, &server_err, remote = std::move(b)]() mutable {
            try {
                node.serve_session(*remote);
            } catch (...) {
                server_err = std::current_exception();
            }
        });
    } else {
        listener = std::make_unique<TcpListener>(0);
        server = std::thread([&] {
            try {
                central_serve(*listener, node, 1);
            } catch (...) {
                server_err = std::current_exception();
            }
        });
        local_end = tcp_connect("127.0.0.1", listener->port());
    }

    NetsimResult res;
    res.stats.l_limit = cfg.use_criterion ? cfg.l : 1;
    TranscriptStream rec(*local_end);
    std::exception_ptr local_err;
    try {
        for (const auto& x0 : x0s) {
            LocalRun run = local_run(rec, prob.qp, prob.spec, prob.terminal.Tset, x0, lopt);
            res.stats += run.stats;
            res.traces.push_back(std::move(run.trace));
        }
    } catch (...) {
        local_err = std::current_exception();
    }
    local_end->close();
    server.join();
    if (listener)
        listener->close();
    if (local_err)
        std::rethrow_exception(local_err);
    if (server_err)
        std::rethrow_exception(server_err);
    res.transcript_digest = rec.digest();
    res.bytes = rec.bytes();
    return res;
}

// Request reduction of `run` relative to `baseline`, in [0, 1].
[[nodiscard]] inline double request_reduction(const SessionStats& baseline, const SessionStats& run) {
    return baseline.requests ? 1.0 - static_cast<double>(run.requests) / static_cast<double>(baseline.requests) : 0.0;
}

}  // namespace regmpc::netsim
