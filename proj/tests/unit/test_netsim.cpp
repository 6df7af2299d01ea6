#include "support/oracles.hpp"

#include <gtest/gtest.h>

#include <thread>

using namespace regmpc;
using namespace regmpc::netsim;
using namespace regmpc::testing;

namespace {

// Sum of 2^(i-1), exact for q <= 64.
std::uint64_t value(const ActiveSet& A) {
    std::uint64_t v = 0;
    for (int i : A.indices())
        v |= std::uint64_t{1} << (i - 1);
    return v;
}

ActiveSet random_set(std::mt19937_64& rng, int q) {
    std::bernoulli_distribution pick(std::uniform_real_distribution<double>(0.0, 0.5)(rng));
    std::vector<int> idx;
    for (int i = 1; i <= q; ++i) {
        if (pick(rng))
            idx.push_back(i);
    }
    return ActiveSet(std::move(idx));
}

Frame roundtrip(const Frame& f) { return decode_frame(encode_frame(f)); }

ErrorCode error_code(const Frame& f) {
    const auto* e = std::get_if<ErrorFrame>(&f);
    if (!e)
        throw std::runtime_error("not an error frame");
    return e->code;
}

}  // namespace

TEST(Codec, ActiveSetExamples) {
    EXPECT_EQ(encode_active_set(ActiveSet({1, 3}), 8).bits, std::vector<std::uint8_t>{0x05});
    EXPECT_EQ(encode_active_set(ActiveSet{}, 8).bits, std::vector<std::uint8_t>{0x00});
    EXPECT_EQ(encode_active_set(ActiveSet{9}, 10).bits, (std::vector<std::uint8_t>{0x00, 0x01}));
    EXPECT_EQ(wire_bytes(138), 18u);
    EXPECT_THROW((void)encode_active_set(ActiveSet{9}, 8), IndexOutOfRange);
    EXPECT_THROW((void)decode_active_set(ActiveSetWire{{0x00, 0x04}, 10}), ProtocolError);
    EXPECT_THROW((void)decode_active_set(ActiveSetWire{{0x00}, 10}), ProtocolError);
}

TEST(Codec, ActiveSetRoundTrip) {
    std::mt19937_64 rng(81);
    for (int q : {8, 32, 138}) {
        for (int t = 0; t < 1000; ++t) {
            const ActiveSet A = random_set(rng, q);
            const ActiveSetWire w = encode_active_set(A, q);
            ASSERT_EQ(w.bits.size(), wire_bytes(q));
            EXPECT_EQ(decode_active_set(w), A);
        }
    }
}

TEST(Codec, SortAndTruncateExamples) {
    const std::vector<ActiveSet> fam{{1, 7}, {1}, {1, 7, 13}, {1, 13}};
    EXPECT_EQ(value(ActiveSet{1, 7, 13}), 4161u);
    EXPECT_EQ(value(ActiveSet{1, 13}), 4097u);
    EXPECT_EQ(sort_and_truncate(fam, 2), (std::vector<ActiveSet>{{1, 7, 13}, {1, 13}}));
    EXPECT_EQ(sort_and_truncate(fam, 10), (std::vector<ActiveSet>{{1, 7, 13}, {1, 13}, {1, 7}, {1}}));
    EXPECT_EQ(sort_and_truncate({{2}, {1, 3}}, 2), (std::vector<ActiveSet>{{1, 3}, {2}}));
    EXPECT_THROW((void)sort_and_truncate(fam, 0), DimensionError);
}

TEST(Codec, OrderMatchesIntegerValue) {
    std::mt19937_64 rng(82);
    for (int t = 0; t < 2000; ++t) {
        const ActiveSet a = random_set(rng, 60);
        const ActiveSet b = random_set(rng, 60);
        EXPECT_EQ(value_greater(a, b), value(a) > value(b));
        // Supersets never rank below their subsets.
        std::vector<int> u = a.indices();
        u.insert(u.end(), b.indices().begin(), b.indices().end());
        const ActiveSet sup(u);
        EXPECT_FALSE(value_greater(a, sup));
        EXPECT_GE(value(sup), value(a));
    }
}

TEST(Codec, FrameRoundTrips) {
    const Frame req = roundtrip(RequestFrame{Eigen::Vector4d(0.1, -2.5, 1e-300, -0.0)});
    const auto& r = std::get<RequestFrame>(req);
    EXPECT_EQ(r.state, Eigen::Vector4d(0.1, -2.5, 1e-300, -0.0));
    EXPECT_TRUE(std::signbit(r.state(3)));

    ResponseFrame resp{kFlagCriterion, 138, {{1, 7, 13}, {1, 138}, {}}};
    const auto back = std::get<ResponseFrame>(roundtrip(resp));
    EXPECT_TRUE(back.criterion_applied());
    EXPECT_EQ(back.q, 138);
    EXPECT_EQ(back.sets, resp.sets);
    EXPECT_EQ(encode_frame(resp).size(), 2u + 5u + 3u * 18u);

    EXPECT_EQ(error_code(roundtrip(ErrorFrame{ErrorCode::Infeasible})), ErrorCode::Infeasible);
    EXPECT_EQ(encode_frame(ErrorFrame{ErrorCode::Malformed}), (Bytes{0xA5, 0x03, 0x02}));
    EXPECT_EQ(encode_frame(RequestFrame{Eigen::Vector2d(1.0, 0.0)}),
              (Bytes{0xA5, 0x01, 0x02, 0x00, 0, 0, 0, 0, 0, 0, 0xF0, 0x3F, 0, 0, 0, 0, 0, 0, 0, 0}));
}

TEST(Codec, MalformedInput) {
    EXPECT_THROW((void)decode_frame(Bytes{}), ProtocolError);
    EXPECT_THROW((void)decode_frame(Bytes{0x5A, 0x03, 0x01}), ProtocolError);
    EXPECT_THROW((void)decode_frame(Bytes{0xA5, 0x07}), ProtocolError);
    EXPECT_THROW((void)decode_frame(Bytes{0xA5, 0x03, 0x09}), ProtocolError);
    EXPECT_THROW((void)decode_frame(Bytes{0xA5, 0x01, 0x02, 0x00, 0x00}), ProtocolError);
    EXPECT_THROW((void)decode_frame(Bytes{0xA5, 0x03, 0x01, 0x00}), ProtocolError);
}

TEST(Central, ResponsesFollowTheCriterion) {
    const Problem& p = ex1();
    const CentralNode node(p.qp, CentralConfig{});
    // A state whose QP returns {1,7,13}.
    const Vector x = simulate(p, Strategy::EveryStepQp, Eigen::Vector2d(-0.8, 0.95)).states[5];
    ASSERT_EQ(solve_qp(p.qp, x).working_set, ActiveSet({1, 7, 13}));
    const auto resp = std::get<ResponseFrame>(node.handle(RequestFrame{x}));
    EXPECT_EQ(resp.flags, kFlagCriterion);
    EXPECT_EQ(resp.q, 32);
    EXPECT_EQ(resp.sets, (std::vector<ActiveSet>{{1, 7, 13}, {1, 13}, {1, 7}, {1}}));

    const auto one = std::get<ResponseFrame>(CentralNode(p.qp, CentralConfig{1, true}).handle(RequestFrame{x}));
    EXPECT_EQ(one.sets, std::vector<ActiveSet>{ActiveSet({1, 7, 13})});
    const auto off = std::get<ResponseFrame>(CentralNode(p.qp, CentralConfig{50, false}).handle(RequestFrame{x}));
    EXPECT_EQ(off.flags, 0);
    EXPECT_EQ(off.sets.size(), 1u);

    EXPECT_EQ(error_code(node.handle(RequestFrame{Eigen::Vector2d(2.9, 2.9)})), ErrorCode::Infeasible);
    EXPECT_EQ(error_code(node.handle(RequestFrame{Vector::Zero(3)})), ErrorCode::Malformed);
    EXPECT_EQ(error_code(node.handle(RequestFrame{Eigen::Vector2d(std::nan(""), 0.0)})), ErrorCode::Malformed);
    EXPECT_THROW(CentralNode(p.qp, CentralConfig{0, true}), DimensionError);
}

TEST(Central, MalformedFrameEndsSession) {
    const Problem& p = ex1();
    const CentralNode node(p.qp, CentralConfig{});
    auto [local, remote] = make_pipe();
    std::size_t served = 99;
    std::thread server([&] { served = node.serve_session(*remote); });
    write_frame(*local, RequestFrame{Eigen::Vector2d(1.0, -1.0)});
    ASSERT_TRUE(std::holds_alternative<ResponseFrame>(*read_frame(*local)));
    const Bytes junk{0x11, 0x22};
    local->write_all(junk);
    const auto reply = read_frame(*local);
    ASSERT_TRUE(reply);
    EXPECT_EQ(error_code(*reply), ErrorCode::Malformed);
    server.join();
    EXPECT_EQ(served, 1u);
    local->close();
}

TEST(Local, InfeasibleAndProtocolErrors) {
    const Problem& p = ex1();
    const CentralNode node(p.qp, CentralConfig{});
    {
        auto [local, remote] = make_pipe();
        std::thread server([&, r = remote.get()] { node.serve_session(*r); });
        EXPECT_THROW((void)local_run(*local, p.qp, p.spec, p.terminal.Tset, Eigen::Vector2d(2.9, 2.9)),
                     InfeasibleError);
        local->close();
        server.join();
    }
    {
        // A peer answering with the wrong constraint count.
        auto [local, remote] = make_pipe();
        std::thread liar([r = remote.get()] {
            if (read_frame(*r))
                write_frame(*r, ResponseFrame{0, 8, {ActiveSet{}}});
        });
        EXPECT_THROW((void)local_run(*local, p.qp, p.spec, p.terminal.Tset, Eigen::Vector2d(1.0, -1.0)),
                     ProtocolError);
        local->close();
        liar.join();
    }
    {
        // A single-set response whose set has no full row rank.
        auto [local, remote] = make_pipe();
        std::thread liar([r = remote.get()] {
            if (read_frame(*r))
                write_frame(*r, ResponseFrame{0, 32, {ActiveSet({1, 2})}});
        });
        EXPECT_THROW((void)local_run(*local, p.qp, p.spec, p.terminal.Tset, Eigen::Vector2d(1.0, -1.0)),
                     ProtocolError);
        local->close();
        liar.join();
    }
}

TEST(Session, SingleSetBaselineMatchesSinglePolytope) {
    const Problem& p = ex1();
    const auto x0s = sample_initial_states(p, 100, 83);
    const NetsimResult base = run_session(p, x0s, CentralConfig{1, false}, Transport::Pipe);
    SimOptions so;
    so.input_from_law = true;
    const auto ref = run_traces(p, Strategy::SinglePolytope, x0s, so);
    long qps = 0;
    for (std::size_t i = 0; i < x0s.size(); ++i) {
        EXPECT_EQ(base.traces[i].e, ref[i].e);
        EXPECT_LE(trace_deviation(base.traces[i], ref[i]), 1e-9);
        qps += ref[i].qp_count;
    }
    EXPECT_EQ(base.stats.requests, qps);
}

TEST(Session, MatchesInProcessCandidateFamily) {
    const Problem& p = pendulum();
    const auto x0s = sample_initial_states(p, 60, 84);
    for (std::size_t l : {std::size_t{50}, std::size_t{5}, std::size_t{1}}) {
        const NetsimResult net = run_session(p, x0s, CentralConfig{l, true}, Transport::Pipe);
        SimOptions so;
        so.prune_empty = false;
        so.max_candidates = l;
        so.input_from_law = true;
        const auto ref = run_traces(p, Strategy::CandidateFamily, x0s, so);
        for (std::size_t i = 0; i < x0s.size(); ++i) {
            EXPECT_EQ(net.traces[i].e, ref[i].e) << "l=" << l << " i=" << i;
            EXPECT_LE(trace_deviation(net.traces[i], ref[i]), 1e-9);
        }
    }
}

TEST(Session, PipeAndTcpAgreeAndReproduce) {
    const Problem& p = pendulum();
    const auto x0s = sample_initial_states(p, 40, 85);
    const NetsimResult a = run_session(p, x0s, CentralConfig{10, true}, Transport::Pipe);
    const NetsimResult b = run_session(p, x0s, CentralConfig{10, true}, Transport::Tcp);
    const NetsimResult c = run_session(p, x0s, CentralConfig{10, true}, Transport::Pipe);
    EXPECT_EQ(a.transcript_digest, b.transcript_digest);
    EXPECT_EQ(a.transcript_digest, c.transcript_digest);
    EXPECT_EQ(a.bytes, b.bytes);
    EXPECT_EQ(a.stats.requests, b.stats.requests);
    for (std::size_t i = 0; i < x0s.size(); ++i)
        EXPECT_EQ(trace_deviation(a.traces[i], b.traces[i]), 0.0);
}

TEST(Session, FamiliesReduceRequests) {
    const Problem& p = pendulum();
    const auto x0s = sample_initial_states(p, 100, 86);
    const NetsimResult base = run_session(p, x0s, CentralConfig{1, false}, Transport::Pipe);
    for (std::size_t l : {std::size_t{5}, std::size_t{50}}) {
        const NetsimResult r = run_session(p, x0s, CentralConfig{l, true}, Transport::Pipe);
        EXPECT_EQ(r.stats.steps, base.stats.steps);
        EXPECT_GT(request_reduction(base.stats, r.stats), 0.0) << "l=" << l;
        EXPECT_EQ(r.stats.l_limit, l);
    }
}
