#include "support/oracles.hpp"

#include <gtest/gtest.h>

using namespace regmpc;
using namespace regmpc::testing;

TEST(RegionalCore, EmptySetGivesUnconstrainedLaw) {
    const Problem& p = ex1();
    const ControlLaw law = control_law_from_active_set(p.qp, ActiveSet{});
    EXPECT_LE((law.Kbar + p.qp.HinvFt).cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_EQ(law.bbar.cwiseAbs().maxCoeff(), 0.0);
    std::mt19937_64 rng(41);
    const FeedbackLaw head = feedback_head(law, p.qp.m);
    for (const auto& x : interior_samples(p.terminal.Tset, 50, rng)) {
        EXPECT_LE((head(x) - p.terminal.lqr.K * x).cwiseAbs().maxCoeff(), 1e-8);
    }
    const HalfspacePolytope pi0 = polytope_from_active_set(p.qp, ActiveSet{});
    EXPECT_EQ(pi0.rows(), p.qp.q - p.qp.q_X + p.qp.q_X);
    EXPECT_TRUE(polytope_contains(pi0, Vector::Zero(2)));
}

TEST(RegionalCore, SaturatedLaw) {
    const Problem& p = ex1();
    const RegionalLaw rl = regional_law(p.qp, ActiveSet{1});
    EXPECT_LE(rl.head.K.cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_NEAR(rl.head.b(0), 2.0, 1e-12);
    std::mt19937_64 rng(42);
    const auto pts = interior_samples(rl.region, 30, rng);
    ASSERT_FALSE(pts.empty());
    for (const auto& x : pts)
        EXPECT_NEAR(rl.head(x)(0), 2.0, 1e-12);
}

TEST(RegionalCore, FeedbackHeadTakesFirstRows) {
    ControlLaw law{Matrix(4, 2), Vector(4)};
    law.Kbar << 1, 2, 3, 4, 5, 6, 7, 8;
    law.bbar << 9, 10, 11, 12;
    const FeedbackLaw one = feedback_head(law, 1);
    EXPECT_EQ(one.K, law.Kbar.topRows(1));
    EXPECT_EQ(one.b(0), 9.0);
    const FeedbackLaw two = feedback_head(law, 2);
    EXPECT_EQ(two.K, law.Kbar.topRows(2));
    EXPECT_EQ(two.b, law.bbar.head(2));
}

TEST(RegionalCore, LawMatchesQpAtSourceState) {
    for (const Problem* p : {&ex1(), &pendulum()}) {
        for (const auto& x : feasible_states(*p, 200, 43)) {
            const QpResult r = solve_qp(p->qp, x);
            const ControlLaw law = control_law_from_active_set(p->qp, r.working_set);
            EXPECT_LE((law(x) - r.U_star).cwiseAbs().maxCoeff(), 1e-7);
            EXPECT_TRUE(polytope_contains(polytope_from_active_set(p->qp, r.working_set), x, 1e-7));
            if (has_full_row_rank(p->qp, r.active)) {
                EXPECT_LE((control_law_from_active_set(p->qp, r.active)(x) - r.U_star).cwiseAbs().maxCoeff(), 1e-7);
                EXPECT_TRUE(polytope_contains(polytope_from_active_set(p->qp, r.active), x, 1e-7));
            }
        }
    }
}

TEST(RegionalCore, LawOptimalOnItsPolytope) {
    const Problem& p = ex1();
    const auto sets = harvest_active_sets(p, 3000, 44);
    ASSERT_GE(sets.size(), 20u);
    std::mt19937_64 rng(45);
    int checked_sets = 0;
    for (const auto& A : sets) {
        const RegionalLaw rl = regional_law(p.qp, A);
        const auto pts = interior_samples(rl.region, 20, rng);
        if (pts.empty())
            continue;  // lower-dimensional region
        ++checked_sets;
        for (const auto& x : pts) {
            const QpResult r = solve_qp(p.qp, x);
            ASSERT_TRUE(r.optimal());
            EXPECT_LE((rl.law(x) - r.U_star).cwiseAbs().maxCoeff(), 1e-6) << A.to_string();
        }
        if (checked_sets == 50)
            break;
    }
    EXPECT_GE(checked_sets, 20);
}

TEST(RegionalCore, UnseenCandidatesAreEmpty) {
    const Problem& p = ex1();
    const auto unseen = nonexistent_candidates(p, grid_active_sets(p, 201), 50);
    ASSERT_GE(unseen.size(), 30u);
    for (const auto& cand : unseen)
        EXPECT_TRUE(polytope_is_empty(polytope_from_active_set(p.qp, cand))) << cand.to_string();
}

TEST(RegionalCore, UnseenPendulumCandidatesAreEmpty) {
    const Problem& p = pendulum();
    const auto unseen = nonexistent_candidates(p, sampled_active_sets(p, 3000, 47), 30);
    ASSERT_GE(unseen.size(), 10u);
    for (const auto& cand : unseen)
        EXPECT_TRUE(polytope_is_empty(polytope_from_active_set(p.qp, cand))) << cand.to_string();
}

TEST(RegionalCore, CardinalityBound) {
    for (const Problem* p : {&ex1(), &pendulum()}) {
        for (const auto& x : feasible_states(*p, 300, 46)) {
            const QpResult r = solve_qp(p->qp, x);
            EXPECT_LE(r.working_set.size(), static_cast<std::size_t>(p->qp.num_vars()));
            if (has_full_row_rank(p->qp, r.active)) {
                EXPECT_LE(r.active.size(), static_cast<std::size_t>(p->qp.num_vars()));
            }
        }
    }
}

TEST(RegionalCore, Errors) {
    const Problem& p = ex1();
    EXPECT_THROW((void)control_law_from_active_set(p.qp, ActiveSet{1, 2}), RankDeficient);
    EXPECT_THROW((void)polytope_from_active_set(p.qp, ActiveSet{40}), IndexOutOfRange);
    // x(0) rows have no decision variables.
    EXPECT_THROW((void)regional_law(p.qp, ActiveSet{p.qp.q}), RankDeficient);
}
