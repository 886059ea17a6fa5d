#include "callcenter/game.hpp"

#include <cstdint>

#include "gtest/gtest.h"

namespace callcenter {
namespace {

GameConfig make_config(MachineKind machine, std::uint32_t s, std::uint32_t k,
                       std::uint32_t universe, std::uint64_t trials = 100000,
                       std::uint64_t seed = 0xc0ffee) {
    GameConfig config;
    config.machine = machine;
    config.s = s;
    config.k = Capacity{k};
    config.universe_size = universe;
    config.trials = trials;
    config.master_seed = Seed{seed};
    return config;
}

TEST(GameConfig, Validation) {
    EXPECT_THROW(make_config(MachineKind::M1, 4, 1, 4).validate(),
                 std::invalid_argument);
    EXPECT_THROW(make_config(MachineKind::M1, 1, 1, 4, 0).validate(),
                 std::invalid_argument);
    EXPECT_NO_THROW(make_config(MachineKind::M1, 1, 1, 4).validate());
}

// ---------------------------------------------------------------- challenger

TEST(Challenger, B0ForcedM1AlwaysFillsCapacity) {
    const GameConfig config = make_config(MachineKind::M1, 3, 3, 8);
    for (std::uint64_t i = 0; i < 2000; ++i) {
        const auto view = challenger_trial_with_bit(
            config, derive_seed(config.master_seed, "trial", i), false);
        EXPECT_EQ(view.observed.size(), 3u);
        EXPECT_FALSE(view.hidden_e_used);
    }
}

TEST(Challenger, B1ForcedM1HidesTheExtraCallerHalfTheTime) {
    const GameConfig config = make_config(MachineKind::M1, 1, 1, 8);
    const std::uint64_t trials = 100000;
    std::uint64_t empty = 0;
    for (std::uint64_t i = 0; i < trials; ++i) {
        const auto view = challenger_trial_with_bit(
            config, derive_seed(config.master_seed, "trial", i), true);
        // k = 1, |C| = 2: either e took the slot (empty view) or caller 0 did.
        EXPECT_EQ(view.hidden_e_used, view.observed.empty());
        empty += view.observed.empty() ? 1 : 0;
    }
    EXPECT_NEAR(static_cast<double>(empty) / trials, 0.5, 0.01);
}

TEST(Challenger, MachineSeesExactlyTheChallengeSet) {
    for (MachineKind machine : {MachineKind::M0, MachineKind::M1,
                                MachineKind::M2, MachineKind::M3}) {
        const GameConfig config = make_config(machine, 3, 2, 9);
        for (std::uint64_t i = 0; i < 300; ++i) {
            const Seed ts = derive_seed(config.master_seed, "trial", i);
            const TrialPlan p0 = plan_trial(config, ts, false);
            EXPECT_EQ(p0.callers, CallerSet::range(3));
            EXPECT_FALSE(p0.hidden.has_value());

            const TrialPlan p1 = plan_trial(config, ts, true);
            ASSERT_TRUE(p1.hidden.has_value());
            EXPECT_GE(*p1.hidden, 3u);
            EXPECT_LT(*p1.hidden, 9u);
            EXPECT_EQ(p1.callers, CallerSet::range(3).with(*p1.hidden));
        }
    }
}

TEST(Challenger, ObservedNeverContainsHiddenCaller) {
    for (MachineKind machine : {MachineKind::M0, MachineKind::M1,
                                MachineKind::M2, MachineKind::M3}) {
        const GameConfig config = make_config(machine, 4, 3, 12);
        for (std::uint64_t i = 0; i < 500; ++i) {
            const Seed ts = derive_seed(config.master_seed, "trial", i);
            const TrialPlan plan = plan_trial(config, ts, true);
            const TrialView view = challenger_trial_with_bit(config, ts, true);
            EXPECT_FALSE(view.observed.contains(*plan.hidden));
            EXPECT_LE(view.observed.size(), 3u);
            for (CallerId c : view.observed) {
                EXPECT_TRUE(plan.callers.contains(c));
            }
        }
    }
}

TEST(Challenger, M3ViewIgnoresWhichCallerWasAdded) {
    // universe 4, k = 1, round 2, S = {0,1}: the window is {2}, outside S,
    // so the sanitized view is empty no matter which caller was hidden.
    for (CallerId e : {2u, 3u}) {
        EXPECT_TRUE(m3_sanitized_view(2, Capacity{1}, 4, 2, e).empty());
    }
    EXPECT_TRUE(m3_sanitized_view(2, Capacity{1}, 4, 2, std::nullopt).empty());
}

TEST(M3ExactPrivacy, SanitizedViewsIdenticalUnderBothBits) {
    // Exhaustive: every universe size up to 16, every S = {0..s-1}, every
    // capacity, every round, every possible hidden caller.
    for (std::uint32_t n = 2; n <= 16; ++n) {
        for (std::uint32_t s = 1; s < n; ++s) {
            for (std::uint32_t k = 1; k <= n; ++k) {
                for (std::uint32_t r = 0; r < n; ++r) {
                    const CallerSet base =
                        m3_sanitized_view(s, Capacity{k}, n, r, std::nullopt);
                    for (CallerId e = s; e < n; ++e) {
                        ASSERT_EQ(m3_sanitized_view(s, Capacity{k}, n, r, e),
                                  base)
                            << "n=" << n << " s=" << s << " k=" << k
                            << " r=" << r << " e=" << e;
                    }
                }
            }
        }
    }
}

// ---------------------------------------------------------------- adversaries

TEST(CardinalityAdversary, DecisionRule) {
    EXPECT_FALSE(adversary_cardinality(CallerSet{0, 1}, 7, Capacity{2}));
    EXPECT_TRUE(adversary_cardinality(CallerSet{0}, 7, Capacity{2}));
    EXPECT_FALSE(adversary_cardinality(CallerSet{0}, 1, Capacity{3}));
}

TEST(BayesAdversary, DecisionRule) {
    const Pmf pmf0 = m2_paper_pmf(Capacity{1}, false); // (1/2, 1/2)
    const Pmf pmf1 = m2_paper_pmf(Capacity{1}, true);  // (3/4, 1/4)
    EXPECT_TRUE(adversary_bayes(CallerSet{}, pmf0, pmf1));
    EXPECT_FALSE(adversary_bayes(CallerSet{5}, pmf0, pmf1));

    // Ties go to 0.
    const Pmf flat({0.5, 0.5});
    EXPECT_FALSE(adversary_bayes(CallerSet{}, flat, flat));

    // k = 2: mass at x = k is 1/6 under b=1 vs 1/3 under b=0.
    EXPECT_FALSE(adversary_bayes(CallerSet{1, 2}, m2_paper_pmf(Capacity{2}, false),
                                 m2_paper_pmf(Capacity{2}, true)));

    EXPECT_THROW(adversary_bayes(CallerSet{1, 2, 3}, pmf0, pmf1),
                 std::invalid_argument);
}

TEST(PaperBayesAdversary, OnlyForM2) {
    EXPECT_THROW(make_paper_bayes_adversary(make_config(MachineKind::M1, 1, 1, 4)),
                 std::invalid_argument);
    EXPECT_NO_THROW(make_paper_bayes_adversary(make_config(MachineKind::M2, 1, 1, 4)));
}

// ---------------------------------------------------------------- run_game

TEST(RunGame, M1CountingAdversaryMatchesTheory) {
    // Advantage = k / (2(s+1)) = 2/16 = 0.125.
    const GameConfig config = make_config(MachineKind::M1, 7, 2, 16);
    const auto est = run_game(config, make_cardinality_adversary(config));
    EXPECT_NEAR(est.advantage, 0.125, 0.01);
    EXPECT_LE(est.ci_low, est.advantage);
    EXPECT_GE(est.ci_high, est.advantage);
}

TEST(RunGame, M2BayesAdversaryMatchesTheory) {
    // Pr[correct] = 1/2*1/2 + 1/2*3/4 = 5/8.
    const GameConfig config = make_config(MachineKind::M2, 1, 1, 4);
    const auto est = run_game(config, make_bayes_adversary(config));
    EXPECT_NEAR(est.advantage, 0.125, 0.01);
}

TEST(RunGame, M3AdvantageIsSamplingNoiseOnly) {
    const GameConfig config = make_config(MachineKind::M3, 4, 2, 8);
    const auto counting = run_game(config, make_cardinality_adversary(config));
    EXPECT_LE(counting.advantage, 0.005);
    const auto bayes = run_game(config, make_bayes_adversary(config));
    EXPECT_LE(bayes.advantage, 0.005);
}

TEST(RunGame, ReproducibleFromMasterSeed) {
    const GameConfig config = make_config(MachineKind::M2, 2, 2, 8, 20000);
    const auto a = run_game(config, make_bayes_adversary(config));
    const auto b = run_game(config, make_bayes_adversary(config));
    EXPECT_EQ(a.correct_rate, b.correct_rate);
    EXPECT_EQ(a.advantage, b.advantage);
    EXPECT_EQ(a.ci_low, b.ci_low);
    EXPECT_EQ(a.ci_high, b.ci_high);
}

TEST(RunGame, M1AdvantageShrinksAsColluderSetGrows) {
    double previous = 1.0;
    for (std::uint32_t s : {3u, 7u, 15u}) {
        const GameConfig config = make_config(MachineKind::M1, s, 2, 32);
        const auto est = run_game(config, make_cardinality_adversary(config));
        EXPECT_LT(est.advantage, previous);
        previous = est.advantage;
    }
}

TEST(EmpiricalCounts, MatchExactOracleInTotalVariation) {
    // Spot check here (the acceptance suite sweeps the full grid).
    const GameConfig config = make_config(MachineKind::M2, 3, 2, 8);
    for (bool b : {false, true}) {
        const auto counts = empirical_cardinality_counts(config, b, 100000);
        const Pmf expected =
            exact_pmf(config.machine, config.s, config.k, b, config.universe_size);
        EXPECT_LT(total_variation(Pmf::from_counts(counts), expected), 0.01);
    }
}

} // namespace
} // namespace callcenter
