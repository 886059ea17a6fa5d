#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <variant>
#include <vector>

#include "callcenter/core.hpp"
#include "callcenter/machines.hpp"
#include "callcenter/oracle.hpp"

namespace callcenter {

// ============================================================================
// Game configuration
// ============================================================================

/// One distinguishing-game setup: which machine the challenger runs, how
/// many callers the adversary controls (S is the canonical set {0..s-1};
/// every implemented machine except M3 is symmetric under relabeling, and
/// M3's schedule is the identity map, so this loses no generality), the
/// capacity, the caller universe, and the Monte Carlo budget.
struct GameConfig {
    MachineKind machine = MachineKind::M1;
    std::uint32_t s = 1;
    Capacity k{1};
    std::uint32_t universe_size = 2;
    std::uint64_t trials = 100000;
    Seed master_seed{0};

    void validate() const {
        if (s >= universe_size) {
            throw std::invalid_argument(
                "GameConfig: s must be < universe_size (the challenger draws "
                "the hidden caller from outside S)");
        }
        if (trials == 0) {
            throw std::invalid_argument("GameConfig: trials must be >= 1");
        }
    }
};

// ============================================================================
// Challenger
// ============================================================================

/// Everything the challenger decides before invoking the machine. Exposed
/// separately so tests can assert on the exact machine input.
struct TrialPlan {
    bool b;
    CallerSet callers;                        // C = S, plus e when b = 1
    std::optional<CallerId> hidden;           // e, present iff b = 1
    std::variant<Seed, RoundIndex> randomness;
};

/// What the adversary receives from one trial, plus diagnostics.
struct TrialView {
    bool b;
    CallerSet observed;   // U with the hidden caller removed
    bool hidden_e_used;   // whether e was in U; never shown to adversaries
};

inline TrialPlan plan_trial(const GameConfig& config, Seed trial_seed, bool b) {
    config.validate();
    TrialPlan plan;
    plan.b = b;
    plan.callers = CallerSet::range(config.s);
    if (b) {
        // e uniform over the universe minus S = {s, ..., universe_size-1}.
        const auto e = static_cast<CallerId>(sample_uniform_int(
            config.s, static_cast<std::int64_t>(config.universe_size) - 1,
            derive_seed(trial_seed, "hidden", 0)));
        plan.hidden = e;
        plan.callers.insert(e);
    }
    if (config.machine == MachineKind::M3) {
        // The round stands in for the random string; uniform per trial.
        plan.randomness = RoundIndex{static_cast<std::uint64_t>(
            sample_uniform_int(0, static_cast<std::int64_t>(config.universe_size) - 1,
                               derive_seed(trial_seed, "round", 0)))};
    } else {
        plan.randomness = derive_seed(trial_seed, "machine", 0);
    }
    return plan;
}

/// Dispatch to the configured machine. M3 runs against the identity id map
/// over the configured universe; M0 starts with no busy slots.
inline MachineOutput invoke_machine(const GameConfig& config,
                                    const MachineInput& input) {
    switch (config.machine) {
    case MachineKind::M0:
        return m0_answer(input, CallerSet{});
    case MachineKind::M1:
        return m1_answer(input);
    case MachineKind::M2:
        return m2_answer(input);
    case MachineKind::M3: {
        IdMap map = IdMap::identity(config.universe_size);
        return m3_answer(input, map);
    }
    }
    throw std::logic_error("invoke_machine: unknown machine kind");
}

inline TrialView challenger_trial_with_bit(const GameConfig& config,
                                           Seed trial_seed, bool b) {
    const TrialPlan plan = plan_trial(config, trial_seed, b);
    const MachineOutput out = invoke_machine(
        config, MachineInput{plan.callers, config.k, plan.randomness});
    TrialView view;
    view.b = b;
    view.hidden_e_used = plan.hidden && out.accepted.contains(*plan.hidden);
    view.observed =
        plan.hidden ? out.accepted.without(*plan.hidden) : out.accepted;
    return view;
}

inline TrialView challenger_trial(const GameConfig& config, Seed trial_seed) {
    const bool b = derive_seed(trial_seed, "bit", 0).value & 1;
    return challenger_trial_with_bit(config, trial_seed, b);
}

/// Sanitized view an M3 challenger hands the adversary at round r with
/// S = {0..s-1} and identity id map: the hidden caller (if any) is removed.
/// This is the object the exact privacy check compares across b = 0/1.
inline CallerSet m3_sanitized_view(std::uint32_t s, Capacity k,
                                   std::uint32_t universe_size, std::uint64_t r,
                                   std::optional<CallerId> hidden) {
    CallerSet callers = CallerSet::range(s);
    if (hidden) {
        callers.insert(*hidden);
    }
    IdMap map = IdMap::identity(universe_size);
    MachineOutput out =
        m3_answer(MachineInput{callers, k, RoundIndex{r}}, map);
    return hidden ? out.accepted.without(*hidden) : out.accepted;
}

// ============================================================================
// Adversaries
// ============================================================================

/// Counting adversary: guesses "one more caller exists" exactly when the
/// sanitized output is shorter than min(k, s), which can never happen when
/// the machine under attack fills capacity deterministically and b = 0.
inline bool adversary_cardinality(const CallerSet& observed, std::uint32_t s,
                                  Capacity k) {
    return observed.size() < std::min(k.value(), s);
}

/// Maximum-likelihood adversary on the observed cardinality: guesses b = 1
/// exactly when pmf1 assigns the observation strictly more mass than pmf0.
/// Ties go to 0.
inline bool adversary_bayes(const CallerSet& observed, const Pmf& pmf0,
                            const Pmf& pmf1) {
    const std::size_t x = observed.size();
    if (!pmf0.in_support(x) && !pmf1.in_support(x)) {
        throw std::invalid_argument(
            "adversary_bayes: cardinality outside both supports");
    }
    return pmf1(x) > pmf0(x);
}

using Adversary = std::function<bool(const CallerSet& observed)>;

inline Adversary make_cardinality_adversary(const GameConfig& config) {
    const std::uint32_t s = config.s;
    const Capacity k = config.k;
    return [s, k](const CallerSet& observed) {
        return adversary_cardinality(observed, s, k);
    };
}

/// Bayes adversary calibrated with the exact enumeration oracle. This plays
/// the role of the preliminary oracle-access phase: instead of issuing live
/// queries it precomputes both conditional pmfs for the configured context.
inline Adversary make_bayes_adversary(const GameConfig& config) {
    const DistributionPair pair =
        exact_pair(config.machine, config.s, config.k, config.universe_size);
    return [pair](const CallerSet& observed) {
        return adversary_bayes(observed, pair.pmf_b0, pair.pmf_b1);
    };
}

/// Bayes adversary calibrated with the published M2 closed forms instead of
/// the enumeration oracle. Only meaningful against M2.
inline Adversary make_paper_bayes_adversary(const GameConfig& config) {
    if (config.machine != MachineKind::M2) {
        throw std::invalid_argument(
            "paper-pmf adversary is defined only for machine m2");
    }
    const Pmf pmf0 = m2_paper_pmf(config.k, false);
    const Pmf pmf1 = m2_paper_pmf(config.k, true);
    return [pmf0, pmf1](const CallerSet& observed) {
        return adversary_bayes(observed, pmf0, pmf1);
    };
}

// ============================================================================
// Monte Carlo advantage estimation
// ============================================================================

struct AdvantageEstimate {
    double advantage;     // |correct_rate - 1/2|
    double ci_low;        // 99% binomial CI on the correct rate, mapped
    double ci_high;       //   through the same |p - 1/2| transform
    std::uint64_t trials;
    double correct_rate;
};

namespace detail {

// Wilson score interval at two-sided 99% (z = Phi^-1(0.995)).
inline std::pair<double, double> wilson_99(std::uint64_t successes,
                                           std::uint64_t n) {
    constexpr double z = 2.5758293035489004;
    const double nn = static_cast<double>(n);
    const double p_hat = static_cast<double>(successes) / nn;
    const double z2 = z * z;
    const double denom = 1.0 + z2 / nn;
    const double center = (p_hat + z2 / (2 * nn)) / denom;
    const double half =
        z * std::sqrt(p_hat * (1 - p_hat) / nn + z2 / (4 * nn * nn)) / denom;
    return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

} // namespace detail

/// Estimate the adversary's distinguishing advantage over config.trials
/// independent trials with per-trial derived seeds. Deterministic in the
/// master seed; trials are independent, so execution order cannot matter.
inline AdvantageEstimate run_game(const GameConfig& config,
                                  const Adversary& adversary) {
    config.validate();
    std::uint64_t correct = 0;
    for (std::uint64_t i = 0; i < config.trials; ++i) {
        const Seed trial_seed = derive_seed(config.master_seed, "trial", i);
        const TrialView view = challenger_trial(config, trial_seed);
        correct += adversary(view.observed) == view.b ? 1 : 0;
    }
    const auto [lo, hi] = detail::wilson_99(correct, config.trials);
    const double rate =
        static_cast<double>(correct) / static_cast<double>(config.trials);

    AdvantageEstimate est;
    est.trials = config.trials;
    est.correct_rate = rate;
    est.advantage = std::fabs(rate - 0.5);
    est.ci_high = std::max(std::fabs(lo - 0.5), std::fabs(hi - 0.5));
    est.ci_low = (lo <= 0.5 && 0.5 <= hi)
                     ? 0.0
                     : std::min(std::fabs(lo - 0.5), std::fabs(hi - 0.5));
    return est;
}

/// Histogram of observed cardinalities from forced-bit trials; the empirical
/// side of the oracle/Monte-Carlo coherence checks.
inline std::vector<std::uint64_t> empirical_cardinality_counts(
    const GameConfig& config, bool b, std::uint64_t trials) {
    config.validate();
    const std::size_t width =
        std::min<std::size_t>(config.k.value(), config.s + (b ? 1 : 0)) + 1;
    std::vector<std::uint64_t> counts(width, 0);
    for (std::uint64_t i = 0; i < trials; ++i) {
        const Seed trial_seed = derive_seed(config.master_seed, "trial", i);
        const TrialView view = challenger_trial_with_bit(config, trial_seed, b);
        ++counts[view.observed.size()];
    }
    return counts;
}

} // namespace callcenter
