#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "callcenter/core.hpp"
#include "callcenter/machines.hpp"

namespace callcenter {

using UserId = CallerId;

/// Answering policy the simulated target runs. M0 is the greedy auto-accept
/// behavior of deployed clients; M3 is the bounded-universe schedule used as
/// the mitigation, with unused window slots acting as cover traffic.
enum class Policy { M0, M3 };

/// Universe the target's M3 schedule ranges over: just its friends (leaks
/// the friend-count bound, short windows) or every user in the system
/// (leaks nothing, proportionally longer waits).
enum class IdMapScope { Friends, AllUsers };

// ============================================================================
// Configuration
// ============================================================================

struct SimConfig {
    std::uint32_t n_users = 2;
    std::vector<std::pair<UserId, UserId>> friendships;
    Capacity capacity{1};
    Policy policy = Policy::M0;
    IdMapScope id_scope = IdMapScope::Friends;
    UserId target = 0;
    CallerSet compromised;
    UserId honest_partner = 1;
    std::uint32_t rounds = 50;
    double online_p = 0.5;
    /// Overrides online_p for the honest partner, for "partner online every
    /// round / never / with probability q" scenarios.
    std::optional<double> partner_online_p;
    /// Compromised friends dial every probe_period-th round.
    std::uint32_t probe_period = 1;
    Seed master_seed{0};

    CallerSet friends_of(UserId user) const {
        CallerSet friends;
        for (const auto& [a, b] : friendships) {
            if (a == user) {
                friends.insert(b);
            } else if (b == user) {
                friends.insert(a);
            }
        }
        return friends;
    }

    void validate() const {
        if (n_users < 2) {
            throw std::invalid_argument("SimConfig: need at least two users");
        }
        for (const auto& [a, b] : friendships) {
            if (a >= n_users || b >= n_users || a == b) {
                throw std::invalid_argument("SimConfig: malformed friendship");
            }
        }
        const CallerSet friends = friends_of(target);
        if (target >= n_users || honest_partner >= n_users) {
            throw std::invalid_argument("SimConfig: user id out of range");
        }
        if (!friends.contains(honest_partner)) {
            throw std::invalid_argument(
                "SimConfig: honest_partner must be a friend of the target");
        }
        if (compromised.contains(honest_partner)) {
            throw std::invalid_argument(
                "SimConfig: honest_partner cannot be compromised");
        }
        for (UserId c : compromised) {
            if (!friends.contains(c)) {
                throw std::invalid_argument(
                    "SimConfig: compromised users must be friends of the target");
            }
        }
        if (!(online_p > 0.0 && online_p <= 1.0)) {
            throw std::invalid_argument("SimConfig: online_p must be in (0, 1]");
        }
        if (partner_online_p &&
            !(*partner_online_p >= 0.0 && *partner_online_p <= 1.0)) {
            throw std::invalid_argument(
                "SimConfig: partner_online_p must be in [0, 1]");
        }
        if (rounds == 0 || probe_period == 0) {
            throw std::invalid_argument(
                "SimConfig: rounds and probe_period must be >= 1");
        }
    }
};

// ============================================================================
// Trace
// ============================================================================

struct ProbeObservation {
    std::uint64_t round;
    UserId prober;
    bool accepted;

    friend bool operator==(const ProbeObservation&,
                           const ProbeObservation&) = default;
};

struct RoundRecord {
    std::uint64_t round = 0;
    CallerSet online;    // users online this round
    CallerSet dialers;   // who dialed the target
    CallerSet accepted;  // dialers the policy answered
    CallerSet active;    // conversation slots in use at the target
    std::vector<ProbeObservation> probes;

    friend bool operator==(const RoundRecord&, const RoundRecord&) = default;
};

struct SimTrace {
    Policy policy = Policy::M0;
    std::uint32_t n_users = 0;
    Capacity capacity{1};
    UserId target = 0;
    CallerSet compromised;
    std::optional<IdMap> schedule; // target's M3 id map, when policy is M3
    std::vector<RoundRecord> rounds;
};

namespace detail {

/// Per-(user, round) online draw, derived independently per user so that
/// changing one user's schedule never perturbs anyone else's.
inline bool user_online(const SimConfig& config, UserId user,
                        std::uint64_t round) {
    if (user == config.target || config.compromised.contains(user)) {
        return true; // the target serves every round; probers are active
    }
    double p = config.online_p;
    if (user == config.honest_partner && config.partner_online_p) {
        p = *config.partner_online_p;
    }
    const Seed draw = derive_seed(
        config.master_seed, "online",
        round * static_cast<std::uint64_t>(config.n_users) + user);
    return sample_unit(draw) < p;
}

inline IdMap build_schedule(const SimConfig& config) {
    if (config.id_scope == IdMapScope::AllUsers) {
        return IdMap::identity(config.n_users);
    }
    // Friends scope: slot = rank in canonical friend order.
    const CallerSet friends = config.friends_of(config.target);
    std::vector<std::pair<CallerId, std::uint32_t>> pairs;
    std::uint32_t rank = 0;
    for (UserId f : friends) {
        pairs.emplace_back(f, rank++);
    }
    return IdMap::from_assignments(static_cast<std::uint32_t>(friends.size()),
                                   pairs);
}

} // namespace detail

// ============================================================================
// Simulation
// ============================================================================

/// Round loop. Each round: draw the online set; the honest partner, when
/// online, holds a conversation with the target (it dialed once, before the
/// attack window, and keeps the slot while online); compromised friends
/// issue one-round probe dials; the policy decides which dials to answer;
/// everything is recorded. Deterministic in the master seed.
inline SimTrace run_simulation(const SimConfig& config) {
    config.validate();
    SimTrace trace;
    trace.policy = config.policy;
    trace.n_users = config.n_users;
    trace.capacity = config.capacity;
    trace.target = config.target;
    trace.compromised = config.compromised;
    if (config.policy == Policy::M3) {
        trace.schedule = detail::build_schedule(config);
    }
    trace.rounds.reserve(config.rounds);

    for (std::uint64_t r = 0; r < config.rounds; ++r) {
        RoundRecord rec;
        rec.round = r;
        for (UserId u = 0; u < config.n_users; ++u) {
            if (detail::user_online(config, u, r)) {
                rec.online.insert(u);
            }
        }
        const bool partner_online = rec.online.contains(config.honest_partner);
        const bool probe_round = r % config.probe_period == 0;
        const CallerSet probers = probe_round ? config.compromised : CallerSet{};

        if (config.policy == Policy::M0) {
            const CallerSet busy = partner_online
                                       ? CallerSet{config.honest_partner}
                                       : CallerSet{};
            rec.dialers = probers;
            const MachineOutput out = m0_answer(
                MachineInput{probers, config.capacity, Seed{0}}, busy);
            rec.accepted = out.accepted;
            rec.active = busy;
            for (UserId q : out.accepted) {
                rec.active.insert(q);
            }
        } else {
            // Under M3 every contact, the partner included, is answered only
            // inside its schedule window; the remaining k slots are cover
            // traffic, so slot pressure never exists.
            CallerSet dialers = probers;
            if (partner_online) {
                dialers.insert(config.honest_partner);
            }
            rec.dialers = dialers;
            const MachineOutput out = m3_answer(
                MachineInput{dialers, config.capacity, RoundIndex{r}},
                *trace.schedule);
            rec.accepted = out.accepted;
            rec.active = out.accepted;
        }
        for (UserId q : probers) {
            rec.probes.push_back(
                ProbeObservation{r, q, rec.accepted.contains(q)});
        }
        trace.rounds.push_back(std::move(rec));
    }
    return trace;
}

// ============================================================================
// Adversary inference
// ============================================================================

/// The one-bit inference a compromised-friend adversary draws from a round's
/// probes: 1 means "the target is busy with someone outside my set".
///
/// Under M0 a probe can only be turned away by an occupied slot, so fewer
/// accepts than free capacity could explain reveals an outside conversation.
/// Under M3 the adversary compares each observation with the schedule's
/// prediction; the machine never deviates from it, so the bit stays 0 and
/// carries no information about the partner.
///
/// Returns nullopt when no probe was recorded that round.
inline std::optional<bool> cf_probe_bit(const SimTrace& trace,
                                        std::uint64_t round) {
    const RoundRecord& rec = trace.rounds.at(round);
    if (rec.probes.empty()) {
        return std::nullopt;
    }
    if (trace.policy == Policy::M0) {
        std::size_t accepted = 0;
        for (const ProbeObservation& p : rec.probes) {
            accepted += p.accepted ? 1 : 0;
        }
        const std::size_t expected =
            std::min<std::size_t>(rec.probes.size(), trace.capacity.value());
        return accepted < expected;
    }
    const IdMap& map = *trace.schedule;
    const std::uint32_t n = map.universe_size();
    for (const ProbeObservation& p : rec.probes) {
        const auto slot = map.slot_of(p.prober);
        const bool predicted =
            slot && (static_cast<std::uint64_t>(*slot) + n - round % n) % n <
                        trace.capacity.value();
        if (p.accepted != predicted) {
            return true;
        }
    }
    return false;
}

struct CandidateSet {
    CallerSet remaining;
};

/// Everyone the adversary cannot already rule out: all users except the
/// target and its own compromised friends.
inline CandidateSet default_candidates(const SimConfig& config) {
    CandidateSet c;
    for (UserId u = 0; u < config.n_users; ++u) {
        if (u != config.target && !config.compromised.contains(u)) {
            c.remaining.insert(u);
        }
    }
    return c;
}

/// Classical intersection attack driven by the CF bit: on every round the
/// target was inferred busy with an outsider, the partner must have been
/// online, so the candidate set shrinks to its intersection with that
/// round's online set. Rounds without the busy signal carry no information.
inline CandidateSet intersection_attack(const SimTrace& trace,
                                        const CandidateSet& universe) {
    CallerSet remaining = universe.remaining;
    for (const RoundRecord& rec : trace.rounds) {
        if (cf_probe_bit(trace, rec.round).value_or(false)) {
            remaining = intersect(remaining, rec.online);
        }
    }
    return CandidateSet{std::move(remaining)};
}

struct AttackTrialRecord {
    std::uint64_t trial = 0;
    std::uint64_t busy_rounds = 0;  // rounds with the CF bit set
    std::size_t remaining = 0;      // candidate-set size after intersection
    bool success = false;           // remaining == {honest_partner}
};

struct AttackSummary {
    double success_rate = 0;
    std::vector<AttackTrialRecord> trials;
};

/// Independent end-to-end attack runs with per-trial derived seeds.
inline AttackSummary run_attack_trials(const SimConfig& config,
                                       std::uint64_t trials) {
    if (trials == 0) {
        throw std::invalid_argument("run_attack_trials: trials must be >= 1");
    }
    config.validate();
    AttackSummary summary;
    summary.trials.reserve(trials);
    std::uint64_t hits = 0;
    for (std::uint64_t t = 0; t < trials; ++t) {
        SimConfig trial = config;
        trial.master_seed = derive_seed(config.master_seed, "sim-trial", t);
        const SimTrace trace = run_simulation(trial);
        const CandidateSet out =
            intersection_attack(trace, default_candidates(trial));

        AttackTrialRecord record;
        record.trial = t;
        for (const RoundRecord& rec : trace.rounds) {
            record.busy_rounds +=
                cf_probe_bit(trace, rec.round).value_or(false) ? 1 : 0;
        }
        record.remaining = out.remaining.size();
        record.success = out.remaining == CallerSet{config.honest_partner};
        hits += record.success ? 1 : 0;
        summary.trials.push_back(record);
    }
    summary.success_rate =
        static_cast<double>(hits) / static_cast<double>(trials);
    return summary;
}

/// Fraction of independent simulations in which the intersection attack
/// pins the candidate set down to exactly the honest partner.
inline double attack_success_rate(const SimConfig& config,
                                  std::uint64_t trials) {
    return run_attack_trials(config, trials).success_rate;
}

// ============================================================================
// Latency cost of the mitigation
// ============================================================================

struct LatencyStats {
    double mean = 0;
    std::uint64_t max = 0;
    std::vector<std::uint64_t> histogram; // histogram[w] = samples that waited w
};

namespace detail {

/// Rounds a dialer waits from phase `phase` until its first accepted round.
/// Routed through the actual machines so the measurement covers the real
/// decision path.
inline std::uint64_t dial_wait(Policy policy, std::uint32_t universe_size,
                               Capacity k, IdMap& map, std::uint64_t phase) {
    const CallerSet dialer{0};
    if (policy == Policy::M0) {
        const MachineOutput out =
            m0_answer(MachineInput{dialer, k, Seed{0}}, CallerSet{});
        return out.accepted.empty() ? universe_size : 0;
    }
    for (std::uint64_t d = 0; d < universe_size; ++d) {
        const MachineOutput out =
            m3_answer(MachineInput{dialer, k, RoundIndex{phase + d}}, map);
        if (!out.accepted.empty()) {
            return d;
        }
    }
    return universe_size; // unreachable for k >= 1
}

} // namespace detail

/// Monte Carlo dial latency: rounds until first accept for a dialer whose
/// arrival phase is uniform over the schedule cycle. M0 with free capacity
/// answers immediately; M3 waits for the dialer's window.
inline LatencyStats measure_dial_latency(Policy policy,
                                         std::uint32_t universe_size,
                                         Capacity k, std::uint64_t trials,
                                         Seed seed) {
    if (universe_size == 0 || trials == 0) {
        throw std::invalid_argument(
            "measure_dial_latency: universe_size and trials must be >= 1");
    }
    IdMap map = IdMap::identity(universe_size);
    LatencyStats stats;
    stats.histogram.assign(universe_size, 0);
    std::uint64_t total = 0;
    for (std::uint64_t t = 0; t < trials; ++t) {
        const auto phase = static_cast<std::uint64_t>(sample_uniform_int(
            0, static_cast<std::int64_t>(universe_size) - 1,
            derive_seed(seed, "phase", t)));
        const std::uint64_t wait =
            detail::dial_wait(policy, universe_size, k, map, phase);
        ++stats.histogram[wait];
        stats.max = std::max(stats.max, wait);
        total += wait;
    }
    stats.mean = static_cast<double>(total) / static_cast<double>(trials);
    return stats;
}

/// Exact counterpart: the wait for every one of the universe_size phases.
inline LatencyStats dial_latency_exact(Policy policy,
                                       std::uint32_t universe_size,
                                       Capacity k) {
    if (universe_size == 0) {
        throw std::invalid_argument("dial_latency_exact: empty universe");
    }
    IdMap map = IdMap::identity(universe_size);
    LatencyStats stats;
    stats.histogram.assign(universe_size, 0);
    std::uint64_t total = 0;
    for (std::uint64_t phase = 0; phase < universe_size; ++phase) {
        const std::uint64_t wait =
            detail::dial_wait(policy, universe_size, k, map, phase);
        ++stats.histogram[wait];
        stats.max = std::max(stats.max, wait);
        total += wait;
    }
    stats.mean = static_cast<double>(total) / static_cast<double>(universe_size);
    return stats;
}

/// Fraction of random friend pairs whose mutual M3 windows share no round
/// within the horizon: each side assigns the other a uniform slot in its own
/// map (both sized universe_size), and communication needs a round accepted
/// by both schedules. The sliding windows of two users can fail to ever
/// intersect; this measures how often.
inline double never_aligned_fraction(std::uint32_t universe_size, Capacity k,
                                     std::uint64_t horizon,
                                     std::uint64_t trials, Seed seed) {
    if (universe_size == 0 || trials == 0) {
        throw std::invalid_argument(
            "never_aligned_fraction: universe_size and trials must be >= 1");
    }
    const std::uint32_t n = universe_size;
    const std::uint64_t scan = std::min<std::uint64_t>(horizon, n);
    std::uint64_t never = 0;
    for (std::uint64_t t = 0; t < trials; ++t) {
        const auto slot_a = static_cast<std::uint64_t>(sample_uniform_int(
            0, n - 1, derive_seed(seed, "slot-a", t)));
        const auto slot_b = static_cast<std::uint64_t>(sample_uniform_int(
            0, n - 1, derive_seed(seed, "slot-b", t)));
        bool aligned = false;
        for (std::uint64_t r = 0; r < scan && !aligned; ++r) {
            const bool a_accepts = (slot_a + n - r % n) % n < k.value();
            const bool b_accepts = (slot_b + n - r % n) % n < k.value();
            aligned = a_accepts && b_accepts;
        }
        never += aligned ? 0 : 1;
    }
    return static_cast<double>(never) / static_cast<double>(trials);
}

} // namespace callcenter
