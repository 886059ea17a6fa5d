// Acceptance suite: end-to-end checks of the toolkit's headline claims, one
// line per criterion. Exits nonzero if any criterion fails.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "callcenter/experiment.hpp"
#include "callcenter/game.hpp"
#include "callcenter/machines.hpp"
#include "callcenter/mpm_sim.hpp"
#include "callcenter/oracle.hpp"

namespace cc = callcenter;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;

    void require(bool condition, const std::string& message) {
        if (!condition) {
            pass = false;
            detail += detail.empty() ? "" : "; ";
            detail += message;
        }
    }

    void note(const std::string& message) {
        if (pass && detail.empty()) {
            detail = message;
        }
    }
};

std::string fmt(double value, int precision = 4) {
    std::ostringstream out;
    out << std::setprecision(precision) << value;
    return out.str();
}

// ---------------------------------------------------------------------------
// 1. M2 worked case: Pr[X=0 | b=0] = 0.50 +- 0.01, Pr[X=0 | b=1] = 0.75 +- 0.01
//    over 1e5 game trials at k = 1, s = 1.
// ---------------------------------------------------------------------------
Outcome criterion_m2_worked_case() {
    Outcome out;
    cc::GameConfig config;
    config.machine = cc::MachineKind::M2;
    config.s = 1;
    config.k = cc::Capacity{1};
    config.universe_size = 4;
    config.trials = 100000;
    config.master_seed = cc::Seed{1001};

    double p_empty[2] = {0, 0};
    for (bool b : {false, true}) {
        const auto counts = cc::empirical_cardinality_counts(config, b, 100000);
        p_empty[b] = static_cast<double>(counts[0]) / 100000.0;
    }
    out.require(std::fabs(p_empty[0] - 0.50) <= 0.01,
                "Pr[X=0|b=0] = " + fmt(p_empty[0]) + " not within 0.50 +- 0.01");
    out.require(std::fabs(p_empty[1] - 0.75) <= 0.01,
                "Pr[X=0|b=1] = " + fmt(p_empty[1]) + " not within 0.75 +- 0.01");
    out.note("Pr[X=0|b=0] = " + fmt(p_empty[0]) + ", Pr[X=0|b=1] = " +
             fmt(p_empty[1]));
    return out;
}

// ---------------------------------------------------------------------------
// 2. M2 closed forms: normalized within 1e-12 for every k <= 64 and equal to
//    the exact enumeration at (s=1, k=1) for both bits within 1e-12.
// ---------------------------------------------------------------------------
Outcome criterion_m2_closed_forms() {
    Outcome out;
    for (std::uint32_t k = 1; k <= 64; ++k) {
        for (bool b : {false, true}) {
            const cc::Pmf pmf = cc::m2_paper_pmf(cc::Capacity{k}, b);
            double total = 0;
            for (double mass : pmf.masses()) {
                total += mass;
            }
            out.require(std::fabs(total - 1.0) <= 1e-12,
                        "pmf(k=" + std::to_string(k) + ", b=" +
                            std::to_string(b) + ") sums to " + fmt(total, 17));
        }
    }
    for (bool b : {false, true}) {
        const cc::Pmf paper = cc::m2_paper_pmf(cc::Capacity{1}, b);
        const cc::Pmf exact =
            cc::exact_pmf(cc::MachineKind::M2, 1, cc::Capacity{1}, b, 4);
        for (std::size_t x = 0; x <= 1; ++x) {
            out.require(std::fabs(paper(x) - exact(x)) <= 1e-12,
                        "paper/exact mismatch at x=" + std::to_string(x));
        }
    }
    out.note("normalized for k <= 64; matches enumeration at s=1, k=1");
    return out;
}

// ---------------------------------------------------------------------------
// 3. M1 distinguisher: counting adversary advantage 0.125 +- 0.01 over 1e5
//    trials at s=7, k=2; oracle optimal advantage exactly 0.125 (1e-12).
// ---------------------------------------------------------------------------
Outcome criterion_m1_distinguisher() {
    Outcome out;
    cc::GameConfig config;
    config.machine = cc::MachineKind::M1;
    config.s = 7;
    config.k = cc::Capacity{2};
    config.universe_size = 16;
    config.trials = 100000;
    config.master_seed = cc::Seed{1003};

    const auto est = cc::run_game(config, cc::make_cardinality_adversary(config));
    out.require(std::fabs(est.advantage - 0.125) <= 0.01,
                "Monte Carlo advantage " + fmt(est.advantage));

    const double optimal = cc::optimal_advantage(
        cc::exact_pair(cc::MachineKind::M1, 7, cc::Capacity{2}, 16));
    out.require(std::fabs(optimal - 0.125) <= 1e-12,
                "oracle optimal advantage " + fmt(optimal, 17));
    out.note("advantage = " + fmt(est.advantage) + ", oracle = " + fmt(optimal));
    return out;
}

// ---------------------------------------------------------------------------
// 4. M3 privacy: sanitized views identical under b=0/b=1, exhaustively for
//    universe <= 16, every s < n, k <= n, round, and hidden caller; Monte
//    Carlo advantage <= 0.005 over 1e5 trials.
// ---------------------------------------------------------------------------
Outcome criterion_m3_privacy() {
    Outcome out;
    std::uint64_t checked = 0;
    for (std::uint32_t n = 2; n <= 16 && out.pass; ++n) {
        for (std::uint32_t s = 1; s < n && out.pass; ++s) {
            for (std::uint32_t k = 1; k <= n && out.pass; ++k) {
                for (std::uint32_t r = 0; r < n && out.pass; ++r) {
                    const cc::CallerSet base = cc::m3_sanitized_view(
                        s, cc::Capacity{k}, n, r, std::nullopt);
                    for (cc::CallerId e = s; e < n; ++e) {
                        ++checked;
                        if (!(cc::m3_sanitized_view(s, cc::Capacity{k}, n, r,
                                                    e) == base)) {
                            out.require(false,
                                        "view differs at n=" + std::to_string(n) +
                                            " s=" + std::to_string(s) +
                                            " k=" + std::to_string(k) +
                                            " r=" + std::to_string(r) +
                                            " e=" + std::to_string(e));
                            break;
                        }
                    }
                }
            }
        }
    }

    cc::GameConfig config;
    config.machine = cc::MachineKind::M3;
    config.s = 4;
    config.k = cc::Capacity{2};
    config.universe_size = 8;
    config.trials = 100000;
    config.master_seed = cc::Seed{1004};
    const auto counting =
        cc::run_game(config, cc::make_cardinality_adversary(config));
    const auto bayes = cc::run_game(config, cc::make_bayes_adversary(config));
    out.require(counting.advantage <= 0.005,
                "counting adversary advantage " + fmt(counting.advantage));
    out.require(bayes.advantage <= 0.005,
                "bayes adversary advantage " + fmt(bayes.advantage));
    out.note(std::to_string(checked) + " exhaustive views identical; MC " +
             "advantage " + fmt(counting.advantage) + " / " +
             fmt(bayes.advantage));
    return out;
}

// ---------------------------------------------------------------------------
// 5. M3 liveness: every caller is accepted in exactly k rounds of every
//    window of universe_size consecutive rounds, exhaustively for n <= 32.
// ---------------------------------------------------------------------------
Outcome criterion_m3_liveness() {
    Outcome out;
    std::uint64_t windows = 0;
    for (std::uint32_t n = 1; n <= 32 && out.pass; ++n) {
        const cc::CallerSet everyone = cc::CallerSet::range(n);
        for (std::uint32_t k = 1; k <= n && out.pass; ++k) {
            cc::IdMap map = cc::IdMap::identity(n);
            // accepts[r] for three full cycles; windows start anywhere in the
            // first two, so every distinct window is covered.
            std::vector<std::vector<bool>> accepted(
                3 * n, std::vector<bool>(n, false));
            for (std::uint32_t r = 0; r < 3 * n; ++r) {
                const cc::MachineOutput u = cc::m3_answer(
                    cc::MachineInput{everyone, cc::Capacity{k},
                                     cc::RoundIndex{r}},
                    map);
                for (cc::CallerId e : u.accepted) {
                    accepted[r][e] = true;
                }
            }
            for (std::uint32_t start = 0; start < 2 * n && out.pass; ++start) {
                for (cc::CallerId e = 0; e < n; ++e) {
                    std::uint32_t count = 0;
                    for (std::uint32_t d = 0; d < n; ++d) {
                        count += accepted[start + d][e] ? 1 : 0;
                    }
                    ++windows;
                    if (count != k) {
                        out.require(false,
                                    "caller " + std::to_string(e) + " got " +
                                        std::to_string(count) + " rounds in a " +
                                        std::to_string(n) + "-round window, k=" +
                                        std::to_string(k));
                        break;
                    }
                }
            }
        }
    }
    out.note(std::to_string(windows) + " (window, caller) pairs verified");
    return out;
}

// ---------------------------------------------------------------------------
// 6. Oracle / Monte Carlo coherence: TV(exact pmf, empirical pmf at 1e5
//    trials) < 0.01 for every machine, s <= 6, k <= 4, both bits.
// ---------------------------------------------------------------------------
Outcome criterion_oracle_coherence() {
    Outcome out;
    double worst = 0;
    for (cc::MachineKind machine :
         {cc::MachineKind::M0, cc::MachineKind::M1, cc::MachineKind::M2,
          cc::MachineKind::M3}) {
        for (std::uint32_t s = 1; s <= 6; ++s) {
            for (std::uint32_t k = 1; k <= 4; ++k) {
                cc::GameConfig config;
                config.machine = machine;
                config.s = s;
                config.k = cc::Capacity{k};
                config.universe_size = 8;
                config.trials = 100000;
                config.master_seed = cc::Seed{
                    1006 + (static_cast<std::uint64_t>(machine) << 8) +
                    s * 16 + k};
                for (bool b : {false, true}) {
                    const auto counts =
                        cc::empirical_cardinality_counts(config, b, 100000);
                    const cc::Pmf exact =
                        cc::exact_pmf(machine, s, cc::Capacity{k}, b, 8);
                    const double tv =
                        cc::total_variation(cc::Pmf::from_counts(counts), exact);
                    worst = std::max(worst, tv);
                    if (tv >= 0.01) {
                        out.require(
                            false,
                            "TV = " + fmt(tv) + " at machine=" +
                                std::to_string(static_cast<int>(machine)) +
                                " s=" + std::to_string(s) + " k=" +
                                std::to_string(k) + " b=" + std::to_string(b));
                    }
                }
            }
        }
    }
    out.note("48 contexts x 2 bits, worst TV = " + fmt(worst));
    return out;
}

// ---------------------------------------------------------------------------
// 7. CF attack end to end: greedy baseline is pinned down (success >= 0.95);
//    switching only the policy to the schedule machine drops it to <= 0.10.
// ---------------------------------------------------------------------------
Outcome criterion_cf_attack() {
    Outcome out;
    cc::SimConfig config;
    config.n_users = 20;
    config.capacity = cc::Capacity{1};
    config.target = 0;
    config.honest_partner = 1;
    config.friendships = {{0, 1}, {0, 2}};
    config.compromised = cc::CallerSet{2};
    config.rounds = 50;
    config.online_p = 0.5;
    config.master_seed = cc::Seed{1007};

    config.policy = cc::Policy::M0;
    const double baseline = cc::attack_success_rate(config, 200);
    config.policy = cc::Policy::M3;
    const double mitigated = cc::attack_success_rate(config, 200);

    out.require(baseline >= 0.95, "baseline success " + fmt(baseline));
    out.require(mitigated <= 0.10, "mitigated success " + fmt(mitigated));
    out.note("m0 success = " + fmt(baseline) + ", m3 success = " +
             fmt(mitigated));
    return out;
}

// ---------------------------------------------------------------------------
// 8. Mitigation latency: universe 8, k = 2 has max wait 6 and mean 2.625
//    (+- 0.05 over 1e5 sampled phases, exact over the 8 phases).
// ---------------------------------------------------------------------------
Outcome criterion_latency() {
    Outcome out;
    const cc::LatencyStats exact =
        cc::dial_latency_exact(cc::Policy::M3, 8, cc::Capacity{2});
    out.require(exact.max == 6, "exact max " + std::to_string(exact.max));
    out.require(std::fabs(exact.mean - 2.625) <= 1e-12,
                "exact mean " + fmt(exact.mean));

    const cc::LatencyStats sampled = cc::measure_dial_latency(
        cc::Policy::M3, 8, cc::Capacity{2}, 100000, cc::Seed{1008});
    out.require(sampled.max == 6, "sampled max " + std::to_string(sampled.max));
    out.require(std::fabs(sampled.mean - 2.625) <= 0.05,
                "sampled mean " + fmt(sampled.mean));
    out.note("exact mean = 2.625, sampled mean = " + fmt(sampled.mean) +
             ", max = 6");
    return out;
}

// ---------------------------------------------------------------------------
// 9. Reproducibility: re-running any experiment from the spec embedded in
//    its output produces bit-identical artifacts (CSV and JSON).
// ---------------------------------------------------------------------------
Outcome criterion_reproducibility() {
    Outcome out;
    const fs::path dir = fs::temp_directory_path() / "callcenter_acceptance";
    fs::create_directories(dir);

    const char* configs[] = {
        "experiment = game\nmachine = m1,m3\ns = 3\nk = 2\nuniverse = 8\n"
        "trials = 20000\nseed = 1009\n",
        "experiment = sim\npolicy = m0,m3\nn_users = 12\ntrials = 50\n"
        "seed = 1010\n",
        "experiment = oracle\nmachine = m2\ns = 1\nk = 2\nuniverse = 4\n",
        "experiment = latency\npolicy = m3\nuniverse = 4,8\nk = 2\n"
        "trials = 20000\nseed = 1011\n",
    };
    int case_index = 0;
    for (const char* config : configs) {
        for (const std::string format : {"csv", "json"}) {
            const std::string tag =
                std::to_string(case_index) + "." + format;
            cc::RunRequest first;
            first.spec = cc::parse_config(config);
            first.format = format;
            first.out = dir / ("first-" + tag);
            first.plot_out = dir / ("first-plot-" + tag);
            cc::run_experiment(first);

            std::ifstream in(first.out, std::ios::binary);
            std::ostringstream buffer;
            buffer << in.rdbuf();

            cc::RunRequest second = first;
            second.spec = cc::parse_config(buffer.str());
            second.out = dir / ("second-" + tag);
            second.plot_out = dir / ("second-plot-" + tag);
            cc::run_experiment(second);

            const auto slurp = [](const fs::path& p) {
                std::ifstream f(p, std::ios::binary);
                std::ostringstream s;
                s << f.rdbuf();
                return s.str();
            };
            out.require(slurp(first.out) == slurp(second.out),
                        "artifact differs for case " + tag);
            out.require(slurp(*first.plot_out) == slurp(*second.plot_out),
                        "plot differs for case " + tag);
        }
        ++case_index;
    }
    out.note("4 experiments x 2 formats re-run bit-identically");
    return out;
}

} // namespace

int main() {
    struct Criterion {
        int id;
        const char* name;
        std::function<Outcome()> run;
    };
    const std::vector<Criterion> criteria = {
        {1, "M2 worked case (0.50 / 0.75)", criterion_m2_worked_case},
        {2, "M2 closed forms vs exact oracle", criterion_m2_closed_forms},
        {3, "M1 distinguisher advantage 0.125", criterion_m1_distinguisher},
        {4, "M3 privacy (exhaustive + Monte Carlo)", criterion_m3_privacy},
        {5, "M3 liveness (k rounds per cycle)", criterion_m3_liveness},
        {6, "oracle / Monte Carlo coherence", criterion_oracle_coherence},
        {7, "CF attack baseline vs mitigation", criterion_cf_attack},
        {8, "mitigation dial latency", criterion_latency},
        {9, "reproducibility from embedded specs", criterion_reproducibility},
    };

    int failures = 0;
    for (const Criterion& criterion : criteria) {
        Outcome outcome;
        std::string detail;
        try {
            outcome = criterion.run();
        } catch (const std::exception& error) {
            outcome.pass = false;
            outcome.detail = std::string("exception: ") + error.what();
        }
        failures += outcome.pass ? 0 : 1;
        std::cout << "[" << criterion.id << "] "
                  << (outcome.pass ? "PASS" : "FAIL") << "  " << criterion.name
                  << (outcome.detail.empty() ? "" : "  -- " + outcome.detail)
                  << "\n";
    }
    if (failures > 0) {
        std::cout << failures << " criterion(s) failed\n";
        return 1;
    }
    std::cout << "all 9 criteria passed\n";
    return 0;
}
