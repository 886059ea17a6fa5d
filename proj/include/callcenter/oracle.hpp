#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <vector>

#include "callcenter/core.hpp"
#include "callcenter/machines.hpp"

namespace callcenter {

// ============================================================================
// Probability mass functions over observed cardinalities
// ============================================================================

/// Discrete distribution of the observed cardinality X = |U - {e}|.
/// Support is the contiguous range 0..max; mass outside is zero.
class Pmf {
public:
    explicit Pmf(std::vector<double> mass) : mass_(std::move(mass)) {
        if (mass_.empty()) {
            throw std::invalid_argument("Pmf: empty support");
        }
        double total = 0;
        for (double m : mass_) {
            if (m < 0) {
                throw std::invalid_argument("Pmf: negative mass");
            }
            total += m;
        }
        if (std::fabs(total - 1.0) > 1e-9) {
            throw std::invalid_argument("Pmf: masses must sum to 1");
        }
    }

    /// Empirical pmf from per-cardinality sample counts.
    static Pmf from_counts(const std::vector<std::uint64_t>& counts) {
        std::uint64_t total = 0;
        for (std::uint64_t c : counts) {
            total += c;
        }
        if (total == 0) {
            throw std::invalid_argument("Pmf::from_counts: no samples");
        }
        std::vector<double> mass(counts.size());
        for (std::size_t x = 0; x < counts.size(); ++x) {
            mass[x] = static_cast<double>(counts[x]) / static_cast<double>(total);
        }
        return Pmf(std::move(mass));
    }

    double operator()(std::size_t x) const {
        return x < mass_.size() ? mass_[x] : 0.0;
    }

    std::size_t max_cardinality() const { return mass_.size() - 1; }
    bool in_support(std::size_t x) const { return x < mass_.size(); }
    const std::vector<double>& masses() const { return mass_; }

private:
    std::vector<double> mass_;
};

struct PmfContext {
    MachineKind machine;
    std::uint32_t s;
    std::uint32_t k;
    std::uint32_t universe_size;
};

/// The two conditional distributions of X the adversary must tell apart.
struct DistributionPair {
    Pmf pmf_b0;
    Pmf pmf_b1;
    PmfContext context;
};

// ============================================================================
// Exact cardinality oracle
// ============================================================================

namespace detail {

/// |{0..s-1} intersected with the window {r..r+k-1} mod n|.
inline std::size_t window_overlap(std::uint32_t s, std::uint32_t k,
                                  std::uint32_t n, std::uint32_t r) {
    std::size_t overlap = 0;
    const std::uint32_t span = std::min(k, n);
    for (std::uint32_t i = 0; i < span; ++i) {
        if ((r + i) % n < s) {
            ++overlap;
        }
    }
    return overlap;
}

inline Pmf pmf_from_atoms(const std::map<std::size_t, std::uint64_t>& atoms,
                          std::uint64_t total) {
    std::size_t max_x = 0;
    for (const auto& [x, count] : atoms) {
        max_x = std::max(max_x, x);
    }
    std::vector<double> mass(max_x + 1, 0.0);
    for (const auto& [x, count] : atoms) {
        mass[x] = static_cast<double>(count) / static_cast<double>(total);
    }
    return Pmf(std::move(mass));
}

} // namespace detail

/// Exact distribution of X = |U - {e}| in the security game, computed by
/// enumerating equally likely atoms rather than by sampling:
///   - M1/M2: the position of the hidden caller among |C| permutation slots,
///     crossed with the cardinality draw m where applicable. X depends on
///     nothing else, so full |C|! enumeration is unnecessary.
///   - M3: the round r, crossed with the choice of hidden caller (identity
///     id map over the universe, challenger set S = {0..s-1}).
///   - M0: degenerate; the greedy machine is deterministic given C.
/// No sampling error: every returned mass is an exact ratio of atom counts.
inline Pmf exact_pmf(MachineKind machine, std::uint32_t s, Capacity k,
                     bool b, std::uint32_t universe_size) {
    constexpr std::uint32_t kEnumerationBound = 10;
    if (s > kEnumerationBound) {
        throw std::invalid_argument("exact_pmf: s exceeds enumeration bound");
    }
    if (s >= universe_size) {
        throw std::invalid_argument("exact_pmf: requires s < universe_size");
    }
    const std::uint32_t kk = k.value();
    std::map<std::size_t, std::uint64_t> atoms;
    std::uint64_t total = 0;

    switch (machine) {
    case MachineKind::M0: {
        // Canonical greedy: U is the min(k,|C|) lowest ids. The hidden
        // caller is drawn above S, so X = min(k, s) under either bit.
        atoms[std::min(kk, s)] += 1;
        total = 1;
        break;
    }
    case MachineKind::M1: {
        if (!b) {
            atoms[std::min(kk, s)] += 1;
            total = 1;
        } else {
            const std::uint32_t c = s + 1;
            const std::uint32_t t = std::min(kk, c);
            for (std::uint32_t pos = 0; pos < c; ++pos) {
                atoms[pos < t ? t - 1 : t] += 1;
            }
            total = c;
        }
        break;
    }
    case MachineKind::M2: {
        if (!b) {
            const std::uint32_t bound = std::min(kk, s);
            for (std::uint32_t m = 0; m <= bound; ++m) {
                atoms[m] += 1;
            }
            total = bound + 1;
        } else {
            const std::uint32_t c = s + 1;
            const std::uint32_t bound = std::min(kk, c);
            for (std::uint32_t m = 0; m <= bound; ++m) {
                for (std::uint32_t pos = 0; pos < c; ++pos) {
                    atoms[pos < m ? m - 1 : m] += 1;
                }
            }
            total = static_cast<std::uint64_t>(bound + 1) * c;
        }
        break;
    }
    case MachineKind::M3: {
        const std::uint32_t n = universe_size;
        for (std::uint32_t r = 0; r < n; ++r) {
            const std::size_t x = detail::window_overlap(s, kk, n, r);
            if (!b) {
                atoms[x] += 1;
            } else {
                // One atom per hidden-caller choice; X never depends on it.
                atoms[x] += n - s;
            }
        }
        total = b ? static_cast<std::uint64_t>(n) * (n - s) : n;
        break;
    }
    }
    return detail::pmf_from_atoms(atoms, total);
}

/// Both conditional distributions for a game context.
inline DistributionPair exact_pair(MachineKind machine, std::uint32_t s,
                                   Capacity k, std::uint32_t universe_size) {
    return DistributionPair{
        exact_pmf(machine, s, k, false, universe_size),
        exact_pmf(machine, s, k, true, universe_size),
        PmfContext{machine, s, k.value(), universe_size},
    };
}

/// Closed-form M2 pmfs: under b=0, X is uniform on 0..k; under b=1 half the
/// mass at x=k moves to x=0. The b=1 form treats the hidden caller's
/// acceptance as a fair coin independent of m, so it agrees with the exact
/// enumeration at the worked point s=1, k=1 and only there; use exact_pmf
/// when calibrating adversaries at other parameters.
inline Pmf m2_paper_pmf(Capacity k, bool b) {
    const std::uint32_t kk = k.value();
    const double base = 1.0 / (kk + 1);
    std::vector<double> mass(kk + 1, base);
    if (b) {
        mass[0] = base + base / 2;
        mass[kk] = base / 2;
    }
    return Pmf(std::move(mass));
}

// ============================================================================
// Distribution distances and statistical tests
// ============================================================================

/// (1/2) * sum |p(x) - q(x)| over the union of supports.
inline double total_variation(const Pmf& p, const Pmf& q) {
    const std::size_t max_x = std::max(p.max_cardinality(), q.max_cardinality());
    double sum = 0;
    for (std::size_t x = 0; x <= max_x; ++x) {
        sum += std::fabs(p(x) - q(x));
    }
    return sum / 2;
}

/// Best achievable |Pr[b = b'] - 1/2| for any adversary that sees only the
/// cardinality of the sanitized output: half the total variation distance.
inline double optimal_advantage(const DistributionPair& pair) {
    return total_variation(pair.pmf_b0, pair.pmf_b1) / 2;
}

namespace detail {

/// Upper regularized incomplete gamma Q(a, x): series below a+1, continued
/// fraction above (modified Lentz).
inline double gamma_q(double a, double x) {
    if (x < 0 || a <= 0) {
        throw std::invalid_argument("gamma_q: requires x >= 0 and a > 0");
    }
    if (x == 0) {
        return 1.0;
    }
    const double log_prefix = -x + a * std::log(x) - std::lgamma(a);
    if (x < a + 1.0) {
        double ap = a;
        double term = 1.0 / a;
        double sum = term;
        for (int i = 0; i < 1000; ++i) {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if (std::fabs(term) < std::fabs(sum) * 1e-16) {
                break;
            }
        }
        return 1.0 - sum * std::exp(log_prefix);
    }
    constexpr double kTiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / kTiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i <= 1000; ++i) {
        const double an = -static_cast<double>(i) * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < kTiny) {
            d = kTiny;
        }
        c = b + an / c;
        if (std::fabs(c) < kTiny) {
            c = kTiny;
        }
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::fabs(delta - 1.0) < 1e-16) {
            break;
        }
    }
    return std::exp(log_prefix) * h;
}

} // namespace detail

struct ChiSquareResult {
    double statistic;
    double p_value;
    std::size_t pooled_buckets;
};

/// Pearson chi-square goodness of fit of observed per-cardinality counts
/// against an expected pmf. Adjacent buckets are pooled until each expected
/// count reaches 5 (standard practice); trailing leftovers merge into the
/// last pooled bucket. Degrees of freedom = pooled buckets - 1.
inline ChiSquareResult chi_square_gof(const std::vector<std::uint64_t>& counts,
                                      const Pmf& expected) {
    std::uint64_t total = 0;
    for (std::uint64_t c : counts) {
        total += c;
    }
    double observed_support_mass = 0;
    for (std::size_t x = 0; x < counts.size(); ++x) {
        if (counts[x] > 0) {
            observed_support_mass += expected(x);
        }
    }
    if (total == 0 || observed_support_mass == 0) {
        throw std::invalid_argument(
            "chi_square_gof: expected mass vanishes on the observed support");
    }

    constexpr double kPoolThreshold = 5.0;
    const std::size_t width = std::max<std::size_t>(
        counts.size(), expected.max_cardinality() + 1);
    std::vector<std::pair<double, double>> buckets; // (observed, expected)
    double acc_obs = 0;
    double acc_exp = 0;
    for (std::size_t x = 0; x < width; ++x) {
        acc_obs += x < counts.size() ? static_cast<double>(counts[x]) : 0.0;
        acc_exp += static_cast<double>(total) * expected(x);
        if (acc_exp >= kPoolThreshold) {
            buckets.emplace_back(acc_obs, acc_exp);
            acc_obs = 0;
            acc_exp = 0;
        }
    }
    if (acc_obs > 0 || acc_exp > 0) {
        if (buckets.empty()) {
            buckets.emplace_back(acc_obs, acc_exp);
        } else {
            buckets.back().first += acc_obs;
            buckets.back().second += acc_exp;
        }
    }

    double statistic = 0;
    for (const auto& [obs, exp] : buckets) {
        const double diff = obs - exp;
        statistic += diff * diff / exp;
    }
    if (buckets.size() < 2) {
        return ChiSquareResult{statistic, 1.0, buckets.size()};
    }
    const double df = static_cast<double>(buckets.size() - 1);
    return ChiSquareResult{statistic, detail::gamma_q(df / 2, statistic / 2),
                           buckets.size()};
}

} // namespace callcenter
