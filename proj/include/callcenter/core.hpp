#pragma once

#include <algorithm>
#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string_view>
#include <vector>

namespace callcenter {

// ============================================================================
// Identifiers and scalar domain types
// ============================================================================

/// Identity of a potential caller. Within a declared universe of size n the
/// valid ids are 0..n-1.
using CallerId = std::uint32_t;

/// 64-bit entropy word. Every stochastic operation in the library is a pure
/// function of an explicit Seed, so any run can be replayed bit for bit.
struct Seed {
    std::uint64_t value = 0;

    friend bool operator==(const Seed&, const Seed&) = default;
};

/// Communication capacity k >= 1: the number of concurrent conversations
/// (call-center operators) a client can sustain per round.
class Capacity {
public:
    explicit Capacity(std::uint32_t k) : k_(k) {
        if (k == 0) {
            throw std::invalid_argument("Capacity: k must be >= 1");
        }
    }

    std::uint32_t value() const { return k_; }

    friend bool operator==(const Capacity&, const Capacity&) = default;

private:
    std::uint32_t k_;
};

// ============================================================================
// Caller sets
// ============================================================================

/// A set of distinct caller ids kept in canonical ascending order.
///
/// The canonical order makes every derived random choice (permutation,
/// greedy tie-break) independent of construction order.
class CallerSet {
public:
    CallerSet() = default;

    CallerSet(std::initializer_list<CallerId> ids)
        : members_(ids) {
        canonicalize();
    }

    explicit CallerSet(std::vector<CallerId> ids) : members_(std::move(ids)) {
        canonicalize();
    }

    /// The contiguous set {0, 1, ..., n-1}.
    static CallerSet range(std::uint32_t n) {
        CallerSet s;
        s.members_.reserve(n);
        for (std::uint32_t i = 0; i < n; ++i) {
            s.members_.push_back(i);
        }
        return s;
    }

    void insert(CallerId id) {
        auto it = std::lower_bound(members_.begin(), members_.end(), id);
        if (it == members_.end() || *it != id) {
            members_.insert(it, id);
        }
    }

    void erase(CallerId id) {
        auto it = std::lower_bound(members_.begin(), members_.end(), id);
        if (it != members_.end() && *it == id) {
            members_.erase(it);
        }
    }

    bool contains(CallerId id) const {
        return std::binary_search(members_.begin(), members_.end(), id);
    }

    std::size_t size() const { return members_.size(); }
    bool empty() const { return members_.empty(); }

    auto begin() const { return members_.begin(); }
    auto end() const { return members_.end(); }

    const std::vector<CallerId>& values() const { return members_; }

    /// Copy of this set with `id` removed (no-op if absent).
    CallerSet without(CallerId id) const {
        CallerSet out = *this;
        out.erase(id);
        return out;
    }

    /// Copy of this set with `id` inserted.
    CallerSet with(CallerId id) const {
        CallerSet out = *this;
        out.insert(id);
        return out;
    }

    friend bool operator==(const CallerSet&, const CallerSet&) = default;

private:
    void canonicalize() {
        std::sort(members_.begin(), members_.end());
        members_.erase(std::unique(members_.begin(), members_.end()),
                       members_.end());
    }

    std::vector<CallerId> members_;
};

inline CallerSet intersect(const CallerSet& a, const CallerSet& b) {
    std::vector<CallerId> out;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(),
                          std::back_inserter(out));
    return CallerSet(std::move(out));
}

// ============================================================================
// Deterministic randomness
// ============================================================================

/// SplitMix64 generator (Steele, Lea, Flood 2014). Fast, 2^64 period,
/// statistically solid for simulation work. Not cryptographic, and does not
/// need to be: the toolkit needs reproducibility and statistical quality,
/// not adversarial resistance of the generator itself.
class SplitMix64 {
public:
    explicit SplitMix64(Seed seed) : state_(seed.value) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Unbiased draw from [0, bound) via rejection sampling. bound >= 1.
    std::uint64_t next_below(std::uint64_t bound) {
        // threshold = 2^64 mod bound; values below it would bias the
        // low residues, so they are rejected.
        const std::uint64_t threshold = (0 - bound) % bound;
        for (;;) {
            const std::uint64_t r = next();
            if (r >= threshold) {
                return r % bound;
            }
        }
    }

    /// Uniform double in [0, 1) with 53 bits of precision.
    double next_unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

private:
    std::uint64_t state_;
};

namespace detail {

inline std::uint64_t fnv1a64(std::string_view text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

} // namespace detail

/// Domain-separated seed derivation. Distinct (label, index) pairs yield
/// independent streams from the same parent; identical inputs always yield
/// the identical seed. Every random choice in the toolkit is pinned to the
/// master seed through a chain of these derivations.
inline Seed derive_seed(Seed parent, std::string_view label,
                        std::uint64_t index) {
    const std::uint64_t tagged = detail::mix64(parent.value ^ detail::fnv1a64(label));
    return Seed{detail::mix64(tagged ^ index)};
}

/// Uniform permutation of the set, deterministic in (set, seed).
/// Fisher-Yates over SplitMix64 with rejection sampling keeps every one of
/// the |set|! orderings equally likely over uniformly random seeds.
inline std::vector<CallerId> permute(const CallerSet& set, Seed seed) {
    std::vector<CallerId> out(set.begin(), set.end());
    SplitMix64 rng(seed);
    for (std::size_t i = out.size(); i > 1; --i) {
        std::swap(out[i - 1], out[rng.next_below(i)]);
    }
    return out;
}

/// Uniform integer in [lo, hi] inclusive. Throws if lo > hi.
inline std::int64_t sample_uniform_int(std::int64_t lo, std::int64_t hi,
                                       Seed seed) {
    if (lo > hi) {
        throw std::invalid_argument("sample_uniform_int: lo > hi");
    }
    const std::uint64_t span =
        static_cast<std::uint64_t>(hi) - static_cast<std::uint64_t>(lo) + 1;
    SplitMix64 rng(seed);
    if (span == 0) { // full 64-bit range
        return static_cast<std::int64_t>(rng.next());
    }
    return lo + static_cast<std::int64_t>(rng.next_below(span));
}

/// Uniform double in [0, 1), deterministic in the seed.
inline double sample_unit(Seed seed) {
    SplitMix64 rng(seed);
    return rng.next_unit();
}

} // namespace callcenter
