#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <unordered_map>
#include <utility>
#include <variant>
#include <vector>

#include "callcenter/core.hpp"

namespace callcenter {

/// Round counter fed to schedule-based machines in place of a random string.
struct RoundIndex {
    std::uint64_t r = 0;

    friend bool operator==(const RoundIndex&, const RoundIndex&) = default;
};

/// Thrown when a dynamic id map runs out of unassigned slots.
class UniverseFullError : public std::runtime_error {
public:
    explicit UniverseFullError(std::uint32_t universe_size)
        : std::runtime_error("id map universe exhausted (size " +
                             std::to_string(universe_size) + ")") {}
};

// ============================================================================
// Id map: bijection from callers to schedule slots
// ============================================================================

/// Maps callers to slots in [0, universe_size). A static map is fixed up
/// front; a dynamic map binds each new caller to a uniformly random unused
/// slot the first time it is seen, and the binding never changes afterwards.
/// Dynamic assignment draws its randomness from the seed given at
/// construction, so runs that use it stay reproducible.
class IdMap {
public:
    enum class Mode { Static, Dynamic };

    /// Static map with id(e) = e for e < universe_size.
    static IdMap identity(std::uint32_t universe_size) {
        IdMap m(universe_size, Mode::Static);
        m.identity_ = true;
        return m;
    }

    /// Static map from explicit (caller, slot) pairs. Partial maps are
    /// allowed; slots must be distinct and below universe_size.
    static IdMap from_assignments(
        std::uint32_t universe_size,
        const std::vector<std::pair<CallerId, std::uint32_t>>& pairs) {
        IdMap m(universe_size, Mode::Static);
        for (const auto& [caller, slot] : pairs) {
            m.bind(caller, slot);
        }
        return m;
    }

    /// Empty dynamic map; assignments consume randomness derived from seed.
    static IdMap dynamic(std::uint32_t universe_size, Seed seed) {
        IdMap m(universe_size, Mode::Dynamic);
        m.seed_ = seed;
        return m;
    }

    Mode mode() const { return mode_; }
    std::uint32_t universe_size() const { return universe_; }
    std::size_t assigned_count() const {
        return identity_ ? universe_ : slots_.size();
    }

    std::optional<std::uint32_t> slot_of(CallerId caller) const {
        if (identity_) {
            if (caller < universe_) {
                return caller;
            }
            return std::nullopt;
        }
        auto it = slots_.find(caller);
        if (it == slots_.end()) {
            return std::nullopt;
        }
        return it->second;
    }

    /// Slot of `caller`, assigning one first when the map is dynamic and the
    /// caller is new. Static maps never gain assignments here.
    std::uint32_t slot_or_assign(CallerId caller) {
        if (auto slot = slot_of(caller)) {
            return *slot;
        }
        if (mode_ == Mode::Static) {
            throw std::invalid_argument(
                "IdMap: caller " + std::to_string(caller) +
                " has no assignment in a static map");
        }
        const Seed draw = derive_seed(seed_, "assign", assignments_made_++);
        return assign_unused(caller, draw);
    }

    friend IdMap id_map_assign(const IdMap& map, CallerId caller, Seed seed);

private:
    IdMap(std::uint32_t universe_size, Mode mode)
        : universe_(universe_size), mode_(mode), slot_used_(universe_size, 0) {}

    void bind(CallerId caller, std::uint32_t slot) {
        if (slot >= universe_) {
            throw std::invalid_argument("IdMap: slot out of range");
        }
        if (slot_used_[slot] || slots_.contains(caller)) {
            throw std::invalid_argument("IdMap: assignment must be injective");
        }
        slots_.emplace(caller, slot);
        slot_used_[slot] = 1;
    }

    std::uint32_t assign_unused(CallerId caller, Seed seed) {
        std::vector<std::uint32_t> unused;
        unused.reserve(universe_ - slots_.size());
        for (std::uint32_t s = 0; s < universe_; ++s) {
            if (!slot_used_[s]) {
                unused.push_back(s);
            }
        }
        if (unused.empty()) {
            throw UniverseFullError(universe_);
        }
        const auto pick = static_cast<std::size_t>(sample_uniform_int(
            0, static_cast<std::int64_t>(unused.size()) - 1, seed));
        bind(caller, unused[pick]);
        return unused[pick];
    }

    std::uint32_t universe_;
    Mode mode_;
    bool identity_ = false;
    std::unordered_map<CallerId, std::uint32_t> slots_;
    std::vector<char> slot_used_;
    Seed seed_{};
    std::uint64_t assignments_made_ = 0;
};

/// Pure assignment: returns a copy of `map` with `caller` bound to a
/// uniformly random unused slot drawn from `seed`. Idempotent for callers
/// that already have a slot.
inline IdMap id_map_assign(const IdMap& map, CallerId caller, Seed seed) {
    if (map.mode() != IdMap::Mode::Dynamic) {
        throw std::invalid_argument("id_map_assign: map is not dynamic");
    }
    IdMap out = map;
    if (!out.slot_of(caller)) {
        out.assign_unused(caller, seed);
    }
    return out;
}

// ============================================================================
// Answering machines
// ============================================================================

/// The (callers, capacity, randomness) triple every machine consumes.
/// Randomness is a Seed for the randomized machines and the current
/// RoundIndex for schedule-based ones.
struct MachineInput {
    CallerSet callers;
    Capacity capacity;
    std::variant<Seed, RoundIndex> randomness;
};

struct MachineOutput {
    CallerSet accepted;
};

enum class MachineKind { M0, M1, M2, M3 };

namespace detail {

inline Seed machine_seed(const MachineInput& input, const char* who) {
    if (const Seed* s = std::get_if<Seed>(&input.randomness)) {
        return *s;
    }
    throw std::invalid_argument(std::string(who) + ": randomness must be a Seed");
}

inline RoundIndex machine_round(const MachineInput& input, const char* who) {
    if (const RoundIndex* r = std::get_if<RoundIndex>(&input.randomness)) {
        return *r;
    }
    throw std::invalid_argument(std::string(who) +
                                ": randomness must be a RoundIndex");
}

} // namespace detail

/// Greedy baseline: accept callers in canonical order until the capacity left
/// over by already-busy slots runs out. Models clients that auto-accept.
inline MachineOutput m0_answer(const MachineInput& input,
                               const CallerSet& busy) {
    const std::uint32_t k = input.capacity.value();
    if (busy.size() > k) {
        throw std::invalid_argument("m0_answer: |busy| exceeds capacity");
    }
    std::uint32_t free = k - static_cast<std::uint32_t>(busy.size());
    CallerSet accepted;
    for (CallerId caller : input.callers) {
        if (free == 0) {
            break;
        }
        accepted.insert(caller);
        --free;
    }
    return MachineOutput{std::move(accepted)};
}

/// Straw man 1: the first min(k, |C|) elements of a seeded uniform
/// permutation of C. Always fills as much capacity as it can.
inline MachineOutput m1_answer(const MachineInput& input) {
    const Seed seed = detail::machine_seed(input, "m1_answer");
    const auto pi = permute(input.callers, derive_seed(seed, "perm", 0));
    const std::size_t take =
        std::min<std::size_t>(input.capacity.value(), pi.size());
    CallerSet accepted(std::vector<CallerId>(pi.begin(), pi.begin() + take));
    return MachineOutput{std::move(accepted)};
}

/// Straw man 2: draw m uniformly from [0, min(k, |C|)], answer the first m
/// elements of a seeded uniform permutation of C. The permutation seed and
/// the m-sample seed come from distinct derivation labels.
inline MachineOutput m2_answer(const MachineInput& input) {
    const Seed seed = detail::machine_seed(input, "m2_answer");
    const auto pi = permute(input.callers, derive_seed(seed, "perm", 0));
    const auto bound = static_cast<std::int64_t>(
        std::min<std::size_t>(input.capacity.value(), pi.size()));
    const auto m = static_cast<std::size_t>(
        sample_uniform_int(0, bound, derive_seed(seed, "m", 0)));
    CallerSet accepted(std::vector<CallerId>(pi.begin(), pi.begin() + m));
    return MachineOutput{std::move(accepted)};
}

/// Bounded-universe machine: caller e is answered in round r exactly when
/// its slot falls in the window {r, r+1, ..., r+k-1} mod universe_size.
/// The output depends only on (C, k, r mod universe_size, id_map); nothing
/// outside C and no hidden state can influence it. With k >= universe_size
/// the window covers every slot and every caller in C is accepted.
inline MachineOutput m3_answer(const MachineInput& input, IdMap& id_map) {
    const RoundIndex round = detail::machine_round(input, "m3_answer");
    const std::uint32_t n = id_map.universe_size();
    const std::uint32_t k = input.capacity.value();
    const std::uint64_t r = round.r % n;
    CallerSet accepted;
    for (CallerId caller : input.callers) {
        const std::uint32_t slot = id_map.slot_or_assign(caller);
        const std::uint64_t offset = (static_cast<std::uint64_t>(slot) + n - r) % n;
        if (offset < k) {
            accepted.insert(caller);
        }
    }
    return MachineOutput{std::move(accepted)};
}

} // namespace callcenter
