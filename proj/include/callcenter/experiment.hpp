#pragma once

#include <atomic>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "json.hpp"

#include "callcenter/core.hpp"
#include "callcenter/game.hpp"
#include "callcenter/mpm_sim.hpp"
#include "callcenter/oracle.hpp"

namespace callcenter {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Default master seed when a config omits one. Fixed and documented so that
/// runs are reproducible by default; never derived from the clock.
inline constexpr std::uint64_t kDefaultSeed = 20181015;

// ============================================================================
// Key schema
// ============================================================================

namespace detail {

enum class KeyType { UInt, Float, Enum, FloatOrDefault };

struct KeyDef {
    std::string_view name;
    KeyType type;
    std::string_view default_value;
    std::vector<std::string_view> choices; // Enum only
};

inline const std::vector<KeyDef>& key_schema(const std::string& experiment) {
    static const std::vector<KeyDef> game{
        {"machine", KeyType::Enum, "m1", {"m0", "m1", "m2", "m3"}},
        {"adversary", KeyType::Enum, "cardinality",
         {"cardinality", "bayes", "bayes_paper"}},
        {"s", KeyType::UInt, "1", {}},
        {"k", KeyType::UInt, "1", {}},
        {"universe", KeyType::UInt, "16", {}},
        {"trials", KeyType::UInt, "100000", {}},
        {"seed", KeyType::UInt, "20181015", {}},
    };
    static const std::vector<KeyDef> oracle{
        {"machine", KeyType::Enum, "m2", {"m0", "m1", "m2", "m3"}},
        {"s", KeyType::UInt, "1", {}},
        {"k", KeyType::UInt, "1", {}},
        {"universe", KeyType::UInt, "16", {}},
        {"source", KeyType::Enum, "exact", {"exact", "paper"}},
        {"seed", KeyType::UInt, "20181015", {}},
    };
    static const std::vector<KeyDef> sim{
        {"policy", KeyType::Enum, "m0", {"m0", "m3"}},
        {"scope", KeyType::Enum, "friends", {"friends", "all"}},
        {"n_users", KeyType::UInt, "20", {}},
        {"friends", KeyType::UInt, "2", {}},
        {"compromised", KeyType::UInt, "1", {}},
        {"capacity", KeyType::UInt, "1", {}},
        {"rounds", KeyType::UInt, "50", {}},
        {"p", KeyType::Float, "0.5", {}},
        {"partner_p", KeyType::FloatOrDefault, "default", {}},
        {"probe_period", KeyType::UInt, "1", {}},
        {"trials", KeyType::UInt, "200", {}},
        {"seed", KeyType::UInt, "20181015", {}},
    };
    static const std::vector<KeyDef> latency{
        {"policy", KeyType::Enum, "m3", {"m0", "m3"}},
        {"universe", KeyType::UInt, "8", {}},
        {"k", KeyType::UInt, "2", {}},
        {"trials", KeyType::UInt, "100000", {}},
        {"horizon", KeyType::UInt, "0", {}}, // 0 means one full cycle
        {"seed", KeyType::UInt, "20181015", {}},
    };
    if (experiment == "game") {
        return game;
    }
    if (experiment == "oracle") {
        return oracle;
    }
    if (experiment == "sim") {
        return sim;
    }
    if (experiment == "latency") {
        return latency;
    }
    throw ConfigError("unknown experiment '" + experiment +
                      "' (expected game, oracle, sim, or latency)");
}

inline std::string format_double(double value) {
    char buffer[64];
    const auto [end, ec] =
        std::to_chars(buffer, buffer + sizeof buffer, value);
    if (ec != std::errc{}) {
        throw std::runtime_error("format_double failed");
    }
    return std::string(buffer, end);
}

inline std::uint64_t parse_u64(const std::string& key,
                               const std::string& text) {
    std::uint64_t value = 0;
    const char* first = text.data();
    const char* last = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc{} || ptr != last) {
        throw ConfigError("key '" + key + "': expected a non-negative integer, got '" +
                          text + "'");
    }
    return value;
}

inline double parse_double(const std::string& key, const std::string& text) {
    try {
        std::size_t used = 0;
        const double value = std::stod(text, &used);
        if (used != text.size()) {
            throw std::invalid_argument(text);
        }
        return value;
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "': expected a number, got '" + text +
                          "'");
    }
}

/// Normalizes a raw value to its canonical text form, or throws ConfigError.
inline std::string canonicalize_value(const KeyDef& def,
                                      const std::string& raw) {
    const std::string key(def.name);
    switch (def.type) {
    case KeyType::UInt:
        return std::to_string(parse_u64(key, raw));
    case KeyType::Float:
        return format_double(parse_double(key, raw));
    case KeyType::FloatOrDefault:
        if (raw == "default") {
            return raw;
        }
        return format_double(parse_double(key, raw));
    case KeyType::Enum: {
        std::string lowered = raw;
        for (char& c : lowered) {
            c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        }
        for (std::string_view choice : def.choices) {
            if (lowered == choice) {
                return lowered;
            }
        }
        std::string expected;
        for (std::string_view choice : def.choices) {
            expected += expected.empty() ? "" : ", ";
            expected += choice;
        }
        throw ConfigError("key '" + key + "': '" + raw +
                          "' is not one of: " + expected);
    }
    }
    throw std::logic_error("canonicalize_value: unhandled key type");
}

inline std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::string piece;
    std::stringstream stream(text);
    while (std::getline(stream, piece, ',')) {
        const auto begin = piece.find_first_not_of(" \t");
        const auto end = piece.find_last_not_of(" \t");
        out.push_back(begin == std::string::npos
                          ? std::string{}
                          : piece.substr(begin, end - begin + 1));
    }
    if (out.empty()) {
        out.emplace_back();
    }
    return out;
}

inline std::string trim(std::string_view text) {
    const auto begin = text.find_first_not_of(" \t\r\n");
    if (begin == std::string_view::npos) {
        return {};
    }
    const auto end = text.find_last_not_of(" \t\r\n");
    return std::string(text.substr(begin, end - begin + 1));
}

} // namespace detail

// ============================================================================
// Experiment specification
// ============================================================================

/// A fully resolved experiment description: which experiment, and one or
/// more canonical values per key. Keys with several values denote a sweep
/// that expands into the cross-product of runs. Serializes to the flat
/// key = value document embedded in every output file.
struct ExperimentSpec {
    std::string experiment;
    std::map<std::string, std::vector<std::string>> values;

    friend bool operator==(const ExperimentSpec&,
                           const ExperimentSpec&) = default;

    const std::vector<std::string>& at(const std::string& key) const {
        return values.at(key);
    }

    Seed seed() const {
        return Seed{detail::parse_u64("seed", values.at("seed").front())};
    }
};

/// One expanded sweep point: a single canonical value per key.
using RunPoint = std::map<std::string, std::string>;

namespace detail {

/// Validates raw key/value pairs against the schema, fills defaults,
/// canonicalizes every value. `seen` keys must be unique already.
inline ExperimentSpec resolve_spec(
    const std::string& experiment,
    const std::vector<std::pair<std::string, std::string>>& entries) {
    const auto& schema = key_schema(experiment);
    ExperimentSpec spec;
    spec.experiment = experiment;
    for (const auto& [key, raw] : entries) {
        const KeyDef* def = nullptr;
        for (const KeyDef& candidate : schema) {
            if (candidate.name == key) {
                def = &candidate;
                break;
            }
        }
        if (def == nullptr) {
            throw ConfigError("unknown key '" + key + "' for experiment '" +
                              experiment + "'");
        }
        if (spec.values.contains(key)) {
            throw ConfigError("duplicate key '" + key + "'");
        }
        std::vector<std::string> canonical;
        for (const std::string& piece : split_list(raw)) {
            if (piece.empty()) {
                throw ConfigError("key '" + key + "': empty value");
            }
            canonical.push_back(canonicalize_value(*def, piece));
        }
        if (key == "seed" && canonical.size() > 1) {
            throw ConfigError("key 'seed' cannot be swept");
        }
        spec.values.emplace(key, std::move(canonical));
    }
    for (const KeyDef& def : schema) {
        if (!spec.values.contains(std::string(def.name))) {
            spec.values.emplace(std::string(def.name),
                                std::vector<std::string>{
                                    std::string(def.default_value)});
        }
    }
    return spec;
}

} // namespace detail

/// Cross-product expansion of a sweep in canonical order: keys iterate in
/// schema order, values in their listed order, row-major. A spec without
/// lists expands to exactly one point.
inline std::vector<RunPoint> expand_runs(const ExperimentSpec& spec) {
    const auto& schema = detail::key_schema(spec.experiment);
    std::vector<RunPoint> points{RunPoint{}};
    for (const auto& def : schema) {
        const std::string key(def.name);
        const auto& options = spec.values.at(key);
        std::vector<RunPoint> next;
        next.reserve(points.size() * options.size());
        for (const RunPoint& base : points) {
            for (const std::string& value : options) {
                RunPoint point = base;
                point.emplace(key, value);
                next.push_back(std::move(point));
            }
        }
        points = std::move(next);
    }
    return points;
}

// ============================================================================
// Building module configs from run points
// ============================================================================

namespace detail {

inline MachineKind parse_machine(const std::string& name) {
    if (name == "m0") return MachineKind::M0;
    if (name == "m1") return MachineKind::M1;
    if (name == "m2") return MachineKind::M2;
    if (name == "m3") return MachineKind::M3;
    throw ConfigError("unknown machine '" + name + "'");
}

inline Policy parse_policy(const std::string& name) {
    if (name == "m0") return Policy::M0;
    if (name == "m3") return Policy::M3;
    throw ConfigError("unknown policy '" + name + "'");
}

inline std::uint32_t point_u32(const RunPoint& point, const std::string& key) {
    const std::uint64_t wide = parse_u64(key, point.at(key));
    if (wide > 0xffffffffULL) {
        throw ConfigError("key '" + key + "': value too large");
    }
    return static_cast<std::uint32_t>(wide);
}

inline GameConfig build_game_config(const RunPoint& point, Seed seed) {
    GameConfig config;
    config.machine = parse_machine(point.at("machine"));
    config.s = point_u32(point, "s");
    const std::uint32_t k = point_u32(point, "k");
    if (k == 0) {
        throw ConfigError("key 'k': capacity must be >= 1");
    }
    config.k = Capacity{k};
    config.universe_size = point_u32(point, "universe");
    config.trials = parse_u64("trials", point.at("trials"));
    config.master_seed = seed;
    try {
        config.validate();
    } catch (const std::invalid_argument& error) {
        throw ConfigError(error.what());
    }
    return config;
}

inline Adversary build_adversary(const GameConfig& config,
                                 const std::string& name) {
    try {
        if (name == "cardinality") {
            return make_cardinality_adversary(config);
        }
        if (name == "bayes") {
            return make_bayes_adversary(config);
        }
        if (name == "bayes_paper") {
            return make_paper_bayes_adversary(config);
        }
    } catch (const std::invalid_argument& error) {
        throw ConfigError(error.what());
    }
    throw ConfigError("unknown adversary '" + name + "'");
}

struct OracleRequest {
    MachineKind machine = MachineKind::M2;
    std::uint32_t s = 1;
    Capacity k{1};
    std::uint32_t universe = 16;
    bool paper_source = false;
};

inline OracleRequest build_oracle_request(const RunPoint& point) {
    OracleRequest request;
    request.machine = parse_machine(point.at("machine"));
    request.s = point_u32(point, "s");
    const std::uint32_t k = point_u32(point, "k");
    if (k == 0) {
        throw ConfigError("key 'k': capacity must be >= 1");
    }
    request.k = Capacity{k};
    request.universe = point_u32(point, "universe");
    request.paper_source = point.at("source") == "paper";
    if (request.paper_source && request.machine != MachineKind::M2) {
        throw ConfigError("source 'paper' provides the published closed form "
                          "and requires machine = m2");
    }
    if (request.s >= request.universe) {
        throw ConfigError("key 's': must be < universe (the hidden caller is "
                          "drawn from outside S)");
    }
    if (!request.paper_source && request.s > 10) {
        throw ConfigError("key 's': exact enumeration is bounded at s <= 10");
    }
    return request;
}

inline SimConfig build_sim_config(const RunPoint& point, Seed seed) {
    SimConfig config;
    config.policy = parse_policy(point.at("policy"));
    config.id_scope = point.at("scope") == "all" ? IdMapScope::AllUsers
                                                 : IdMapScope::Friends;
    config.n_users = point_u32(point, "n_users");
    const std::uint32_t n_friends = point_u32(point, "friends");
    const std::uint32_t n_compromised = point_u32(point, "compromised");
    if (n_friends < n_compromised + 1) {
        throw ConfigError(
            "key 'friends': must cover the honest partner plus every "
            "compromised friend");
    }
    if (n_friends + 1 > config.n_users) {
        throw ConfigError("key 'friends': target needs friends + 1 <= n_users");
    }
    const std::uint32_t capacity = point_u32(point, "capacity");
    if (capacity == 0) {
        throw ConfigError("key 'capacity': must be >= 1");
    }
    config.capacity = Capacity{capacity};
    config.target = 0;
    config.honest_partner = 1;
    for (std::uint32_t f = 1; f <= n_friends; ++f) {
        config.friendships.emplace_back(0, f);
    }
    for (std::uint32_t c = 2; c < 2 + n_compromised; ++c) {
        config.compromised.insert(c);
    }
    config.rounds = point_u32(point, "rounds");
    config.online_p = parse_double("p", point.at("p"));
    const std::string& partner_p = point.at("partner_p");
    if (partner_p != "default") {
        config.partner_online_p = parse_double("partner_p", partner_p);
    }
    config.probe_period = point_u32(point, "probe_period");
    config.master_seed = seed;
    try {
        config.validate();
    } catch (const std::invalid_argument& error) {
        throw ConfigError(error.what());
    }
    return config;
}

struct LatencyRequest {
    Policy policy = Policy::M3;
    std::uint32_t universe = 8;
    Capacity k{2};
    std::uint64_t trials = 100000;
    std::uint64_t horizon = 8;
};

inline LatencyRequest build_latency_request(const RunPoint& point) {
    LatencyRequest request;
    request.policy = parse_policy(point.at("policy"));
    request.universe = point_u32(point, "universe");
    if (request.universe == 0) {
        throw ConfigError("key 'universe': must be >= 1");
    }
    const std::uint32_t k = point_u32(point, "k");
    if (k == 0) {
        throw ConfigError("key 'k': capacity must be >= 1");
    }
    if (request.policy == Policy::M3 && k > request.universe) {
        throw ConfigError("key 'k': must be <= universe for policy m3");
    }
    request.k = Capacity{k};
    request.trials = parse_u64("trials", point.at("trials"));
    if (request.trials == 0) {
        throw ConfigError("key 'trials': must be >= 1");
    }
    const std::uint64_t horizon = parse_u64("horizon", point.at("horizon"));
    request.horizon = horizon == 0 ? request.universe : horizon;
    return request;
}

/// Dry-runs every builder so a returned spec is guaranteed executable.
inline void validate_spec(const ExperimentSpec& spec) {
    const Seed seed = spec.seed();
    for (const RunPoint& point : expand_runs(spec)) {
        if (spec.experiment == "game") {
            const GameConfig config = build_game_config(point, seed);
            build_adversary(config, point.at("adversary"));
        } else if (spec.experiment == "oracle") {
            build_oracle_request(point);
        } else if (spec.experiment == "sim") {
            build_sim_config(point, seed);
        } else if (spec.experiment == "latency") {
            build_latency_request(point);
        }
    }
    if (spec.experiment == "oracle" && expand_runs(spec).size() != 1) {
        throw ConfigError("experiment 'oracle' emits a pmf table and does not "
                          "sweep; use one value per key");
    }
}

} // namespace detail

// ============================================================================
// Parsing and serialization
// ============================================================================

/// Canonical flat document: experiment first, then every key in schema
/// order with canonical values, seed always explicit.
inline std::string serialize_spec(const ExperimentSpec& spec) {
    std::string out = "experiment = " + spec.experiment + "\n";
    for (const auto& def : detail::key_schema(spec.experiment)) {
        const std::string key(def.name);
        out += key + " = ";
        const auto& values = spec.values.at(key);
        for (std::size_t i = 0; i < values.size(); ++i) {
            out += (i ? "," : "") + values[i];
        }
        out += "\n";
    }
    return out;
}

inline nlohmann::json spec_to_json(const ExperimentSpec& spec) {
    nlohmann::json j;
    j["experiment"] = spec.experiment;
    for (const auto& def : detail::key_schema(spec.experiment)) {
        const std::string key(def.name);
        const auto& values = spec.values.at(key);
        std::string joined;
        for (std::size_t i = 0; i < values.size(); ++i) {
            joined += (i ? "," : "") + values[i];
        }
        j[key] = joined;
    }
    return j;
}

/// Parses an experiment description from:
///   - a flat key = value document ('#' starts a comment),
///   - a previous CSV output (the spec block between '# spec-begin' and
///     '# spec-end' is read back), or
///   - a previous JSON output (the "spec" object is read back).
/// Unknown keys, duplicates, malformed values, and parameter combinations
/// the target module would reject all raise ConfigError. A document without
/// an experiment key takes fallback_experiment when one is given (the CLI
/// passes its subcommand).
inline ExperimentSpec parse_config(
    const std::string& text,
    std::optional<std::string> fallback_experiment = std::nullopt) {
    std::vector<std::pair<std::string, std::string>> entries;
    std::optional<std::string> experiment;

    const auto consume_line = [&](const std::string& line) {
        const std::string stripped = detail::trim(line);
        if (stripped.empty() || stripped.front() == '#') {
            return;
        }
        const auto eq = stripped.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("malformed line (expected key = value): '" +
                              stripped + "'");
        }
        const std::string key = detail::trim(stripped.substr(0, eq));
        const std::string value = detail::trim(stripped.substr(eq + 1));
        if (key.empty()) {
            throw ConfigError("malformed line (empty key): '" + stripped + "'");
        }
        if (key == "experiment") {
            if (experiment) {
                throw ConfigError("duplicate key 'experiment'");
            }
            experiment = value;
            return;
        }
        entries.emplace_back(key, value);
    };

    const std::string body = detail::trim(text);
    if (!body.empty() && body.front() == '{') {
        nlohmann::json j = nlohmann::json::parse(body, nullptr, false);
        if (j.is_discarded()) {
            throw ConfigError("malformed JSON config");
        }
        const nlohmann::json& spec_obj = j.contains("spec") ? j["spec"] : j;
        if (!spec_obj.is_object()) {
            throw ConfigError("JSON config: 'spec' must be an object");
        }
        for (const auto& [key, value] : spec_obj.items()) {
            const std::string text_value =
                value.is_string() ? value.get<std::string>() : value.dump();
            if (key == "experiment") {
                experiment = text_value;
            } else {
                entries.emplace_back(key, text_value);
            }
        }
    } else if (text.find("# spec-begin") != std::string::npos) {
        // Re-run from a CSV artifact: read only the fenced block.
        std::stringstream stream(text);
        std::string line;
        bool inside = false;
        while (std::getline(stream, line)) {
            const std::string stripped = detail::trim(line);
            if (stripped == "# spec-begin") {
                inside = true;
                continue;
            }
            if (stripped == "# spec-end") {
                break;
            }
            if (inside && stripped.rfind("# ", 0) == 0) {
                consume_line(stripped.substr(2));
            }
        }
    } else {
        std::stringstream stream(text);
        std::string line;
        while (std::getline(stream, line)) {
            consume_line(line);
        }
    }

    if (!experiment) {
        experiment = fallback_experiment;
    }
    if (!experiment) {
        throw ConfigError("missing required key 'experiment'");
    }
    if (fallback_experiment && *experiment != *fallback_experiment) {
        throw ConfigError("config targets experiment '" + *experiment +
                          "' but '" + *fallback_experiment + "' was requested");
    }
    // Duplicate detection happens in resolve_spec (keyed insert).
    ExperimentSpec spec = detail::resolve_spec(*experiment, entries);
    detail::validate_spec(spec);
    return spec;
}

// ============================================================================
// Execution
// ============================================================================

/// Table-shaped outcome of an experiment. `points` aligns with `rows` for
/// the sweeping experiments; the oracle emits its pmf table from one point.
struct ExperimentResult {
    ExperimentSpec spec;
    std::vector<std::string> columns;
    std::vector<std::vector<nlohmann::json>> rows;
    std::vector<RunPoint> points;
    nlohmann::json details = nlohmann::json::object();
};

namespace detail {

inline std::vector<nlohmann::json> run_game_point(const RunPoint& point,
                                                  Seed seed) {
    const GameConfig config = build_game_config(point, seed);
    const Adversary adversary = build_adversary(config, point.at("adversary"));
    const AdvantageEstimate est = run_game(config, adversary);
    return {point.at("machine"), point.at("adversary"), config.s,
            config.k.value(), config.universe_size, config.trials,
            est.correct_rate, est.advantage, est.ci_low, est.ci_high};
}

inline std::vector<nlohmann::json> run_sim_point(const RunPoint& point,
                                                 Seed seed,
                                                 nlohmann::json* records_out) {
    const SimConfig config = build_sim_config(point, seed);
    const std::uint64_t trials = parse_u64("trials", point.at("trials"));
    const AttackSummary summary = run_attack_trials(config, trials);

    // Latency cost of the policy for this topology, from the exact cyclic
    // schedule (M0 answers immediately).
    const std::uint32_t universe = config.id_scope == IdMapScope::AllUsers
                                       ? config.n_users
                                       : static_cast<std::uint32_t>(
                                             config.friends_of(config.target).size());
    const LatencyStats latency =
        dial_latency_exact(config.policy, universe, config.capacity);

    if (records_out != nullptr) {
        nlohmann::json records = nlohmann::json::array();
        for (const AttackTrialRecord& r : summary.trials) {
            records.push_back({{"trial", r.trial},
                               {"busy_rounds", r.busy_rounds},
                               {"remaining", r.remaining},
                               {"success", r.success}});
        }
        *records_out = std::move(records);
    }
    return {point.at("policy"), config.n_users, config.online_p,
            config.rounds, summary.success_rate, latency.mean};
}

inline std::vector<nlohmann::json> run_latency_point(const RunPoint& point,
                                                     Seed seed) {
    const LatencyRequest request = build_latency_request(point);
    const LatencyStats stats = measure_dial_latency(
        request.policy, request.universe, request.k, request.trials,
        derive_seed(seed, "latency", 0));
    const double never_aligned =
        request.policy == Policy::M3
            ? never_aligned_fraction(request.universe, request.k,
                                     request.horizon, request.trials,
                                     derive_seed(seed, "align", 0))
            : 0.0;
    return {point.at("policy"), request.universe, request.k.value(),
            request.trials, stats.mean, stats.max, never_aligned};
}

inline ExperimentResult execute_oracle(const ExperimentSpec& spec) {
    const RunPoint point = expand_runs(spec).front();
    const OracleRequest request = build_oracle_request(point);
    const Pmf pmf0 =
        request.paper_source
            ? m2_paper_pmf(request.k, false)
            : exact_pmf(request.machine, request.s, request.k, false,
                        request.universe);
    const Pmf pmf1 =
        request.paper_source
            ? m2_paper_pmf(request.k, true)
            : exact_pmf(request.machine, request.s, request.k, true,
                        request.universe);

    ExperimentResult result;
    result.spec = spec;
    result.columns = {"x", "mass_b0", "mass_b1"};
    const std::size_t top = std::max(pmf0.max_cardinality(),
                                     pmf1.max_cardinality());
    for (std::size_t x = 0; x <= top; ++x) {
        result.rows.push_back({x, pmf0(x), pmf1(x)});
    }
    result.points.assign(result.rows.size(), point);
    const double tv = total_variation(pmf0, pmf1);
    result.details["tv"] = tv;
    result.details["optimal_advantage"] = tv / 2;
    return result;
}

} // namespace detail

/// Runs every sweep point. Points are independent; with parallel > 1 they
/// execute on worker threads, but rows always land in canonical expansion
/// order, so the output never depends on scheduling.
inline ExperimentResult execute(const ExperimentSpec& spec,
                                unsigned parallel = 1) {
    detail::validate_spec(spec);
    if (spec.experiment == "oracle") {
        return detail::execute_oracle(spec);
    }

    ExperimentResult result;
    result.spec = spec;
    if (spec.experiment == "game") {
        result.columns = {"machine", "adversary", "s",
                          "k", "universe", "trials",
                          "correct_rate", "advantage", "ci_low",
                          "ci_high"};
    } else if (spec.experiment == "sim") {
        result.columns = {"policy", "n_users", "p",
                          "rounds", "success_rate", "mean_latency"};
    } else {
        result.columns = {"policy", "universe", "k",
                          "trials", "mean_wait", "max_wait",
                          "never_aligned_fraction"};
    }

    result.points = expand_runs(spec);
    const Seed seed = spec.seed();
    const std::size_t n = result.points.size();
    result.rows.assign(n, {});
    std::vector<nlohmann::json> sim_records(n);

    const auto run_one = [&](std::size_t i) {
        const RunPoint& point = result.points[i];
        if (spec.experiment == "game") {
            result.rows[i] = detail::run_game_point(point, seed);
        } else if (spec.experiment == "sim") {
            result.rows[i] = detail::run_sim_point(point, seed, &sim_records[i]);
        } else {
            result.rows[i] = detail::run_latency_point(point, seed);
        }
    };

    const unsigned workers =
        std::max(1u, std::min<unsigned>(parallel, static_cast<unsigned>(n)));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) {
            run_one(i);
        }
    } else {
        std::atomic<std::size_t> next{0};
        std::exception_ptr failure;
        std::mutex failure_mutex;
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (unsigned w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (;;) {
                    const std::size_t i = next.fetch_add(1);
                    if (i >= n) {
                        return;
                    }
                    try {
                        run_one(i);
                    } catch (...) {
                        const std::lock_guard<std::mutex> lock(failure_mutex);
                        if (!failure) {
                            failure = std::current_exception();
                        }
                        return;
                    }
                }
            });
        }
        for (std::thread& t : pool) {
            t.join();
        }
        if (failure) {
            std::rethrow_exception(failure);
        }
    }

    if (spec.experiment == "sim") {
        nlohmann::json runs = nlohmann::json::array();
        for (std::size_t i = 0; i < n; ++i) {
            runs.push_back({{"point", result.points[i]},
                            {"trial_records", sim_records[i]}});
        }
        result.details["runs"] = std::move(runs);
    }
    return result;
}

// ============================================================================
// Output rendering
// ============================================================================

namespace detail {

inline std::string csv_quote(const std::string& field) {
    if (field.find_first_of(",\"\r\n") == std::string::npos) {
        return field;
    }
    std::string quoted = "\"";
    for (char c : field) {
        quoted += c;
        if (c == '"') {
            quoted += '"';
        }
    }
    quoted += '"';
    return quoted;
}

inline std::string csv_cell(const nlohmann::json& value) {
    if (value.is_string()) {
        return csv_quote(value.get<std::string>());
    }
    if (value.is_null()) {
        return {};
    }
    return value.dump();
}

inline std::string spec_comment_block(const ExperimentSpec& spec) {
    std::string block = "# spec-begin\n";
    std::stringstream stream(serialize_spec(spec));
    std::string line;
    while (std::getline(stream, line)) {
        block += "# " + line + "\n";
    }
    block += "# spec-end\n";
    return block;
}

} // namespace detail

/// Primary CSV artifact: fenced provenance block, header row, data rows.
inline std::string render_csv(const ExperimentResult& result) {
    std::string out = detail::spec_comment_block(result.spec);
    for (std::size_t i = 0; i < result.columns.size(); ++i) {
        out += (i ? "," : "") + detail::csv_quote(result.columns[i]);
    }
    out += "\n";
    for (const auto& row : result.rows) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            out += (i ? "," : "") + detail::csv_cell(row[i]);
        }
        out += "\n";
    }
    return out;
}

/// Primary JSON artifact: { "spec": ..., "columns": ..., "results": [...] }
/// plus experiment-specific details (oracle summary, sim trial records).
inline std::string render_json(const ExperimentResult& result) {
    nlohmann::json j;
    j["spec"] = spec_to_json(result.spec);
    j["columns"] = result.columns;
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : result.rows) {
        nlohmann::json obj;
        for (std::size_t i = 0; i < row.size(); ++i) {
            obj[result.columns[i]] = row[i];
        }
        rows.push_back(std::move(obj));
    }
    j["results"] = std::move(rows);
    for (const auto& [key, value] : result.details.items()) {
        j[key] = value;
    }
    return j.dump(2) + "\n";
}

/// Long-format plot table (series, x, y, ci_low, ci_high). x is the first
/// swept key; additional swept keys fold into the series label. Confidence
/// columns stay empty where an experiment reports none.
inline std::string emit_plot_data(const ExperimentResult& result) {
    std::string out = "series,x,y,ci_low,ci_high\n";
    const auto& spec = result.spec;

    if (spec.experiment == "oracle") {
        for (const auto& row : result.rows) {
            out += "mass_b0," + row[0].dump() + "," + row[1].dump() + ",,\n";
        }
        for (const auto& row : result.rows) {
            out += "mass_b1," + row[0].dump() + "," + row[2].dump() + ",,\n";
        }
        return out;
    }

    std::vector<std::string> swept;
    for (const auto& def : detail::key_schema(spec.experiment)) {
        const std::string key(def.name);
        if (spec.values.at(key).size() > 1) {
            swept.push_back(key);
        }
    }

    const auto column_index = [&](const std::string& name) {
        for (std::size_t i = 0; i < result.columns.size(); ++i) {
            if (result.columns[i] == name) {
                return i;
            }
        }
        throw std::logic_error("emit_plot_data: missing column " + name);
    };

    std::size_t y_col = 0;
    std::optional<std::size_t> lo_col;
    std::optional<std::size_t> hi_col;
    std::string base_series;
    if (spec.experiment == "game") {
        y_col = column_index("advantage");
        lo_col = column_index("ci_low");
        hi_col = column_index("ci_high");
    } else if (spec.experiment == "sim") {
        y_col = column_index("success_rate");
    } else {
        y_col = column_index("mean_wait");
    }

    for (std::size_t i = 0; i < result.rows.size(); ++i) {
        const RunPoint& point = result.points[i];
        std::string series;
        if (spec.experiment == "game") {
            series = point.at("machine") + "/" + point.at("adversary");
        } else {
            series = point.at("policy");
        }
        for (std::size_t sk = 1; sk < swept.size(); ++sk) {
            series += "," + swept[sk] + "=" + point.at(swept[sk]);
        }
        const std::string x =
            swept.empty() ? std::to_string(i) : point.at(swept.front());
        out += detail::csv_quote(series) + "," + x + "," +
               result.rows[i][y_col].dump() + ",";
        out += lo_col ? result.rows[i][*lo_col].dump() : "";
        out += ",";
        out += hi_col ? result.rows[i][*hi_col].dump() : "";
        out += "\n";
    }
    return out;
}

// ============================================================================
// Artifact writing
// ============================================================================

/// Write-then-rename: a crashed or interrupted run leaves either the old
/// file or nothing, never a truncated artifact.
inline void atomic_write_file(const std::filesystem::path& path,
                              const std::string& content) {
    namespace fs = std::filesystem;
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw std::runtime_error("cannot open " + tmp.string() +
                                     " for writing");
        }
        out.write(content.data(),
                  static_cast<std::streamsize>(content.size()));
        if (!out.flush()) {
            std::error_code ec;
            fs::remove(tmp, ec);
            throw std::runtime_error("write failed for " + tmp.string());
        }
    }
    fs::rename(tmp, path);
}

struct RunRequest {
    ExperimentSpec spec;
    std::filesystem::path out;
    std::string format = "csv"; // csv | json
    std::optional<std::filesystem::path> plot_out;
    unsigned parallel = 1;
};

/// Executes the spec and writes every artifact atomically. The oracle's CSV
/// form adds a <out>.summary.json with the tv / optimal-advantage numbers.
/// Returns the paths written.
inline std::vector<std::filesystem::path> run_experiment(
    const RunRequest& request) {
    if (request.format != "csv" && request.format != "json") {
        throw ConfigError("format must be csv or json");
    }
    const ExperimentResult result = execute(request.spec, request.parallel);

    std::vector<std::filesystem::path> written;
    if (request.format == "csv") {
        atomic_write_file(request.out, render_csv(result));
        written.push_back(request.out);
        if (request.spec.experiment == "oracle") {
            nlohmann::json summary;
            summary["spec"] = spec_to_json(result.spec);
            summary["tv"] = result.details["tv"];
            summary["optimal_advantage"] = result.details["optimal_advantage"];
            std::filesystem::path side = request.out;
            side.replace_extension(".summary.json");
            atomic_write_file(side, summary.dump(2) + "\n");
            written.push_back(side);
        }
    } else {
        atomic_write_file(request.out, render_json(result));
        written.push_back(request.out);
    }
    if (request.plot_out) {
        atomic_write_file(*request.plot_out, emit_plot_data(result));
        written.push_back(*request.plot_out);
    }
    return written;
}

} // namespace callcenter
