// Command-line front end for the call-center privacy toolkit: reads a flat
// key = value experiment config (or a previous output artifact), runs it,
// and writes CSV/JSON results with the resolved spec embedded.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"

#include "callcenter/experiment.hpp"

namespace {

struct CommonOptions {
    std::string config_path;
    std::string out_path;
    std::string format = "csv";
    std::optional<std::uint64_t> seed;
    std::optional<std::string> plot_out;
    unsigned parallel = 1;
};

void add_common_options(CLI::App& cmd, CommonOptions& opts) {
    cmd.add_option("--config", opts.config_path,
                   "experiment config file, or a previous CSV/JSON output to "
                   "re-run from its embedded spec")
        ->required()
        ->check(CLI::ExistingFile);
    cmd.add_option("--out", opts.out_path, "output artifact path")->required();
    cmd.add_option("--format", opts.format, "output format")
        ->check(CLI::IsMember({"csv", "json"}))
        ->capture_default_str();
    cmd.add_option("--seed", opts.seed, "override the config's master seed");
    cmd.add_option("--plot-out", opts.plot_out,
                   "also write a long-format plot CSV "
                   "(series,x,y,ci_low,ci_high)");
    cmd.add_option("--parallel", opts.parallel,
                   "worker threads for sweep points")
        ->check(CLI::Range(1u, 256u))
        ->capture_default_str();
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw callcenter::ConfigError("cannot read config file: " + path);
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

int run(const std::string& experiment, const CommonOptions& opts) {
    callcenter::ExperimentSpec spec =
        callcenter::parse_config(read_file(opts.config_path), experiment);
    if (opts.seed) {
        spec.values["seed"] = {std::to_string(*opts.seed)};
    }

    callcenter::RunRequest request;
    request.spec = std::move(spec);
    request.out = opts.out_path;
    request.format = opts.format;
    request.parallel = opts.parallel;
    if (opts.plot_out) {
        request.plot_out = *opts.plot_out;
    }

    for (const auto& path : callcenter::run_experiment(request)) {
        std::cout << "wrote " << path.string() << "\n";
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"exclusive call-center security game and MPM attack toolkit"};
    app.require_subcommand(1);

    CommonOptions opts;
    app.add_subcommand("game",
                       "Monte Carlo distinguishing game: machine vs adversary");
    app.add_subcommand("oracle",
                       "exact output-cardinality pmfs and adversary calibration");
    app.add_subcommand("sim",
                       "round-based MPM simulation of the compromised-friend "
                       "attack");
    app.add_subcommand("latency", "dial-latency cost of an answering policy");
    for (CLI::App* sub : app.get_subcommands({})) {
        add_common_options(*sub, opts);
    }

    CLI11_PARSE(app, argc, argv);

    try {
        return run(app.get_subcommands().front()->get_name(), opts);
    } catch (const callcenter::ConfigError& error) {
        std::cerr << "config error: " << error.what() << "\n";
        return 2;
    } catch (const std::exception& error) {
        std::cerr << "error: " << error.what() << "\n";
        return 3;
    }
}
