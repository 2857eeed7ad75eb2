// Command-line front end: run Monte-Carlo sweeps, probe the probability
// pipeline, or validate an experiment config. Exit codes: 0 success,
// 1 runtime failure (unwritable output, unsound config), 2 usage error.

#include <cstdio>
#include <cstring>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "psbss/harness.hpp"

namespace {

constexpr const char* kUsage =
    "usage: psbss <command> [options]\n"
    "\n"
    "commands:\n"
    "  run       run the configured sweep, one CSV per invocation\n"
    "  probe     emit the prediction/sensing probability table\n"
    "  validate  check a config's invariants without solving anything\n"
    "\n"
    "options:\n"
    "  --config <file>   experiment config (required)\n"
    "  --out <dir>       output directory (default: current directory)\n"
    "  --seed <n>        override the config's seed\n"
    "  --mode <m[,m..]>  restrict models: psbss, underlay, opportunistic\n";

struct Args {
    std::string command;
    std::string config;
    std::string out = ".";
    std::optional<std::uint64_t> seed;
    std::optional<std::vector<psbss::Model>> models;
};

int usage_error(const std::string& msg) {
    std::cerr << "psbss: " << msg << "\n\n" << kUsage;
    return 2;
}

std::optional<Args> parse_args(int argc, char** argv, int& rc) {
    Args a;
    if (argc < 2) {
        rc = usage_error("missing command");
        return std::nullopt;
    }
    a.command = argv[1];
    if (a.command == "-h" || a.command == "--help") {
        std::cout << kUsage;
        rc = 0;
        return std::nullopt;
    }
    if (a.command != "run" && a.command != "probe" && a.command != "validate") {
        rc = usage_error("unknown command: " + a.command);
        return std::nullopt;
    }
    for (int i = 2; i < argc; ++i) {
        const std::string flag = argv[i];
        auto value = [&]() -> const char* {
            return i + 1 < argc ? argv[++i] : nullptr;
        };
        if (flag == "--config") {
            const char* v = value();
            if (!v) { rc = usage_error("--config needs a file"); return std::nullopt; }
            a.config = v;
        } else if (flag == "--out") {
            const char* v = value();
            if (!v) { rc = usage_error("--out needs a directory"); return std::nullopt; }
            a.out = v;
        } else if (flag == "--seed") {
            const char* v = value();
            char* end = nullptr;
            const unsigned long long s = v ? std::strtoull(v, &end, 10) : 0;
            if (!v || *v == '\0' || *end != '\0') {
                rc = usage_error("--seed needs an integer");
                return std::nullopt;
            }
            a.seed = s;
        } else if (flag == "--mode") {
            const char* v = value();
            if (!v) { rc = usage_error("--mode needs a model list"); return std::nullopt; }
            std::vector<psbss::Model> models;
            std::istringstream is(v);
            for (std::string tok; std::getline(is, tok, ',');) {
                try {
                    models.push_back(psbss::model_from_string(tok));
                } catch (const std::exception& e) {
                    rc = usage_error(e.what());
                    return std::nullopt;
                }
            }
            if (models.empty()) { rc = usage_error("--mode needs a model list"); return std::nullopt; }
            a.models = std::move(models);
        } else {
            rc = usage_error("unknown flag: " + flag);
            return std::nullopt;
        }
    }
    if (a.config.empty()) {
        rc = usage_error("--config is required");
        return std::nullopt;
    }
    return a;
}

int write_file(const std::string& path, const std::string& body) {
    std::ofstream f(path, std::ios::binary);
    f << body;
    f.flush();
    if (!f) {
        std::cerr << "psbss: cannot write " << path << "\n";
        return 1;
    }
    std::cout << path << "\n";
    return 0;
}

int cmd_run(const Args& a, const psbss::ExperimentConfig& cfg) {
    const psbss::SweepResult r = psbss::run_experiment(cfg);
    std::ostringstream body;
    r.write_csv(body);
    return write_file(a.out + "/sweep_" + psbss::to_string(cfg.axis) + ".csv",
                      body.str());
}

int cmd_probe(const Args& a, const psbss::ExperimentConfig& cfg) {
    std::ostringstream body;
    psbss::write_probe_csv(body, cfg);
    return write_file(a.out + "/probe.csv", body.str());
}

int cmd_validate(const psbss::ExperimentConfig& cfg) {
    const auto findings = psbss::validate_experiment(cfg);
    for (const auto& f : findings) std::cerr << "psbss: " << f << "\n";
    if (findings.empty()) std::cout << "config ok\n";
    return findings.empty() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    int rc = 0;
    const auto args = parse_args(argc, argv, rc);
    if (!args) return rc;

    psbss::ExperimentConfig cfg;
    try {
        cfg = psbss::parse_config_file(args->config);
        if (args->seed) cfg.seed = *args->seed;
        if (args->models) cfg.models = *args->models;
        cfg.validate();
    } catch (const std::exception& e) {
        return usage_error(e.what());
    }

    try {
        if (args->command == "run") return cmd_run(*args, cfg);
        if (args->command == "probe") return cmd_probe(*args, cfg);
        return cmd_validate(cfg);
    } catch (const std::exception& e) {
        std::cerr << "psbss: " << e.what() << "\n";
        return 1;
    }
}
