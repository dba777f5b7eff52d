#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "qer/pipeline.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitDomain = 1;
constexpr int kExitConfig = 2;

std::filesystem::path archive_root() {
    const char* env = std::getenv("QERLAB_ARCHIVE");
    return env && *env ? std::filesystem::path(env) : std::filesystem::path("archive");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"qerlab: quantum ergodic restriction laboratory"};
    app.require_subcommand(1);
    app.fallthrough();
    std::string config_path;
    std::vector<std::string> stages;
    bool force = false;
    int jobs = 1;
    app.add_option("-c,--config", config_path, "run configuration (key = value)")->required()->check(CLI::ExistingFile);
    app.add_option("-j,--jobs", jobs, "worker threads for per-mode work")->check(CLI::PositiveNumber);
    app.add_flag("-f,--force", force, "rerun stages even when their outputs are current");
    auto* stage_opt = app.add_option("-s,--stages", stages, "stages for 'all' (comma separated)")->delimiter(',');

    const std::vector<std::pair<std::string, std::string>> commands{
        {"solve", "compute eigenmodes in the configured windows"},
        {"trace", "restrict modes to the curve (Cauchy data)"},
        {"lift", "evaluate microlocal lifts for the symbol list"},
        {"rellich", "verify the Rellich identity on the collar"},
        {"weyl", "glancing Weyl sums and glancing masses"},
        {"report", "convergence report, tables and plots"},
        {"all", "run the configured (or --stages) pipeline"}};
    for (const auto& [name, help] : commands) app.add_subcommand(name, help);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitConfig;
    }

    try {
        const auto cfg = qer::load_config(config_path);
        qer::PipelineOptions opt;
        opt.root = archive_root();
        opt.force = force;
        opt.jobs = jobs;
        const std::string cmd = app.get_subcommands().front()->get_name();
        if (cmd == "all") {
            opt.stages = stage_opt->count() ? stages : cfg.stages;
        } else {
            if (stage_opt->count()) throw qer::ConfigError("config: --stages applies only to 'all'");
            opt.stages = {cmd};
        }
        const auto outcome = qer::run_pipeline(cfg, opt, std::cerr);
        for (const auto& o : outcome) std::cout << o.stage << ": " << (o.cached ? "cached" : "done") << "\n";
        return kExitOk;
    } catch (const qer::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const qer::DomainError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitDomain;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitDomain;
    }
}
