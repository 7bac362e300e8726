#include "mcrc/error.hpp"
#include "mcrc/run.hpp"

#include <CLI11.hpp>

#include <functional>
#include <iostream>
#include <map>

int main(int argc, char** argv) {
    CLI::App app{"Generate and evaluate multiple-choice reading-comprehension items"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "mcrc 0.1.0");

    std::string config_path;
    std::optional<int> max_parallel;
    std::optional<std::string> run_dir;

    using Command = std::function<int(const mcrc::RunConfig&, std::ostream&)>;
    const std::vector<std::tuple<std::string, std::string, Command>> commands = {
        {"generate", "Generate items for every text with each configured generator", mcrc::cmd_generate},
        {"evaluate", "Collect LLM responses in both conditions", mcrc::cmd_evaluate},
        {"calibrate", "Fit ratio thresholds on the calibration corpus", mcrc::cmd_calibrate},
        {"report", "Write accuracy, informativity, agreement and rating summaries", mcrc::cmd_report},
        {"serve", "Run the annotation service", mcrc::cmd_serve},
        {"export", "Export human responses and ratings from the annotation store", mcrc::cmd_export},
    };
    std::map<CLI::App*, Command> handlers;
    for (const auto& [name, help, fn] : commands) {
        auto* sub = app.add_subcommand(name, help);
        sub->add_option("-c,--config", config_path, "Run configuration (JSON)")->required();
        sub->add_option("-j,--max-parallel", max_parallel, "Cap on concurrent backend calls")->check(CLI::PositiveNumber);
        sub->add_option("--run-dir", run_dir, "Override the run directory");
        handlers.emplace(sub, fn);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        auto config = mcrc::load_run_config(config_path);
        if (max_parallel) config.max_parallel = *max_parallel;
        if (run_dir) config.run_dir = *run_dir;
        for (auto* sub : app.get_subcommands())
            if (auto it = handlers.find(sub); it != handlers.end()) return it->second(config, std::cerr);
    } catch (const mcrc::Error& e) {
        std::cerr << "error (" << mcrc::to_string(e.code()) << "): " << e.what() << "\n";
        return mcrc::exit_code_for(e.code());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
