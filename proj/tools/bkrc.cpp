// Command-line front end: simulate | run | ensemble | sweep | wout | render.

#include <bkrc/cli/commands.hpp>

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

namespace {

struct common_flags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> threads;
    std::optional<std::string> out;
    std::optional<std::string> mode;
    std::string preset = "desk";
    bool print_config = false;
};

void add_common(CLI::App* app, common_flags& f)
{
    app->add_option("--config", f.config, "JSON config file (flat namespaced keys)")->check(CLI::ExistingFile);
    app->add_option("--seed", f.seed, "base seed");
    app->add_option("--threads", f.threads, "worker threads for per-point work (0 = all cores)");
    app->add_option("--out", f.out, "output directory");
    app->add_option("--mode", f.mode, "hybrid mode")->check(CLI::IsMember({"reservoir", "ih", "oh", "fh"}));
    app->add_option("--preset", f.preset, "base preset")->check(CLI::IsMember({"desk", "paper"}));
    app->add_flag("--print-config", f.print_config, "print the resolved config and its hash, then exit");
}

/// Preset, then config file, then flags.
bkrc::cli::run_config resolve(const common_flags& f)
{
    using namespace bkrc::cli;
    run_config c = make_preset(parse_preset(f.preset));
    if (!f.config.empty()) apply_json(c, read_json_file(f.config));
    if (f.seed) c.seed = *f.seed;
    if (f.threads) c.threads = bkrc::resolve_threads(*f.threads);
    if (f.out) c.out = *f.out;
    if (f.mode) c.mode = bkrc::parse_hybrid_mode(*f.mode);
    c.validate();
    return c;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Hybrid reservoir computing with local states on the Barkley model"};
    app.require_subcommand(1);

    common_flags flags;
    const char* names[][2] = {
        {"simulate", "simulate the Barkley model and write a trajectory file"},
        {"run", "train and predict once; error curve, valid time, heatmap snapshots"},
        {"ensemble", "ensemble over modes, reservoir sizes and model errors"},
        {"sweep", "one-at-a-time hyperparameter sweep"},
        {"wout", "readout contribution study"},
        {"render", "render trajectory steps as PGM heatmaps"},
    };
    for (const auto& [name, help] : names) add_common(app.add_subcommand(name, help), flags);

    CLI11_PARSE(app, argc, argv);

    try {
        const bkrc::cli::run_config c = resolve(flags);
        if (flags.print_config) {
            std::cout << bkrc::cli::to_json(c).dump(2) << "\nconfig_hash "
                      << bkrc::cli::hash_hex(bkrc::cli::config_hash(c)) << "\n";
            return 0;
        }
        const std::string cmd = app.get_subcommands().front()->get_name();
        if (cmd == "simulate") bkrc::cli::cmd_simulate(c, std::cout);
        else if (cmd == "run") bkrc::cli::cmd_run(c, std::cout);
        else if (cmd == "ensemble") bkrc::cli::cmd_ensemble(c, std::cout);
        else if (cmd == "sweep") bkrc::cli::cmd_sweep(c, std::cout);
        else if (cmd == "wout") bkrc::cli::cmd_wout(c, std::cout);
        else if (cmd == "render") bkrc::cli::cmd_render(c, std::cout);
    } catch (const bkrc::blow_up_error& e) {
        std::cerr << "error: " << e.what() << " (step " << e.step() << ")\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
