#include "nest/commands.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
    CLI::App app{"nest: ransomware classification from encrypted behavioral traces"};
    app.require_subcommand(1);

    nest::CommandOptions opts;
    std::string config, out;
    std::uint64_t seed = 0;
    double scale = 0.0;

    auto common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config, "run configuration (JSON)")->check(CLI::ExistingFile);
        cmd->add_option("--seed", seed, "global seed (overrides the config)");
        cmd->add_option("--out", out, "output directory for this command");
        return cmd;
    };
    auto* gen = common(app.add_subcommand("gen", "generate the synthetic trace corpus"));
    gen->add_option("--scale", scale, "fraction of the full composition");
    auto* prep = common(app.add_subcommand("prep", "split, denoise and normalize"));
    prep->add_flag("--table-faithful", opts.table_faithful,
                   "skip denoising for Conti/Babuk and use per-family ranges");
    common(app.add_subcommand("train", "train the model and the baseline"));
    common(app.add_subcommand("eval", "run the evaluation suite"));
    common(app.add_subcommand("report", "emit plot-ready CSVs from an evaluation report"));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : nest::kExitInput;
    }

    CLI::App* cmd = app.get_subcommands().front();
    if (cmd->count("--config")) opts.config = config;
    if (cmd->count("--seed")) opts.seed = seed;
    if (cmd->count("--out")) opts.out = out;
    if (cmd->get_name() == "gen" && cmd->count("--scale")) opts.scale = scale;
    return nest::run_command(cmd->get_name(), opts, std::cout, std::cerr);
}
