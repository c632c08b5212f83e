#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "divst/errors.hpp"
#include "divst/experiment.hpp"

namespace {

struct CommonFlags {
    std::string config_path;
    std::vector<std::uint64_t> seeds;
    std::string out_dir;
    std::string policy;
    std::string confidence;
    double gamma = -1.0;
    bool gamma_set = false;
    int workers = 0;
    std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("--config", f.config_path, "flat key=value config file");
    cmd->add_option("--seed", f.seeds, "seed list override");
    cmd->add_option("--out", f.out_dir, "output directory override");
    cmd->add_option("--policy", f.policy, "policy override: none|threshold|curriculum|transductive");
    cmd->add_option("--confidence", f.confidence, "confidence override: tsim|softmax");
    cmd->add_option("--gamma", f.gamma, "diversity weight override")
        ->each([&f](const std::string&) { f.gamma_set = true; });
    cmd->add_option("--workers", f.workers, "concurrent cell budget");
    cmd->add_option("--set", f.sets, "extra key=value overrides (repeatable)");
}

divst::ExperimentConfig build_config(const CommonFlags& f) {
    divst::ExperimentConfig cfg;
    if (!f.config_path.empty()) cfg = divst::parse_config_file(f.config_path);
    for (const auto& kv : f.sets) {
        std::size_t eq = kv.find('=');
        if (eq == std::string::npos)
            throw divst::ConfigError("--set expects key=value, got '" + kv + "'");
        divst::apply_override(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (!f.seeds.empty()) cfg.seeds = f.seeds;
    if (!f.out_dir.empty()) cfg.out_dir = f.out_dir;
    if (!f.policy.empty()) cfg.policy = f.policy;
    if (!f.confidence.empty()) cfg.confidence = f.confidence;
    if (f.gamma_set) cfg.gamma = f.gamma;
    if (f.workers > 0) cfg.workers = f.workers;
    return cfg;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw divst::ConfigError("cannot write file: " + path.string());
    out << content;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"diversity-aware self-training experiments"};
    app.require_subcommand(1);

    CommonFlags run_flags;
    bool run_grid = false;
    auto* run_cmd = app.add_subcommand(
        "run", "run the experiment pipeline and write record.json + summary.csv");
    add_common(run_cmd, run_flags);
    run_cmd->add_flag("--grid", run_grid,
                      "also run the {policy} x {confidence} grid and write table.csv");

    CommonFlags verify_flags;
    std::uint64_t verify_seed = 7;
    bool inject_fault = false;
    auto* verify_cmd =
        app.add_subcommand("verify", "run the theory verification battery (exit 0 iff all pass)");
    verify_cmd->add_option("--seed", verify_seed, "battery seed");
    verify_cmd->add_option("--out", verify_flags.out_dir, "directory for report.json");
    verify_cmd->add_flag("--inject-gradient-fault", inject_fault,
                         "deliberately corrupt the analytic gradient (battery self-test)");

    std::string record_path, plot_kind;
    CommonFlags plot_flags;
    auto* plot_cmd = app.add_subcommand("plotdata", "derive tidy plot CSVs from a record");
    plot_cmd->add_option("--record", record_path, "path to a record.json")->required();
    plot_cmd
        ->add_option("--kind", plot_kind,
                     "calibration_vs_gamma|histograms|bias_strength|ablation")
        ->required();
    plot_cmd->add_option("--out", plot_flags.out_dir, "output directory");

    CommonFlags loo_flags;
    auto* loo_cmd =
        app.add_subcommand("loo", "leave-one-out accuracy over each seed's labeled pool");
    add_common(loo_cmd, loo_flags);

    CommonFlags split_flags;
    auto* split_cmd = app.add_subcommand("split", "emit split manifests (JSON) per seed");
    add_common(split_cmd, split_flags);

    CLI11_PARSE(app, argc, argv);

    try {
        if (run_cmd->parsed()) {
            divst::ExperimentConfig cfg = build_config(run_flags);
            std::filesystem::create_directories(cfg.out_dir);
            divst::ExperimentRecord record = divst::run_experiment(cfg);
            write_file(std::filesystem::path(cfg.out_dir) / "record.json",
                       divst::record_to_json(record));
            write_file(std::filesystem::path(cfg.out_dir) / "summary.csv",
                       divst::summary_csv(record));
            if (run_grid) {
                std::string table = divst::method_grid_csv(
                    cfg, {"threshold", "curriculum", "transductive"}, {"softmax", "tsim"});
                write_file(std::filesystem::path(cfg.out_dir) / "table.csv", table);
            }
            int failed = 0;
            for (const auto& c : record.cells)
                if (!c.error.empty()) ++failed;
            for (const auto& a : record.aggregates)
                std::cout << a.id << ": mean " << a.mean << " stddev " << a.stddev << "\n";
            if (failed > 0) {
                std::cerr << failed << " cell(s) failed; record marks partial completion\n";
                return 1;
            }
            return 0;
        }
        if (verify_cmd->parsed()) {
            std::string report;
            int failures = divst::verify_battery(verify_seed, inject_fault, &report);
            std::cout << report << "\n";
            if (!verify_flags.out_dir.empty()) {
                std::filesystem::create_directories(verify_flags.out_dir);
                write_file(std::filesystem::path(verify_flags.out_dir) / "report.json", report);
            }
            return failures == 0 ? 0 : 1;
        }
        if (plot_cmd->parsed()) {
            std::ifstream in(record_path);
            if (!in) throw divst::ConfigError("cannot open record: " + record_path);
            std::string text((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
            divst::ExperimentRecord record = divst::record_from_json(text);
            std::string csv = divst::plot_data_csv(record, plot_kind);
            std::string dir = plot_flags.out_dir.empty() ? "." : plot_flags.out_dir;
            std::filesystem::create_directories(dir);
            std::filesystem::path path = std::filesystem::path(dir) / (plot_kind + ".csv");
            write_file(path, csv);
            std::cout << "wrote " << path.string() << "\n";
            return 0;
        }
        if (loo_cmd->parsed()) {
            divst::ExperimentConfig cfg = build_config(loo_flags);
            divst::LooResult res = divst::run_loo(cfg);
            std::filesystem::create_directories(cfg.out_dir);
            write_file(std::filesystem::path(cfg.out_dir) / "loo.csv", res.csv);
            std::cout << "loo_accuracy: mean " << res.summary.mean << " stddev "
                      << res.summary.stddev << "\n";
            return 0;
        }
        if (split_cmd->parsed()) {
            divst::ExperimentConfig cfg = build_config(split_flags);
            std::filesystem::create_directories(cfg.out_dir);
            for (std::uint64_t seed : cfg.seeds) {
                std::string manifest = divst::make_split_manifest(cfg, seed);
                std::filesystem::path path = std::filesystem::path(cfg.out_dir) /
                                             ("split_" + std::to_string(seed) + ".json");
                write_file(path, manifest);
                std::cout << "wrote " << path.string() << "\n";
            }
            return 0;
        }
    } catch (const divst::DivstError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "unexpected error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
