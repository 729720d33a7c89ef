#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cdb/cdb.hpp"

namespace {

constexpr const char* kSynopsis =
    "usage: cdb <subcommand> [options]\n"
    "\n"
    "subcommands:\n"
    "  run <config>        run the experiment described by a config file\n"
    "  sweep <config> --param KEY --values V1,V2,... [--param KEY2 --values ...]\n"
    "                      rerun the experiment over a grid of config values\n"
    "  gen-data <config>   materialize the induced train/val/test datasets as CSV\n"
    "  report <dir>        re-aggregate summary.json files found under a directory\n"
    "\n"
    "options:\n"
    "  --seed S1[,S2,...]  override the config seed list\n"
    "  --output-dir DIR    override the output directory\n"
    "  --threads N         trial parallelism (default 1)\n";

struct Overrides {
    std::string seeds;
    std::string output_dir;
    std::size_t threads = 1;
};

void apply_overrides(cdb::ExperimentConfig& config, const Overrides& ov) {
    if (!ov.seeds.empty()) cdb::apply_config_key(config, "seeds", ov.seeds, "--seed");
    if (!ov.output_dir.empty()) config.output_dir = ov.output_dir;
    cdb::validate_config(config);
}

void print_aggregate(const std::map<std::string, cdb::MetricAggregate>& aggregate) {
    for (const auto& [name, agg] : aggregate) {
        std::printf("  %-16s %.4f ± %.4f\n", name.c_str(), agg.mean, agg.stddev);
    }
}

int cmd_run(const std::string& config_path, const Overrides& ov) {
    cdb::ExperimentConfig config = cdb::parse_config(config_path);
    apply_overrides(config, ov);
    cdb::RunOptions options;
    options.threads = ov.threads;
    const cdb::ExperimentResult result = cdb::run_experiment(config, options);
    std::printf("%zu trial(s), config %s\n", result.records.size(), cdb::config_hash(config).c_str());
    print_aggregate(result.aggregate);
    std::printf("summary: %s\n", result.summary_path.c_str());
    return 0;
}

int cmd_sweep(const std::string& config_path, const std::vector<std::string>& param_keys,
              const std::vector<std::string>& value_lists, const Overrides& ov) {
    if (param_keys.size() != value_lists.size()) {
        throw cdb::ConfigError("each --param needs a matching --values");
    }
    cdb::ExperimentConfig config = cdb::parse_config(config_path);
    apply_overrides(config, ov);
    std::vector<cdb::SweepParam> params;
    for (std::size_t i = 0; i < param_keys.size(); ++i) {
        cdb::SweepParam p;
        p.key = param_keys[i];
        for (const auto& v : cdb::detail::split_csv(value_lists[i])) p.values.push_back(cdb::detail::trim(v));
        params.push_back(std::move(p));
    }
    cdb::RunOptions options;
    options.threads = ov.threads;
    const cdb::SweepResult result = cdb::run_sweep(config, params, options);
    for (const auto& cell : result.cells) {
        const auto& err = cell.aggregate.at("error_rate");
        std::printf("  %s=%s%s%s  error_rate %.4f ± %.4f\n", params[0].key.c_str(), cell.row_value.c_str(),
                    cell.col_value.empty() ? "" : " ", cell.col_value.c_str(), err.mean, err.stddev);
    }
    std::printf("report: %s\n", result.report_path.c_str());
    return 0;
}

int cmd_gen_data(const std::string& config_path, const Overrides& ov) {
    namespace fs = std::filesystem;
    cdb::ExperimentConfig config = cdb::parse_config(config_path);
    apply_overrides(config, ov);
    for (std::uint64_t seed : config.seeds) {
        const cdb::TrialDatasets data = cdb::build_trial_datasets(config, seed);
        const fs::path dir = fs::path(config.output_dir) / ("seed_" + std::to_string(seed));
        fs::create_directories(dir);
        cdb::write_dataset_csv(data.train, (dir / "train.csv").string());
        cdb::write_dataset_csv(data.val, (dir / "val.csv").string());
        cdb::write_dataset_csv(data.test, (dir / "test.csv").string());
        std::printf("wrote %s/{train,val,test}.csv\n", dir.string().c_str());
    }
    return 0;
}

int cmd_report(const std::string& dir) {
    namespace fs = std::filesystem;
    const auto entries = cdb::reaggregate_directory(dir);
    if (entries.empty()) throw std::runtime_error("no summary.json files under " + dir);
    const std::string csv_path = (fs::path(dir) / "reaggregate.csv").string();
    std::ofstream csv(csv_path);
    if (!csv) throw std::runtime_error("cannot open for writing: " + csv_path);
    csv << "summary,trials,error_rate_mean,error_rate_std,top1_mean,top1_std,"
           "macro_recall_mean,macro_recall_std,macro_precision_mean,macro_precision_std\n";
    for (const auto& entry : entries) {
        std::printf("%s (%zu trials%s)\n", entry.path.c_str(), entry.num_trials,
                    entry.stored_matches ? "" : ", STORED AGGREGATE MISMATCH");
        print_aggregate(entry.aggregate);
        csv << entry.path << "," << entry.num_trials;
        for (const char* metric : {"error_rate", "top1", "macro_recall", "macro_precision"}) {
            const auto& agg = entry.aggregate.at(metric);
            csv << "," << cdb::detail::fmt17(agg.mean) << "," << cdb::detail::fmt17(agg.stddev);
        }
        csv << "\n";
    }
    std::printf("report: %s\n", csv_path.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"class-difficulty-balanced loss experiment runner"};
    app.require_subcommand(1);
    app.fallthrough();

    Overrides ov;
    app.add_option("--seed", ov.seeds, "override the config seed list (comma separated)");
    app.add_option("--output-dir", ov.output_dir, "override the output directory");
    app.add_option("--threads", ov.threads, "trial parallelism");

    std::string config_path;
    std::string report_dir;
    std::vector<std::string> param_keys;
    std::vector<std::string> value_lists;

    CLI::App* run = app.add_subcommand("run", "run an experiment");
    run->add_option("config", config_path, "config file")->required();

    CLI::App* sweep = app.add_subcommand("sweep", "grid sweep over config keys");
    sweep->add_option("config", config_path, "config file")->required();
    sweep->add_option("--param", param_keys, "config key to sweep")->required();
    sweep->add_option("--values", value_lists, "comma-separated values for the matching --param")->required();

    CLI::App* gen = app.add_subcommand("gen-data", "materialize induced datasets to CSV");
    gen->add_option("config", config_path, "config file")->required();

    CLI::App* report = app.add_subcommand("report", "re-aggregate stored summaries");
    report->add_option("dir", report_dir, "directory to scan")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        std::cout << kSynopsis;
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n" << kSynopsis;
        return 1;
    }

    try {
        if (run->parsed()) return cmd_run(config_path, ov);
        if (sweep->parsed()) return cmd_sweep(config_path, param_keys, value_lists, ov);
        if (gen->parsed()) return cmd_gen_data(config_path, ov);
        if (report->parsed()) return cmd_report(report_dir);
        std::cerr << kSynopsis;
        return 1;
    } catch (const cdb::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
