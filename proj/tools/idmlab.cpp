// Command-line driver for the difficulty-prediction experiment.

#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "idm/pipeline.hpp"
#include "idm/util.hpp"

extern char** environ;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitNumeric = 3;

// Runs `idmlab train --config <path> --cell <c>` for each cell, at most `jobs` at a time.
int fan_out(const std::string& config_path, const std::vector<idm::CellId>& cells, std::size_t jobs, bool force) {
    std::vector<pid_t> running;
    int worst = 0;
    auto reap_one = [&]() {
        int status = 0;
        const pid_t pid = ::wait(&status);
        if (pid < 0) return;
        running.erase(std::remove(running.begin(), running.end(), pid), running.end());
        const int code = WIFEXITED(status) ? WEXITSTATUS(status) : 1;
        worst = std::max(worst, code);
    };
    for (const auto& cell : cells) {
        while (running.size() >= jobs) reap_one();
        std::vector<std::string> args = {"/proc/self/exe", "train", "--config", config_path, "--cell", cell.selector()};
        if (force) args.push_back("--force");
        std::vector<char*> argv;
        for (auto& a : args) argv.push_back(a.data());
        argv.push_back(nullptr);
        pid_t pid = 0;
        if (::posix_spawn(&pid, "/proc/self/exe", nullptr, nullptr, argv.data(), environ) != 0) {
            std::cerr << "error: cannot start a worker for " << cell.selector() << "\n";
            worst = std::max(worst, 1);
            continue;
        }
        running.push_back(pid);
    }
    while (!running.empty()) reap_one();
    return worst;
}

std::vector<idm::CellId> select_cells(const idm::ExperimentConfig& config, const std::vector<std::string>& selectors,
                                      bool all) {
    if (all) return idm::plan_cells(config);
    if (selectors.empty()) throw idm::ValidationError("select cells with --cell method:size:seed or --all");
    std::vector<idm::CellId> cells;
    for (const auto& s : selectors) cells.push_back(idm::CellId::parse(s));
    return cells;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Item difficulty modelling experiments: data preparation, training, evaluation and reporting"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> selectors;
    bool all = false;
    bool force = false;
    std::size_t jobs = 1;

    auto with_config = [&](CLI::App* sub) {
        sub->add_option("-c,--config", config_path, "experiment config (key = value text or JSON)")
            ->required()
            ->check(CLI::ExistingFile);
    };

    auto* gen = app.add_subcommand("gen-synth", "write the synthetic corpus and its truth.json");
    with_config(gen);
    auto* prepare = app.add_subcommand("prepare", "split the corpus, draw nested subsamples, build the vocabulary");
    with_config(prepare);
    auto* train = app.add_subcommand("train", "train grid cells");
    with_config(train);
    train->add_option("--cell", selectors, "cell as method:size:seed (repeatable)");
    train->add_flag("--all", all, "every cell of the configured grid");
    train->add_flag("--force", force, "retrain cells that already have a checkpoint");
    train->add_option("-j,--jobs", jobs, "worker processes")->check(CLI::PositiveNumber);
    auto* evaluate = app.add_subcommand("evaluate", "score trained cells on the test split and rebuild results.csv");
    with_config(evaluate);
    evaluate->add_option("--cell", selectors, "cell as method:size:seed (repeatable)");
    evaluate->add_flag("--all", all, "every trained cell not yet evaluated");
    evaluate->add_flag("--force", force, "evaluate cells again");
    auto* compare = app.add_subcommand("compare", "paired comparisons against the baseline method");
    with_config(compare);
    auto* report = app.add_subcommand("report", "markdown tables and paired-difference CSVs");
    with_config(report);
    auto* grid = app.add_subcommand("lambda-grid", "tune the MCQA loss weight on a held-aside subsample");
    with_config(grid);
    app.add_subcommand("defaults", "print every config key with its default");

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitValidation;
    }

    try {
        if (app.got_subcommand("defaults")) {
            std::cout << idm::defaults_text();
            return 0;
        }
        const auto config = idm::load_config(config_path);
        auto& log = std::cerr;
        if (gen->parsed()) {
            idm::cmd_gen_synth(config, log);
        } else if (prepare->parsed()) {
            idm::cmd_prepare(config, log);
        } else if (train->parsed()) {
            const auto cells = select_cells(config, selectors, all);
            if (jobs > 1 && cells.size() > 1) return fan_out(config_path, cells, jobs, force);
            idm::cmd_train(config, cells, force, log);
        } else if (evaluate->parsed()) {
            const auto cells = select_cells(config, selectors, all);
            idm::cmd_evaluate(config, cells, all, force, log);
        } else if (compare->parsed()) {
            idm::cmd_compare(config, log);
        } else if (report->parsed()) {
            idm::cmd_report(config, log);
        } else if (grid->parsed()) {
            idm::cmd_lambda_grid(config, log);
        }
    } catch (const idm::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const idm::NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
