#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "idm/experiment.hpp"

namespace idm {

// One (method x size x seed) cell of the experimental grid.
struct CellId {
    Method method = Method::joint;
    std::string size;
    std::uint64_t seed = 0;

    std::string name() const;  // "joint_800_42", directory name under out/cells
    std::string selector() const;  // "joint:800:42"
    static CellId parse(const std::string& selector);
    bool operator==(const CellId&) const = default;
};

// Every cell of the configured grid in a fixed order; a full-size row is a
// single run on the first seed.
std::vector<CellId> plan_cells(const ExperimentConfig& config);

void cmd_gen_synth(const ExperimentConfig& config, std::ostream& log);
void cmd_prepare(const ExperimentConfig& config, std::ostream& log);
// Trains the selected cells; a cell with a finished checkpoint is skipped unless `force`.
void cmd_train(const ExperimentConfig& config, const std::vector<CellId>& cells, bool force, std::ostream& log);
// Consults the test split for each selected cell and rebuilds results.csv.
// Cells already evaluated are refused when named explicitly and skipped when
// `only_pending` is set, unless `force`.
void cmd_evaluate(const ExperimentConfig& config, const std::vector<CellId>& cells, bool only_pending, bool force,
                  std::ostream& log);
void cmd_compare(const ExperimentConfig& config, std::ostream& log);
void cmd_report(const ExperimentConfig& config, std::ostream& log);
void cmd_lambda_grid(const ExperimentConfig& config, std::ostream& log);

// Lambda used by mtl cells: the fixed value or the stored grid winner.
double resolve_lambda(const ExperimentConfig& config);

// Formatting shared by the report and tests.
std::string format_p(double p);  // ".010"; "1.000" at one
std::string format_mean_sd(const std::vector<double>& values, int decimals = 3);

}  // namespace idm
