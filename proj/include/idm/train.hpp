#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "idm/models.hpp"
#include "json.hpp"

namespace idm {

struct TrainConfig {
    double lr = 3e-4;
    double weight_decay = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::size_t batch_size = 16;
    std::size_t max_epochs = 30;
    std::size_t patience = 3;    // evaluations without improvement
    std::size_t eval_every = 1;  // epochs
    double min_improvement = 1e-5;
    std::uint64_t run_seed = 0;

    void validate() const;
    nlohmann::ordered_json to_json() const;
};

// ---------------------------------------------------------------------------
// AdamW

// Moments per tensor plus a per-tensor step count: a tensor that sits out a
// step keeps its moments and bias-correction clock untouched.
template <typename Real>
struct AdamWState {
    std::vector<AlignedVector<Real>> m, v;
    std::vector<std::uint64_t> t;
    std::uint64_t steps = 0;

    void reset(const ModelParams<Real>& params);
};

// One decoupled-decay update of a single tensor with step index t >= 1.
template <typename Real>
void adamw_update(std::span<Real> w, std::span<const Real> g, std::span<Real> m, std::span<Real> v, std::uint64_t t,
                  const TrainConfig& config);

// Updates every tensor whose `active` flag is set (all when `active` is empty).
// Any non-finite gradient in an active tensor aborts before anything changes.
template <typename Real>
void adamw_step(ModelParams<Real>& params, const ModelParams<Real>& grads, AdamWState<Real>& state,
                const TrainConfig& config, const std::vector<bool>& active = {});

enum class Task { regression, mcqa };
const char* to_string(Task t);

// Tensors a step of `task` may touch under `method`, in for_each order.
template <typename Real>
std::vector<bool> active_tensors(const ModelParams<Real>& params, Method method, Task task);

// Seeded permutation of n regression and n MCQA labels.
std::vector<Task> schedule_epoch(std::size_t batches_per_task, std::uint64_t seed);

// Seeded shuffle of 0..n-1 cut into consecutive batches; the last may be short.
std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch, Rng& rng);

// Patience counter over validation RMSE; lower is better.
class EarlyStopping {
public:
    EarlyStopping(std::size_t patience, double min_improvement);

    // Returns true when `rmse` is a new best.
    bool observe(double rmse);
    bool should_stop() const noexcept { return bad_ >= patience_; }
    double best() const noexcept { return best_; }
    std::size_t evaluations() const noexcept { return evaluations_; }

private:
    std::size_t patience_;
    double min_improvement_;
    double best_ = std::numeric_limits<double>::infinity();
    std::size_t bad_ = 0;
    std::size_t evaluations_ = 0;
};

// ---------------------------------------------------------------------------
// Cells

struct CellConfig {
    ModelConfig model;
    EncoderConfig encoder;  // vocab_size is filled in from the vocabulary
    TrainConfig train;
    MtlConfig mtl;
    AssemblyLimits limits;
};

struct HistoryRow {
    std::size_t epoch = 0;
    std::size_t step = 0;
    double train_loss_reg = std::numeric_limits<double>::quiet_NaN();
    double train_loss_mcqa = std::numeric_limits<double>::quiet_NaN();
    double val_rmse = 0.0;
};

struct CellRun {
    CellConfig config;
    ModelParams<float> params;  // best-on-validation
    std::vector<HistoryRow> history;
    double best_val_rmse = std::numeric_limits<double>::infinity();
    std::size_t best_step = 0;
    std::size_t best_epoch = 0;
    std::size_t steps = 0;
    std::size_t regression_steps = 0;
    std::size_t mcqa_steps = 0;
};

struct TrainHooks {
    // After each optimiser step, with the parameters just updated.
    std::function<void(std::size_t step, Task task, const ModelParams<float>& params)> on_step;
    // Override of the validation score; receives the epoch and the computed RMSE.
    std::function<double(std::size_t epoch, double rmse)> val_override;
    // Called right before training starts, with the initial parameters.
    std::function<void(const ModelParams<float>& params)> on_start;
};

CellRun train_cell(const CellConfig& config, std::span<const Item* const> train, std::span<const Item* const> val,
                   const Vocab& vocab, const TrainHooks& hooks = {});

// Eval-mode predictions for a trained cell.
std::vector<double> predict_items(const ModelParams<float>& params, const CellConfig& config,
                                  std::span<const Item* const> items, const Vocab& vocab);

std::string history_to_csv(const std::vector<HistoryRow>& history);

// ---------------------------------------------------------------------------
// Lambda grid

inline const std::vector<double> kDefaultLambdas = {0.005, 0.05, 0.5, 1.0};

struct LambdaRow {
    double lambda = 0.0;
    double val_rmse = std::numeric_limits<double>::quiet_NaN();
    std::string error;  // empty on success
};

struct LambdaGridResult {
    std::vector<LambdaRow> rows;  // candidate order
    double winner = 0.0;
};

// One mtl cell per candidate; a failing candidate is recorded and skipped.
LambdaGridResult lambda_grid(const std::vector<double>& candidates, const CellConfig& base,
                             std::span<const Item* const> tuning, std::span<const Item* const> val,
                             const Vocab& vocab);

}  // namespace idm
