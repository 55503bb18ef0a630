#include "idm/train.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "idm/stats.hpp"
#include "idm/util.hpp"

namespace idm {

void TrainConfig::validate() const {
    auto positive = [](double x, const char* name) {
        if (!(x > 0.0) || !std::isfinite(x)) throw ValidationError(std::string("train.") + name + " must be positive");
    };
    positive(lr, "lr");
    positive(eps, "eps");
    if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) {
        throw ValidationError("train.weight_decay must be non-negative");
    }
    if (!(beta1 > 0.0 && beta1 < 1.0)) throw ValidationError("train.beta1 must lie in (0, 1)");
    if (!(beta2 > 0.0 && beta2 < 1.0)) throw ValidationError("train.beta2 must lie in (0, 1)");
    if (batch_size == 0) throw ValidationError("train.batch_size must be positive");
    if (max_epochs == 0) throw ValidationError("train.max_epochs must be positive");
    if (patience == 0) throw ValidationError("train.patience must be at least 1");
    if (eval_every == 0) throw ValidationError("train.eval_every must be positive");
    if (!(min_improvement >= 0.0)) throw ValidationError("train.min_improvement must be non-negative");
}

nlohmann::ordered_json TrainConfig::to_json() const {
    return {{"lr", lr},
            {"weight_decay", weight_decay},
            {"beta1", beta1},
            {"beta2", beta2},
            {"eps", eps},
            {"batch_size", batch_size},
            {"max_epochs", max_epochs},
            {"patience", patience},
            {"eval_every", eval_every},
            {"min_improvement", min_improvement},
            {"run_seed", run_seed}};
}

// ---------------------------------------------------------------------------
// AdamW

template <typename Real>
void AdamWState<Real>::reset(const ModelParams<Real>& params) {
    m.clear();
    v.clear();
    t.clear();
    steps = 0;
    params.for_each([&](const Tensor<Real>& x) {
        m.emplace_back(x.size(), Real(0));
        v.emplace_back(x.size(), Real(0));
        t.push_back(0);
    });
}

template <typename Real>
void adamw_update(std::span<Real> w, std::span<const Real> g, std::span<Real> m, std::span<Real> v, std::uint64_t t,
                  const TrainConfig& config) {
    if (g.size() != w.size() || m.size() != w.size() || v.size() != w.size()) {
        throw ValidationError("adamw: shape mismatch");
    }
    if (t == 0) {
        throw ValidationError("adamw: step index starts at 1");
    }
    const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(t));
    const auto decay = static_cast<Real>(1.0 - config.lr * config.weight_decay);
    const auto b1 = static_cast<Real>(config.beta1);
    const auto b2 = static_cast<Real>(config.beta2);
    const auto lr = static_cast<Real>(config.lr);
    const auto eps = static_cast<Real>(config.eps);
    const auto inv_c1 = static_cast<Real>(1.0 / c1);
    const auto inv_c2 = static_cast<Real>(1.0 / c2);
    for (std::size_t i = 0; i < w.size(); ++i) {
        m[i] = b1 * m[i] + (Real(1) - b1) * g[i];
        v[i] = b2 * v[i] + (Real(1) - b2) * g[i] * g[i];
        const Real m_hat = m[i] * inv_c1;
        const Real v_hat = v[i] * inv_c2;
        w[i] = w[i] * decay - lr * m_hat / (std::sqrt(v_hat) + eps);
    }
}

template <typename Real>
void adamw_step(ModelParams<Real>& params, const ModelParams<Real>& grads, AdamWState<Real>& state,
                const TrainConfig& config, const std::vector<bool>& active) {
    std::vector<Tensor<Real>*> ps;
    std::vector<const Tensor<Real>*> gs;
    params.for_each([&](Tensor<Real>& t) { ps.push_back(&t); });
    grads.for_each([&](const Tensor<Real>& t) { gs.push_back(&t); });
    if (ps.size() != gs.size()) {
        throw ValidationError("adamw: parameter and gradient sets differ");
    }
    if (state.m.size() != ps.size()) {
        state.reset(params);
    }
    if (!active.empty() && active.size() != ps.size()) {
        throw ValidationError("adamw: active mask has the wrong length");
    }
    for (std::size_t i = 0; i < ps.size(); ++i) {
        if (ps[i]->shape != gs[i]->shape || state.m[i].size() != ps[i]->size()) {
            throw ValidationError("adamw: shape mismatch at " + ps[i]->name);
        }
        if (!active.empty() && !active[i]) continue;
        for (Real x : gs[i]->data) {
            if (!std::isfinite(static_cast<double>(x))) {
                throw NumericError("non-finite gradient in tensor " + ps[i]->name);
            }
        }
    }
    for (std::size_t i = 0; i < ps.size(); ++i) {
        if (!active.empty() && !active[i]) continue;
        ++state.t[i];
        adamw_update<Real>(ps[i]->data, gs[i]->data, state.m[i], state.v[i], state.t[i], config);
    }
    ++state.steps;
}

const char* to_string(Task t) { return t == Task::regression ? "regression" : "mcqa"; }

template <typename Real>
std::vector<bool> active_tensors(const ModelParams<Real>& params, Method method, Task task) {
    std::vector<bool> active;
    params.for_each_tagged([&](const Tensor<Real>&, ParamGroup group, std::size_t index) {
        bool on = false;
        switch (group) {
            case ParamGroup::encoder:
                on = true;
                break;
            case ParamGroup::task_cond:
                on = method == Method::mtl &&
                     index == (task == Task::regression ? kRegressionTask : kMcqaTask);
                break;
            case ParamGroup::regression_head:
                on = task == Task::regression;
                break;
            case ParamGroup::classification_head:
                on = method == Method::mtl && task == Task::mcqa;
                break;
        }
        active.push_back(on);
    });
    return active;
}

std::vector<Task> schedule_epoch(std::size_t batches_per_task, std::uint64_t seed) {
    if (batches_per_task == 0) {
        throw ValidationError("schedule_epoch: batches_per_task must be at least 1");
    }
    std::vector<Task> tasks(batches_per_task, Task::regression);
    tasks.resize(2 * batches_per_task, Task::mcqa);
    Rng rng(seed);
    rng.shuffle(tasks);
    return tasks;
}

EarlyStopping::EarlyStopping(std::size_t patience, double min_improvement)
    : patience_(patience), min_improvement_(min_improvement) {
    if (patience == 0) {
        throw ValidationError("patience must be at least 1");
    }
}

bool EarlyStopping::observe(double rmse) {
    ++evaluations_;
    if (rmse < best_ - min_improvement_) {
        best_ = rmse;
        bad_ = 0;
        return true;
    }
    ++bad_;
    return false;
}

// ---------------------------------------------------------------------------
// Cells

std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch, Rng& rng) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    rng.shuffle(order);
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < n; start += batch) {
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                             order.begin() + static_cast<std::ptrdiff_t>(std::min(n, start + batch)));
    }
    return batches;
}

namespace {

std::vector<EncodedItem> encode_all(std::span<const Item* const> items, const Vocab& vocab,
                                    const AssemblyLimits& limits, Method method) {
    std::vector<EncodedItem> out;
    out.reserve(items.size());
    for (const Item* item : items) out.push_back(encode_item(*item, vocab, limits, method));
    return out;
}

double validation_rmse(const ModelParams<float>& params, const ModelConfig& model,
                       const std::vector<EncodedItem>& val) {
    std::vector<double> preds, targets;
    for (const auto& e : val) {
        preds.push_back(static_cast<double>(predict_difficulty(params, model, e)));
        targets.push_back(e.target);
    }
    return rmse(preds, targets);
}

// Regression step; returns the batch MSE.
double regression_batch(ModelParams<float>& params, const CellConfig& config, const std::vector<EncodedItem>& data,
                        const std::vector<std::size_t>& batch, Rng& dropout, ModelParams<float>& grads) {
    const auto scale = 2.0f / static_cast<float>(batch.size());
    double loss = 0.0;
    const bool mtl = config.model.method == Method::mtl;
    for (std::size_t idx : batch) {
        const auto& e = data[idx];
        if (config.model.method == Method::componentwise) {
            ComponentTape<float> tape;
            const float pred =
                predict_componentwise(params, std::span<const TokenSequence>(e.components), config.model.pooling,
                                      config.model.aggregation, true, &dropout, &tape);
            const float err = pred - static_cast<float>(e.target);
            loss += static_cast<double>(err) * err;
            backward_componentwise(params, tape, config.model.aggregation, scale * err, grads);
        } else {
            JointTape<float> tape;
            const auto task = mtl ? std::optional<std::size_t>(kRegressionTask) : std::nullopt;
            const float pred = predict_joint(params, e.joint, task, true, &dropout, &tape);
            const float err = pred - static_cast<float>(e.target);
            loss += static_cast<double>(err) * err;
            backward_joint(params, tape, scale * err, grads);
        }
    }
    return loss / static_cast<double>(batch.size());
}

// MCQA step; returns the batch mean cross-entropy (before lambda).
double mcqa_batch(ModelParams<float>& params, const CellConfig& config, const std::vector<EncodedItem>& data,
                  const std::vector<std::size_t>& batch, Rng& dropout, ModelParams<float>& grads) {
    const double scale = config.mtl.lambda / static_cast<double>(batch.size());
    double loss = 0.0;
    for (std::size_t idx : batch) {
        const auto& e = data[idx];
        McqaTape<float> tape;
        const auto logits = mcqa_logits(params, std::span<const TokenSequence>(e.options),
                                        std::optional<std::size_t>(kMcqaTask), true, &dropout, &tape);
        const std::vector<double> z(logits.begin(), logits.end());
        loss += loss_mcqa(z, e.key);
        const auto p = softmax(z);
        std::vector<float> d(p.size());
        for (std::size_t m = 0; m < p.size(); ++m) {
            d[m] = static_cast<float>(scale * (p[m] - (m == e.key ? 1.0 : 0.0)));
        }
        backward_mcqa(params, tape, std::span<const float>(d), grads);
    }
    return loss / static_cast<double>(batch.size());
}

}  // namespace

CellRun train_cell(const CellConfig& input, std::span<const Item* const> train, std::span<const Item* const> val,
                   const Vocab& vocab, const TrainHooks& hooks) {
    if (train.empty()) {
        throw ValidationError("train_cell: empty training subsample");
    }
    if (val.empty()) {
        throw ValidationError("train_cell: empty validation split");
    }
    if (input.model.method == Method::dummy) {
        throw ValidationError("train_cell: the dummy method is not trained");
    }
    CellRun run;
    run.config = input;
    CellConfig& config = run.config;
    config.encoder.vocab_size = vocab.size();
    config.encoder.max_len = config.limits.max_len;
    config.encoder.validate();
    config.train.validate();
    if (config.model.method == Method::mtl) {
        config.mtl.validate();
    }

    const auto data = encode_all(train, vocab, config.limits, config.model.method);
    const auto val_data = encode_all(val, vocab, config.limits, config.model.method);

    auto params = init_model<float>(config.encoder, config.model);
    double mean = 0.0;
    for (const auto& e : data) mean += e.target;
    params.reg_b.data[0] = static_cast<float>(mean / static_cast<double>(data.size()));
    auto grads = make_model_params<float>(config.encoder, params.reg_w.size());
    AdamWState<float> state;
    state.reset(params);

    const auto active_reg = active_tensors(params, config.model.method, Task::regression);
    const auto active_mcqa = active_tensors(params, config.model.method, Task::mcqa);

    Rng dropout(mix_seed(config.train.run_seed, "dropout"));
    Rng shuffler(mix_seed(config.train.run_seed, "batches"));
    EarlyStopping stopper(config.train.patience, config.train.min_improvement);
    run.params = params;
    if (hooks.on_start) hooks.on_start(params);

    const bool mtl = config.model.method == Method::mtl;
    for (std::size_t epoch = 1; epoch <= config.train.max_epochs; ++epoch) {
        const auto reg_batches = make_batches(data.size(), config.train.batch_size, shuffler);
        std::vector<std::vector<std::size_t>> mcqa_batches;
        std::vector<Task> schedule;
        if (mtl) {
            mcqa_batches = make_batches(data.size(), config.train.batch_size, shuffler);
            schedule = schedule_epoch(reg_batches.size(), mix_seed(config.mtl.scheduler_seed, epoch));
        } else {
            schedule.assign(reg_batches.size(), Task::regression);
        }

        std::size_t next_reg = 0, next_mcqa = 0;
        double sum_reg = 0.0, sum_mcqa = 0.0;
        std::size_t n_reg = 0, n_mcqa = 0;
        for (Task task : schedule) {
            grads.zero();
            double loss = 0.0;
            if (task == Task::regression) {
                loss = regression_batch(params, config, data, reg_batches[next_reg++], dropout, grads);
            } else {
                loss = mcqa_batch(params, config, data, mcqa_batches[next_mcqa++], dropout, grads);
            }
            if (!std::isfinite(loss)) {
                throw NumericError("non-finite " + std::string(to_string(task)) + " loss at epoch " +
                                   std::to_string(epoch) + ", step " + std::to_string(run.steps + 1));
            }
            adamw_step(params, grads, state, config.train, task == Task::regression ? active_reg : active_mcqa);
            ++run.steps;
            if (task == Task::regression) {
                sum_reg += loss;
                ++n_reg;
                ++run.regression_steps;
            } else {
                sum_mcqa += loss;
                ++n_mcqa;
                ++run.mcqa_steps;
            }
            if (hooks.on_step) hooks.on_step(run.steps, task, params);
        }

        const bool last = epoch == config.train.max_epochs;
        if (epoch % config.train.eval_every != 0 && !last) continue;

        HistoryRow row;
        row.epoch = epoch;
        row.step = run.steps;
        if (n_reg > 0) row.train_loss_reg = sum_reg / static_cast<double>(n_reg);
        if (n_mcqa > 0) row.train_loss_mcqa = sum_mcqa / static_cast<double>(n_mcqa);
        row.val_rmse = validation_rmse(params, config.model, val_data);
        if (hooks.val_override) row.val_rmse = hooks.val_override(epoch, row.val_rmse);
        if (!std::isfinite(row.val_rmse)) {
            throw NumericError("non-finite validation RMSE at epoch " + std::to_string(epoch));
        }
        run.history.push_back(row);
        if (stopper.observe(row.val_rmse)) {
            run.params = params;
            run.best_val_rmse = row.val_rmse;
            run.best_step = run.steps;
            run.best_epoch = epoch;
        }
        if (stopper.should_stop()) break;
    }
    return run;
}

std::vector<double> predict_items(const ModelParams<float>& params, const CellConfig& config,
                                  std::span<const Item* const> items, const Vocab& vocab) {
    std::vector<double> out;
    out.reserve(items.size());
    for (const Item* item : items) {
        const auto e = encode_item(*item, vocab, config.limits, config.model.method);
        out.push_back(static_cast<double>(predict_difficulty(params, config.model, e)));
    }
    return out;
}

std::string history_to_csv(const std::vector<HistoryRow>& history) {
    auto cell = [](double x) { return std::isfinite(x) ? format_real(x) : std::string("NA"); };
    std::ostringstream out;
    out << "epoch,step,train_loss_reg,train_loss_mcqa,val_rmse\n";
    for (const auto& r : history) {
        out << r.epoch << ',' << r.step << ',' << cell(r.train_loss_reg) << ',' << cell(r.train_loss_mcqa) << ','
            << cell(r.val_rmse) << '\n';
    }
    return out.str();
}

// ---------------------------------------------------------------------------
// Lambda grid

LambdaGridResult lambda_grid(const std::vector<double>& candidates, const CellConfig& base,
                             std::span<const Item* const> tuning, std::span<const Item* const> val,
                             const Vocab& vocab) {
    if (candidates.empty()) {
        throw ValidationError("lambda_grid: no candidates");
    }
    LambdaGridResult result;
    bool found = false;
    double best = 0.0;
    for (double lambda : candidates) {
        LambdaRow row;
        row.lambda = lambda;
        try {
            CellConfig config = base;
            config.model.method = Method::mtl;
            config.mtl.lambda = lambda;
            row.val_rmse = train_cell(config, tuning, val, vocab).best_val_rmse;
        } catch (const std::exception& e) {
            row.error = e.what();
        }
        if (row.error.empty() &&
            (!found || row.val_rmse < best || (row.val_rmse == best && lambda < result.winner))) {
            found = true;
            best = row.val_rmse;
            result.winner = lambda;
        }
        result.rows.push_back(row);
    }
    if (!found) {
        throw ValidationError("lambda_grid: every candidate failed; first error: " + result.rows.front().error);
    }
    return result;
}

#define IDM_INSTANTIATE_TRAIN(Real)                                                                               \
    template struct AdamWState<Real>;                                                                             \
    template void adamw_update<Real>(std::span<Real>, std::span<const Real>, std::span<Real>, std::span<Real>,     \
                                     std::uint64_t, const TrainConfig&);                                          \
    template void adamw_step<Real>(ModelParams<Real>&, const ModelParams<Real>&, AdamWState<Real>&,               \
                                   const TrainConfig&, const std::vector<bool>&);                                 \
    template std::vector<bool> active_tensors<Real>(const ModelParams<Real>&, Method, Task);

IDM_INSTANTIATE_TRAIN(float)
IDM_INSTANTIATE_TRAIN(double)

}  // namespace idm
