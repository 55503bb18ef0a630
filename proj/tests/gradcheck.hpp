#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "idm/models.hpp"
#include "idm/util.hpp"

namespace idm::test {

// Parameters with every tensor randomised, so gains, biases and Z are all
// exercised away from their special initial values.
inline ModelParams<double> random_model(const EncoderConfig& config, const ModelConfig& model, std::uint64_t seed,
                                        double scale = 0.3) {
    auto p = make_model_params<double>(config, regression_width(model, config.hidden));
    Rng rng(seed);
    p.for_each([&](Tensor<double>& t) {
        const bool gain = t.name.find(".g") != std::string::npos && t.name.find("ln") != std::string::npos;
        for (auto& x : t.data) x = (gain ? 1.0 : 0.0) + scale * rng.normal();
    });
    return p;
}

inline TokenSequence random_sequence(std::size_t length, std::size_t vocab, std::size_t pads, Rng& rng) {
    TokenSequence s;
    s.ids.push_back(kCls);
    for (std::size_t i = 1; i < length; ++i) {
        s.ids.push_back(static_cast<std::int32_t>(kNumSpecials + rng.below(vocab - kNumSpecials)));
    }
    for (std::size_t i = 0; i < pads; ++i) s.ids.push_back(kPad);
    return s;
}

struct GradCheckResult {
    double max_rel = 0.0;
    double max_abs = 0.0;
    std::string worst;
    std::size_t checked = 0;
};

// Compares analytic gradients with central differences for every scalar
// parameter, using the fourth-order five-point stencil at spacing `step`.
// relative error = |a - n| / max(|a|, |n|, floor).
inline GradCheckResult grad_check(ModelParams<double> params,
                                  const std::function<double(const ModelParams<double>&)>& objective,
                                  const std::function<void(const ModelParams<double>&, ModelParams<double>&)>& analytic,
                                  double step = 1e-3, double floor = 1e-6) {
    auto grads = make_model_params<double>(params.encoder.config, params.reg_w.size());
    analytic(params, grads);
    std::vector<Tensor<double>*> ps;
    std::vector<const Tensor<double>*> gs;
    params.for_each([&](Tensor<double>& t) { ps.push_back(&t); });
    grads.for_each([&](const Tensor<double>& t) { gs.push_back(&t); });
    GradCheckResult r;
    for (std::size_t k = 0; k < ps.size(); ++k) {
        for (std::size_t i = 0; i < ps[k]->size(); ++i) {
            const double saved = ps[k]->data[i];
            auto at = [&](double offset) {
                ps[k]->data[i] = saved + offset;
                return objective(params);
            };
            const double numeric = (8.0 * (at(step) - at(-step)) - (at(2.0 * step) - at(-2.0 * step))) / (12.0 * step);
            ps[k]->data[i] = saved;
            const double a = gs[k]->data[i];
            const double abs_err = std::fabs(a - numeric);
            const double rel = abs_err / std::max({std::fabs(a), std::fabs(numeric), floor});
            ++r.checked;
            r.max_abs = std::max(r.max_abs, abs_err);
            if (rel > r.max_rel) {
                r.max_rel = rel;
                r.worst = ps[k]->name + "[" + std::to_string(i) + "] analytic " + std::to_string(a) + " numeric " +
                          std::to_string(numeric);
            }
        }
    }
    return r;
}

// Objectives over one model; dropout masks are redrawn from the same seed on
// every evaluation so the function being differentiated is fixed.
struct Objectives {
    ModelConfig model;
    std::vector<TokenSequence> seqs;  // joint: [0]; components: [0..2]; mcqa: all options
    std::optional<std::size_t> task;
    std::size_t key = 0;
    double target = 0.7;
    bool train_mode = true;
    std::uint64_t dropout_seed = 99;
    enum class Kind { joint, components, mcqa, hidden } kind = Kind::joint;
    Matrix<double> projection;  // for Kind::hidden

    double value(const ModelParams<double>& p) const {
        Rng rng(dropout_seed);
        switch (kind) {
            case Kind::joint: {
                const double pred = predict_joint(p, seqs[0], task, train_mode, &rng);
                return (pred - target) * (pred - target);
            }
            case Kind::components: {
                const double pred = predict_componentwise(p, std::span<const TokenSequence>(seqs), model.pooling,
                                                          model.aggregation, train_mode, &rng);
                return (pred - target) * (pred - target);
            }
            case Kind::mcqa: {
                const auto z = mcqa_logits(p, std::span<const TokenSequence>(seqs), task, train_mode, &rng);
                return loss_mcqa(std::vector<double>(z.begin(), z.end()), key);
            }
            case Kind::hidden: {
                const auto out = forward(p.encoder, seqs[0], task, train_mode, &rng);
                return (out.hidden.array() * projection.array()).sum();
            }
        }
        return 0.0;
    }

    void gradient(const ModelParams<double>& p, ModelParams<double>& g) const {
        Rng rng(dropout_seed);
        switch (kind) {
            case Kind::joint: {
                JointTape<double> tape;
                const double pred = predict_joint(p, seqs[0], task, train_mode, &rng, &tape);
                backward_joint(p, tape, 2.0 * (pred - target), g);
                return;
            }
            case Kind::components: {
                ComponentTape<double> tape;
                const double pred = predict_componentwise(p, std::span<const TokenSequence>(seqs), model.pooling,
                                                          model.aggregation, train_mode, &rng, &tape);
                backward_componentwise(p, tape, model.aggregation, 2.0 * (pred - target), g);
                return;
            }
            case Kind::mcqa: {
                McqaTape<double> tape;
                const auto z = mcqa_logits(p, std::span<const TokenSequence>(seqs), task, train_mode, &rng, &tape);
                const auto probs = softmax(std::vector<double>(z.begin(), z.end()));
                std::vector<double> d(z.size());
                for (std::size_t m = 0; m < z.size(); ++m) d[m] = probs[m] - (m == key ? 1.0 : 0.0);
                backward_mcqa(p, tape, std::span<const double>(d), g);
                return;
            }
            case Kind::hidden: {
                ForwardCache<double> cache;
                forward(p.encoder, seqs[0], task, train_mode, &rng, &cache);
                backward(p.encoder, cache, projection, g.encoder);
                return;
            }
        }
    }

    GradCheckResult check(const ModelParams<double>& p, double step = 1e-3, double floor = 1e-6) const {
        return grad_check(
            p, [this](const ModelParams<double>& q) { return value(q); },
            [this](const ModelParams<double>& q, ModelParams<double>& g) { gradient(q, g); }, step, floor);
    }
};

}  // namespace idm::test
