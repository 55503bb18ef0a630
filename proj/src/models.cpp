#include "idm/models.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace idm {

const char* to_string(Method m) {
    switch (m) {
        case Method::dummy: return "dummy";
        case Method::joint: return "joint";
        case Method::componentwise: return "componentwise";
        case Method::mtl: return "mtl";
    }
    return "?";
}

Method parse_method(const std::string& s) {
    if (s == "dummy") return Method::dummy;
    if (s == "joint") return Method::joint;
    if (s == "componentwise") return Method::componentwise;
    if (s == "mtl") return Method::mtl;
    throw ValidationError("unknown method '" + s + "' (expected joint, componentwise, mtl or dummy)");
}

const char* to_string(Pooling p) { return p == Pooling::cls ? "cls" : "mean"; }

Pooling parse_pooling(const std::string& s) {
    if (s == "cls") return Pooling::cls;
    if (s == "mean") return Pooling::mean;
    throw ValidationError("unknown pooling '" + s + "'");
}

const char* to_string(Aggregation a) { return a == Aggregation::concat ? "concat" : "mean"; }

Aggregation parse_aggregation(const std::string& s) {
    if (s == "concat") return Aggregation::concat;
    if (s == "mean") return Aggregation::mean;
    throw ValidationError("unknown aggregation '" + s + "'");
}

void MtlConfig::validate() const {
    if (!(lambda > 0.0) || !std::isfinite(lambda)) {
        throw ValidationError("mtl: lambda must be positive");
    }
}

std::size_t regression_width(const ModelConfig& model, std::size_t hidden) {
    if (model.method == Method::componentwise && model.aggregation == Aggregation::concat) {
        return kComponents * hidden;
    }
    return hidden;
}

template <typename Real>
ModelParams<Real> make_model_params(const EncoderConfig& config, std::size_t reg_width) {
    ModelParams<Real> p;
    p.encoder = make_encoder_params<Real>(config);
    p.reg_w = Tensor<Real>("head.reg.w", {reg_width});
    p.reg_b = Tensor<Real>("head.reg.b", {1});
    p.clf_u = Tensor<Real>("head.clf.u", {config.hidden});
    p.clf_b = Tensor<Real>("head.clf.b", {1});
    return p;
}

template <typename Real>
ModelParams<Real> init_model(const EncoderConfig& config, const ModelConfig& model) {
    auto p = make_model_params<Real>(config, regression_width(model, config.hidden));
    p.encoder = init_encoder<Real>(config);
    Rng rng(mix_seed(config.init_seed, "heads"));
    for (auto& x : p.reg_w.data) x = static_cast<Real>(0.02 * rng.normal());
    for (auto& x : p.clf_u.data) x = static_cast<Real>(0.02 * rng.normal());
    return p;
}

EncodedItem encode_item(const Item& item, const Vocab& vocab, const AssemblyLimits& limits, Method method) {
    EncodedItem e;
    e.item = &item;
    e.target = item.difficulty;
    e.key = static_cast<std::size_t>(item.key);
    if (method == Method::joint || method == Method::mtl) {
        e.joint = assemble_joint(item, vocab, limits.max_len);
    }
    if (method == Method::componentwise) {
        e.components = assemble_components(item, vocab, limits.max_len, limits.passage_max_len);
    }
    if (method == Method::mtl) {
        for (std::size_t m = 0; m < item.options.size(); ++m) {
            e.options.push_back(assemble_mcqa(item, vocab, limits.max_len, m));
        }
    }
    return e;
}

namespace {

// 1 x L weights that turn hidden states into the pooled vector.
template <typename Real>
Matrix<Real> pooling_weights(const TokenSequence& seq, Pooling pooling) {
    Matrix<Real> w = Matrix<Real>::Zero(1, static_cast<Eigen::Index>(seq.size()));
    if (pooling == Pooling::cls) {
        w(0, 0) = Real(1);
    } else {
        const auto n = seq.content_length();
        for (std::size_t i = 0; i < n; ++i) w(0, static_cast<Eigen::Index>(i)) = Real(1) / static_cast<Real>(n);
    }
    return w;
}

template <typename Real>
Real head(const Tensor<Real>& w, const Tensor<Real>& b, const RowVector<Real>& x) {
    if (static_cast<std::size_t>(x.size()) != w.size()) {
        throw ValidationError("head width " + std::to_string(w.size()) + " does not match input width " +
                              std::to_string(x.size()));
    }
    return w.vec().dot(x) + b.data[0];
}

template <typename Real>
Matrix<Real> cls_gradient(const ForwardCache<Real>& cache, const RowVector<Real>& d_pooled) {
    Matrix<Real> d = Matrix<Real>::Zero(static_cast<Eigen::Index>(cache.ids.size()), d_pooled.size());
    d.row(0) = d_pooled;
    return d;
}

}  // namespace

template <typename Real>
Real predict_joint(const ModelParams<Real>& params, const TokenSequence& seq, std::optional<std::size_t> task,
                   bool train_mode, Rng* rng, JointTape<Real>* tape) {
    ForwardCache<Real>* cache = tape ? &tape->cache : nullptr;
    const auto out = forward(params.encoder, seq, task, train_mode, rng, cache);
    if (tape) {
        tape->pooled = out.pooled;
    }
    return head(params.reg_w, params.reg_b, out.pooled);
}

template <typename Real>
void backward_joint(const ModelParams<Real>& params, const JointTape<Real>& tape, Real d_pred,
                    ModelParams<Real>& grads) {
    grads.reg_w.vec() += d_pred * tape.pooled;
    grads.reg_b.data[0] += d_pred;
    const RowVector<Real> d_pooled = d_pred * params.reg_w.vec();
    backward(params.encoder, tape.cache, cls_gradient(tape.cache, d_pooled), grads.encoder);
}

template <typename Real>
Real predict_componentwise(const ModelParams<Real>& params, std::span<const TokenSequence> components,
                           Pooling pooling, Aggregation aggregation, bool train_mode, Rng* rng,
                           ComponentTape<Real>* tape) {
    if (components.size() != kComponents) {
        throw ValidationError("component-wise input needs exactly 3 sequences");
    }
    const auto d = static_cast<Eigen::Index>(params.encoder.config.hidden);
    const auto expected = aggregation == Aggregation::concat ? kComponents * params.encoder.config.hidden
                                                             : params.encoder.config.hidden;
    if (params.reg_w.size() != expected) {
        throw ValidationError("component-wise head width " + std::to_string(params.reg_w.size()) + " != " +
                              std::to_string(expected));
    }
    RowVector<Real> features = RowVector<Real>::Zero(aggregation == Aggregation::concat ? 3 * d : d);
    for (std::size_t j = 0; j < kComponents; ++j) {
        ForwardCache<Real>* cache = tape ? &tape->caches[j] : nullptr;
        const auto out = forward(params.encoder, components[j], std::nullopt, train_mode, rng, cache);
        Matrix<Real> weights = pooling_weights<Real>(components[j], pooling);
        const RowVector<Real> r = weights * out.hidden;
        if (aggregation == Aggregation::concat) {
            features.segment(static_cast<Eigen::Index>(j) * d, d) = r;
        } else {
            features += r / static_cast<Real>(kComponents);
        }
        if (tape) {
            tape->pooling_weights[j] = std::move(weights);
        }
    }
    if (tape) {
        tape->features = features;
    }
    return head(params.reg_w, params.reg_b, features);
}

template <typename Real>
void backward_componentwise(const ModelParams<Real>& params, const ComponentTape<Real>& tape,
                            Aggregation aggregation, Real d_pred, ModelParams<Real>& grads) {
    grads.reg_w.vec() += d_pred * tape.features;
    grads.reg_b.data[0] += d_pred;
    const RowVector<Real> d_features = d_pred * params.reg_w.vec();
    const auto d = static_cast<Eigen::Index>(params.encoder.config.hidden);
    for (std::size_t j = 0; j < kComponents; ++j) {
        const RowVector<Real> d_r = aggregation == Aggregation::concat
                                        ? RowVector<Real>(d_features.segment(static_cast<Eigen::Index>(j) * d, d))
                                        : RowVector<Real>(d_features / static_cast<Real>(kComponents));
        const Matrix<Real> d_hidden = tape.pooling_weights[j].transpose() * d_r;
        backward(params.encoder, tape.caches[j], d_hidden, grads.encoder);
    }
}

template <typename Real>
std::vector<Real> mcqa_logits(const ModelParams<Real>& params, std::span<const TokenSequence> option_seqs,
                              std::optional<std::size_t> task, bool train_mode, Rng* rng, McqaTape<Real>* tape) {
    if (option_seqs.empty()) {
        throw ValidationError("mcqa: no option sequences");
    }
    std::vector<Real> logits;
    logits.reserve(option_seqs.size());
    if (tape) {
        tape->caches.assign(option_seqs.size(), {});
        tape->pooled.assign(option_seqs.size(), {});
    }
    for (std::size_t m = 0; m < option_seqs.size(); ++m) {
        ForwardCache<Real>* cache = tape ? &tape->caches[m] : nullptr;
        const auto out = forward(params.encoder, option_seqs[m], task, train_mode, rng, cache);
        logits.push_back(head(params.clf_u, params.clf_b, out.pooled));
        if (tape) {
            tape->pooled[m] = out.pooled;
        }
    }
    return logits;
}

template <typename Real>
void backward_mcqa(const ModelParams<Real>& params, const McqaTape<Real>& tape, std::span<const Real> d_logits,
                   ModelParams<Real>& grads) {
    if (d_logits.size() != tape.caches.size()) {
        throw ValidationError("mcqa backward: logit gradient count mismatch");
    }
    for (std::size_t m = 0; m < d_logits.size(); ++m) {
        const Real dz = d_logits[m];
        grads.clf_u.vec() += dz * tape.pooled[m];
        grads.clf_b.data[0] += dz;
        const RowVector<Real> d_pooled = dz * params.clf_u.vec();
        backward(params.encoder, tape.caches[m], cls_gradient(tape.caches[m], d_pooled), grads.encoder);
    }
}

template <typename Real>
Real predict_difficulty(const ModelParams<Real>& params, const ModelConfig& model, const EncodedItem& item) {
    switch (model.method) {
        case Method::joint:
            return predict_joint(params, item.joint, std::nullopt, false);
        case Method::mtl:
            return predict_joint(params, item.joint, std::optional<std::size_t>(kRegressionTask), false);
        case Method::componentwise:
            return predict_componentwise(params, std::span<const TokenSequence>(item.components), model.pooling,
                                         model.aggregation, false);
        case Method::dummy:
            break;
    }
    throw ValidationError("predict_difficulty: the dummy method has no network");
}

template <typename Real>
Real predict_joint(const ModelParams<Real>& params, const Item& item, const Vocab& vocab,
                   const AssemblyLimits& limits, std::optional<std::size_t> task) {
    return predict_joint(params, assemble_joint(item, vocab, limits.max_len), task, false);
}

template <typename Real>
Real predict_componentwise(const ModelParams<Real>& params, const Item& item, const Vocab& vocab,
                           const AssemblyLimits& limits, Pooling pooling, Aggregation aggregation) {
    const auto comps = assemble_components(item, vocab, limits.max_len, limits.passage_max_len);
    return predict_componentwise(params, std::span<const TokenSequence>(comps), pooling, aggregation, false);
}

template <typename Real>
std::vector<Real> mcqa_logits(const ModelParams<Real>& params, const Item& item, const Vocab& vocab,
                              const AssemblyLimits& limits, std::size_t task) {
    std::vector<TokenSequence> seqs;
    for (std::size_t m = 0; m < item.options.size(); ++m) {
        seqs.push_back(assemble_mcqa(item, vocab, limits.max_len, m));
    }
    return mcqa_logits(params, std::span<const TokenSequence>(seqs), std::optional<std::size_t>(task), false);
}

#define IDM_INSTANTIATE_MODELS(Real)                                                                               \
    template ModelParams<Real> make_model_params<Real>(const EncoderConfig&, std::size_t);                       \
    template ModelParams<Real> init_model<Real>(const EncoderConfig&, const ModelConfig&);                       \
    template Real predict_joint<Real>(const ModelParams<Real>&, const TokenSequence&, std::optional<std::size_t>, \
                                      bool, Rng*, JointTape<Real>*);                                              \
    template void backward_joint<Real>(const ModelParams<Real>&, const JointTape<Real>&, Real, ModelParams<Real>&); \
    template Real predict_componentwise<Real>(const ModelParams<Real>&, std::span<const TokenSequence>, Pooling,  \
                                              Aggregation, bool, Rng*, ComponentTape<Real>*);                     \
    template void backward_componentwise<Real>(const ModelParams<Real>&, const ComponentTape<Real>&, Aggregation, \
                                               Real, ModelParams<Real>&);                                         \
    template std::vector<Real> mcqa_logits<Real>(const ModelParams<Real>&, std::span<const TokenSequence>,        \
                                                 std::optional<std::size_t>, bool, Rng*, McqaTape<Real>*);        \
    template void backward_mcqa<Real>(const ModelParams<Real>&, const McqaTape<Real>&, std::span<const Real>,     \
                                      ModelParams<Real>&);                                                        \
    template Real predict_difficulty<Real>(const ModelParams<Real>&, const ModelConfig&, const EncodedItem&);     \
    template Real predict_joint<Real>(const ModelParams<Real>&, const Item&, const Vocab&, const AssemblyLimits&, \
                                      std::optional<std::size_t>);                                                \
    template Real predict_componentwise<Real>(const ModelParams<Real>&, const Item&, const Vocab&,                \
                                              const AssemblyLimits&, Pooling, Aggregation);                       \
    template std::vector<Real> mcqa_logits<Real>(const ModelParams<Real>&, const Item&, const Vocab&,             \
                                                 const AssemblyLimits&, std::size_t);

IDM_INSTANTIATE_MODELS(float)
IDM_INSTANTIATE_MODELS(double)

// ---------------------------------------------------------------------------

double loss_reg(std::span<const double> predictions, std::span<const double> targets) {
    if (predictions.size() != targets.size()) {
        throw ValidationError("loss_reg: length mismatch");
    }
    if (predictions.empty()) {
        throw ValidationError("loss_reg: no predictions");
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const double r = predictions[i] - targets[i];
        sum += r * r;
    }
    return sum / static_cast<double>(predictions.size());
}

std::vector<double> softmax(std::span<const double> logits) {
    for (double z : logits) {
        if (!std::isfinite(z)) {
            throw NumericError("softmax: non-finite logit");
        }
    }
    const double mx = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - mx);
        sum += p[i];
    }
    for (auto& x : p) x /= sum;
    return p;
}

double loss_mcqa(std::span<const double> logits, std::size_t key) {
    if (key >= logits.size()) {
        throw ValidationError("loss_mcqa: key out of range");
    }
    for (double z : logits) {
        if (!std::isfinite(z)) {
            throw NumericError("loss_mcqa: non-finite logit");
        }
    }
    const double mx = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double z : logits) sum += std::exp(z - mx);
    return std::log(sum) - (logits[key] - mx);
}

}  // namespace idm
