#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "idm/corpus.hpp"
#include "idm/encoder.hpp"

namespace idm {

enum class Method { dummy, joint, componentwise, mtl };
enum class Pooling { cls, mean };
enum class Aggregation { concat, mean };

const char* to_string(Method m);
Method parse_method(const std::string& s);
const char* to_string(Pooling p);
Pooling parse_pooling(const std::string& s);
const char* to_string(Aggregation a);
Aggregation parse_aggregation(const std::string& s);

inline constexpr std::size_t kRegressionTask = 0;
inline constexpr std::size_t kMcqaTask = 1;
inline constexpr std::size_t kComponents = 3;

struct ModelConfig {
    Method method = Method::joint;
    Pooling pooling = Pooling::cls;              // component-wise only
    Aggregation aggregation = Aggregation::concat;  // component-wise only
};

struct MtlConfig {
    double lambda = 0.05;
    std::uint64_t scheduler_seed = 0;

    void validate() const;
};

// Regression head input width for a method: C*d for concatenated components, d otherwise.
std::size_t regression_width(const ModelConfig& model, std::size_t hidden);

// Which tensor family a parameter belongs to; drives per-task optimiser updates.
enum class ParamGroup { encoder, task_cond, regression_head, classification_head };

template <typename Real>
struct ModelParams {
    EncoderParams<Real> encoder;
    Tensor<Real> reg_w, reg_b;  // g_psi
    Tensor<Real> clf_u, clf_b;  // f_xi, shared across options

    template <typename F>
    void for_each_tagged(F&& f) { visit_tagged(*this, f); }
    template <typename F>
    void for_each_tagged(F&& f) const { visit_tagged(*this, f); }
    template <typename F>
    void for_each(F&& f) {
        visit_tagged(*this, [&](auto& t, ParamGroup, std::size_t) { f(t); });
    }
    template <typename F>
    void for_each(F&& f) const {
        visit_tagged(*this, [&](auto& t, ParamGroup, std::size_t) { f(t); });
    }

    void zero() {
        for_each([](Tensor<Real>& t) { t.zero(); });
    }
    std::size_t parameter_count() const {
        std::size_t n = 0;
        for_each([&](const Tensor<Real>& t) { n += t.size(); });
        return n;
    }

private:
    template <typename Self, typename F>
    static void visit_tagged(Self& self, F&& f) {
        constexpr std::size_t none = 0;
        f(self.encoder.tok_emb, ParamGroup::encoder, none);
        f(self.encoder.pos_emb, ParamGroup::encoder, none);
        for (std::size_t t = 0; t < self.encoder.task_cond.size(); ++t) {
            f(self.encoder.task_cond[t], ParamGroup::task_cond, t);
        }
        for (auto& layer : self.encoder.layers) {
            layer.for_each([&](auto& x) { f(x, ParamGroup::encoder, none); });
        }
        f(self.encoder.lnf_g, ParamGroup::encoder, none);
        f(self.encoder.lnf_b, ParamGroup::encoder, none);
        f(self.reg_w, ParamGroup::regression_head, none);
        f(self.reg_b, ParamGroup::regression_head, none);
        f(self.clf_u, ParamGroup::classification_head, none);
        f(self.clf_b, ParamGroup::classification_head, none);
    }
};

template <typename Real>
ModelParams<Real> make_model_params(const EncoderConfig& config, std::size_t reg_width);

// Encoder from init_encoder; head weights N(0, 0.02) from a stream derived
// from the init seed, head biases zero.
template <typename Real>
ModelParams<Real> init_model(const EncoderConfig& config, const ModelConfig& model);

template <typename To, typename From>
ModelParams<To> cast_model(const ModelParams<From>& p) {
    ModelParams<To> out = make_model_params<To>(p.encoder.config, p.reg_w.size());
    std::vector<const Tensor<From>*> src;
    p.for_each([&](const Tensor<From>& t) { src.push_back(&t); });
    std::size_t i = 0;
    out.for_each([&](Tensor<To>& t) {
        const auto& s = *src[i++];
        for (std::size_t k = 0; k < t.size(); ++k) t.data[k] = static_cast<To>(s.data[k]);
    });
    return out;
}

// Pre-assembled inputs for one item; only what the method needs is filled.
struct EncodedItem {
    const Item* item = nullptr;
    double target = 0.0;
    std::size_t key = 0;
    TokenSequence joint;
    std::vector<TokenSequence> components;
    std::vector<TokenSequence> options;
};

EncodedItem encode_item(const Item& item, const Vocab& vocab, const AssemblyLimits& limits, Method method);

// ---------------------------------------------------------------------------
// Forward passes. Each returns the head output and, when a tape is given,
// records what the matching backward needs.

template <typename Real>
struct JointTape {
    ForwardCache<Real> cache;
    RowVector<Real> pooled;
};

template <typename Real>
struct ComponentTape {
    std::array<ForwardCache<Real>, kComponents> caches;
    std::array<Matrix<Real>, kComponents> pooling_weights;  // 1 x L row per component
    RowVector<Real> features;
};

template <typename Real>
struct McqaTape {
    std::vector<ForwardCache<Real>> caches;
    std::vector<RowVector<Real>> pooled;
};

// b = w . r + c with r the CLS state of the joint sequence.
template <typename Real>
Real predict_joint(const ModelParams<Real>& params, const TokenSequence& seq, std::optional<std::size_t> task,
                   bool train_mode, Rng* rng = nullptr, JointTape<Real>* tape = nullptr);

template <typename Real>
void backward_joint(const ModelParams<Real>& params, const JointTape<Real>& tape, Real d_pred,
                    ModelParams<Real>& grads);

template <typename Real>
Real predict_componentwise(const ModelParams<Real>& params, std::span<const TokenSequence> components,
                           Pooling pooling, Aggregation aggregation, bool train_mode, Rng* rng = nullptr,
                           ComponentTape<Real>* tape = nullptr);

template <typename Real>
void backward_componentwise(const ModelParams<Real>& params, const ComponentTape<Real>& tape,
                            Aggregation aggregation, Real d_pred, ModelParams<Real>& grads);

// z_m = u . r(opt_m) + e for every option sequence, conditioned on `task`.
template <typename Real>
std::vector<Real> mcqa_logits(const ModelParams<Real>& params, std::span<const TokenSequence> option_seqs,
                              std::optional<std::size_t> task, bool train_mode, Rng* rng = nullptr,
                              McqaTape<Real>* tape = nullptr);

template <typename Real>
void backward_mcqa(const ModelParams<Real>& params, const McqaTape<Real>& tape, std::span<const Real> d_logits,
                   ModelParams<Real>& grads);

// Eval-mode difficulty prediction for any trained method.
template <typename Real>
Real predict_difficulty(const ModelParams<Real>& params, const ModelConfig& model, const EncodedItem& item);

// Item-level conveniences that assemble the inputs first.
template <typename Real>
Real predict_joint(const ModelParams<Real>& params, const Item& item, const Vocab& vocab,
                   const AssemblyLimits& limits, std::optional<std::size_t> task = std::nullopt);
template <typename Real>
Real predict_componentwise(const ModelParams<Real>& params, const Item& item, const Vocab& vocab,
                           const AssemblyLimits& limits, Pooling pooling, Aggregation aggregation);
template <typename Real>
std::vector<Real> mcqa_logits(const ModelParams<Real>& params, const Item& item, const Vocab& vocab,
                              const AssemblyLimits& limits, std::size_t task = kMcqaTask);

// ---------------------------------------------------------------------------
// Losses

// Mean squared error.
double loss_reg(std::span<const double> predictions, std::span<const double> targets);

// Cross-entropy of the key under a max-shifted softmax.
double loss_mcqa(std::span<const double> logits, std::size_t key);

std::vector<double> softmax(std::span<const double> logits);

}  // namespace idm
