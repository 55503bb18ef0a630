#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "idm/corpus.hpp"
#include "idm/util.hpp"
#include "json.hpp"

namespace idm {

template <typename Real>
using Matrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Real>
using RowVector = Eigen::Matrix<Real, 1, Eigen::Dynamic>;
template <typename Real>
using ColVector = Eigen::Matrix<Real, Eigen::Dynamic, 1>;

// Storage aligned like Eigen's own allocations. Vectorised reductions peel a
// scalar prefix up to the first aligned element, so heap-dependent alignment
// would change summation order from run to run.
template <typename Real>
using AlignedVector = std::vector<Real, Eigen::aligned_allocator<Real>>;

// Named dense tensor; 1-D tensors are stored as a single row.
template <typename Real>
struct Tensor {
    std::string name;
    std::vector<std::size_t> shape;
    AlignedVector<Real> data;

    Tensor() = default;
    Tensor(std::string n, std::vector<std::size_t> s) : name(std::move(n)), shape(std::move(s)) {
        data.assign(rows() * cols(), Real(0));
    }

    std::size_t rows() const { return shape.size() == 1 ? 1 : shape[0]; }
    std::size_t cols() const { return shape.size() == 1 ? shape[0] : shape[1]; }
    std::size_t size() const { return data.size(); }

    Eigen::Map<Matrix<Real>> mat() {
        return {data.data(), static_cast<Eigen::Index>(rows()), static_cast<Eigen::Index>(cols())};
    }
    Eigen::Map<const Matrix<Real>> mat() const {
        return {data.data(), static_cast<Eigen::Index>(rows()), static_cast<Eigen::Index>(cols())};
    }
    Eigen::Map<RowVector<Real>> vec() { return {data.data(), static_cast<Eigen::Index>(data.size())}; }
    Eigen::Map<const RowVector<Real>> vec() const { return {data.data(), static_cast<Eigen::Index>(data.size())}; }

    void zero() { std::fill(data.begin(), data.end(), Real(0)); }
};

struct EncoderConfig {
    std::size_t vocab_size = 0;
    std::size_t hidden = 64;
    std::size_t layers = 2;
    std::size_t heads = 4;
    std::size_t ff = 128;
    std::size_t max_len = 256;
    std::size_t tasks = 2;
    double dropout = 0.1;
    std::uint64_t init_seed = 0;

    void validate() const;
    nlohmann::ordered_json to_json() const;
    static EncoderConfig from_json(const nlohmann::json& j);
    bool operator==(const EncoderConfig&) const = default;
};

template <typename Real>
struct LayerParams {
    Tensor<Real> ln1_g, ln1_b;
    Tensor<Real> wq, bq, wk, bk, wv, bv, wo, bo;
    Tensor<Real> ln2_g, ln2_b;
    Tensor<Real> w1, b1, w2, b2;

    template <typename F>
    void for_each(F&& f) {
        for (Tensor<Real>* t : {&ln1_g, &ln1_b, &wq, &bq, &wk, &bk, &wv, &bv, &wo, &bo, &ln2_g, &ln2_b, &w1, &b1, &w2,
                                &b2}) {
            f(*t);
        }
    }
    template <typename F>
    void for_each(F&& f) const {
        for (const Tensor<Real>* t : {&ln1_g, &ln1_b, &wq, &bq, &wk, &bk, &wv, &bv, &wo, &bo, &ln2_g, &ln2_b, &w1,
                                      &b1, &w2, &b2}) {
            f(*t);
        }
    }
};

// All encoder weights plus the task-conditioning matrix Z, kept as one
// tensor per row so each task's row can be updated on its own.
template <typename Real>
struct EncoderParams {
    EncoderConfig config;
    Tensor<Real> tok_emb;
    Tensor<Real> pos_emb;
    std::vector<Tensor<Real>> task_cond;
    std::vector<LayerParams<Real>> layers;
    Tensor<Real> lnf_g, lnf_b;

    template <typename F>
    void for_each(F&& f) {
        f(tok_emb);
        f(pos_emb);
        for (auto& z : task_cond) f(z);
        for (auto& layer : layers) layer.for_each(f);
        f(lnf_g);
        f(lnf_b);
    }
    template <typename F>
    void for_each(F&& f) const {
        f(tok_emb);
        f(pos_emb);
        for (const auto& z : task_cond) f(z);
        for (const auto& layer : layers) layer.for_each(f);
        f(lnf_g);
        f(lnf_b);
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for_each([&](const Tensor<Real>& t) { n += t.size(); });
        return n;
    }
};

// Shapes and names only, all values zero.
template <typename Real>
EncoderParams<Real> make_encoder_params(const EncoderConfig& config);

// N(0, 0.02) weights, unit layer-norm gains, zero biases, Z = 0.
template <typename Real>
EncoderParams<Real> init_encoder(const EncoderConfig& config);

template <typename To, typename From>
EncoderParams<To> cast_params(const EncoderParams<From>& p) {
    EncoderParams<To> out = make_encoder_params<To>(p.config);
    std::vector<const Tensor<From>*> src;
    p.for_each([&](const Tensor<From>& t) { src.push_back(&t); });
    std::size_t i = 0;
    out.for_each([&](Tensor<To>& t) {
        const auto& s = *src[i++];
        for (std::size_t k = 0; k < t.size(); ++k) t.data[k] = static_cast<To>(s.data[k]);
    });
    return out;
}

template <typename Real>
struct EncoderOutput {
    Matrix<Real> hidden;    // L x d
    RowVector<Real> pooled;  // row 0 of hidden (the CLS slot)
};

template <typename Real>
struct LayerCache {
    Matrix<Real> x_in;
    Matrix<Real> a_hat, a;
    ColVector<Real> rstd1;
    Matrix<Real> q, k, v;
    std::vector<Matrix<Real>> probs;  // one L x L matrix per head
    Matrix<Real> ctx;
    Matrix<Real> drop_attn;
    Matrix<Real> x_mid;
    Matrix<Real> f_hat, f;
    ColVector<Real> rstd2;
    Matrix<Real> u, g;
    Matrix<Real> drop_ff;
};

// Everything the reverse pass needs, including the dropout masks drawn.
template <typename Real>
struct ForwardCache {
    std::vector<std::int32_t> ids;
    std::optional<std::size_t> task;
    std::size_t hidden = 0;
    Matrix<Real> drop_emb;
    std::vector<LayerCache<Real>> layers;
    Matrix<Real> hf_hat;
    ColVector<Real> rstdf;
};

// Token + position embedding with z_task added at position 0.
template <typename Real>
Matrix<Real> embed(const EncoderParams<Real>& params, const TokenSequence& seq, std::optional<std::size_t> task);

// `rng` supplies dropout masks and is only consulted in train mode.
template <typename Real>
EncoderOutput<Real> forward(const EncoderParams<Real>& params, const TokenSequence& seq,
                            std::optional<std::size_t> task, bool train_mode, Rng* rng = nullptr,
                            ForwardCache<Real>* cache = nullptr);

// Accumulates parameter gradients for d(objective)/d(hidden) into `grads`.
template <typename Real>
void backward(const EncoderParams<Real>& params, const ForwardCache<Real>& cache, const Matrix<Real>& d_hidden,
              EncoderParams<Real>& grads);

}  // namespace idm
