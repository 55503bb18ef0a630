#include "idm/encoder.hpp"

#include <cmath>
#include <limits>

namespace idm {

void EncoderConfig::validate() const {
    if (vocab_size < kNumSpecials) {
        throw ValidationError("encoder: vocab_size must cover the special tokens");
    }
    if (hidden == 0 || layers == 0 || heads == 0 || ff == 0 || max_len == 0) {
        throw ValidationError("encoder: sizes must be positive");
    }
    if (hidden % heads != 0) {
        throw ValidationError("encoder: hidden size must be divisible by heads");
    }
    if (!(dropout >= 0.0 && dropout < 1.0)) {
        throw ValidationError("encoder: dropout must lie in [0, 1)");
    }
}

nlohmann::ordered_json EncoderConfig::to_json() const {
    return {{"vocab_size", vocab_size}, {"hidden", hidden},   {"layers", layers},
            {"heads", heads},           {"ff", ff},           {"max_len", max_len},
            {"tasks", tasks},           {"dropout", dropout}, {"init_seed", init_seed}};
}

EncoderConfig EncoderConfig::from_json(const nlohmann::json& j) {
    EncoderConfig c;
    c.vocab_size = j.at("vocab_size").get<std::size_t>();
    c.hidden = j.at("hidden").get<std::size_t>();
    c.layers = j.at("layers").get<std::size_t>();
    c.heads = j.at("heads").get<std::size_t>();
    c.ff = j.at("ff").get<std::size_t>();
    c.max_len = j.at("max_len").get<std::size_t>();
    c.tasks = j.at("tasks").get<std::size_t>();
    c.dropout = j.at("dropout").get<double>();
    c.init_seed = j.at("init_seed").get<std::uint64_t>();
    return c;
}

template <typename Real>
EncoderParams<Real> make_encoder_params(const EncoderConfig& c) {
    c.validate();
    const auto d = c.hidden;
    EncoderParams<Real> p;
    p.config = c;
    p.tok_emb = Tensor<Real>("tok_emb", {c.vocab_size, d});
    p.pos_emb = Tensor<Real>("pos_emb", {c.max_len, d});
    for (std::size_t t = 0; t < c.tasks; ++t) {
        p.task_cond.emplace_back("task_cond." + std::to_string(t), std::vector<std::size_t>{d});
    }
    for (std::size_t l = 0; l < c.layers; ++l) {
        const std::string pre = "layer." + std::to_string(l) + ".";
        LayerParams<Real> lp;
        lp.ln1_g = Tensor<Real>(pre + "ln1.g", {d});
        lp.ln1_b = Tensor<Real>(pre + "ln1.b", {d});
        lp.wq = Tensor<Real>(pre + "attn.wq", {d, d});
        lp.bq = Tensor<Real>(pre + "attn.bq", {d});
        lp.wk = Tensor<Real>(pre + "attn.wk", {d, d});
        lp.bk = Tensor<Real>(pre + "attn.bk", {d});
        lp.wv = Tensor<Real>(pre + "attn.wv", {d, d});
        lp.bv = Tensor<Real>(pre + "attn.bv", {d});
        lp.wo = Tensor<Real>(pre + "attn.wo", {d, d});
        lp.bo = Tensor<Real>(pre + "attn.bo", {d});
        lp.ln2_g = Tensor<Real>(pre + "ln2.g", {d});
        lp.ln2_b = Tensor<Real>(pre + "ln2.b", {d});
        lp.w1 = Tensor<Real>(pre + "ff.w1", {d, c.ff});
        lp.b1 = Tensor<Real>(pre + "ff.b1", {c.ff});
        lp.w2 = Tensor<Real>(pre + "ff.w2", {c.ff, d});
        lp.b2 = Tensor<Real>(pre + "ff.b2", {d});
        p.layers.push_back(std::move(lp));
    }
    p.lnf_g = Tensor<Real>("lnf.g", {d});
    p.lnf_b = Tensor<Real>("lnf.b", {d});
    return p;
}

template <typename Real>
EncoderParams<Real> init_encoder(const EncoderConfig& c) {
    auto p = make_encoder_params<Real>(c);
    Rng rng(c.init_seed);
    auto normal = [&](Tensor<Real>& t) {
        for (auto& x : t.data) x = static_cast<Real>(0.02 * rng.normal());
    };
    auto ones = [](Tensor<Real>& t) { std::fill(t.data.begin(), t.data.end(), Real(1)); };
    normal(p.tok_emb);
    normal(p.pos_emb);
    for (auto& layer : p.layers) {
        ones(layer.ln1_g);
        ones(layer.ln2_g);
        for (Tensor<Real>* w : {&layer.wq, &layer.wk, &layer.wv, &layer.wo, &layer.w1, &layer.w2}) {
            normal(*w);
        }
    }
    ones(p.lnf_g);
    return p;
}

namespace {

constexpr double kLayerNormEps = 1e-5;

template <typename Real>
void layer_norm(const Matrix<Real>& x, const Tensor<Real>& gain, const Tensor<Real>& bias, Matrix<Real>& x_hat,
                ColVector<Real>& rstd, Matrix<Real>& y) {
    const auto rows = x.rows();
    const auto d = static_cast<Real>(x.cols());
    x_hat.resize(rows, x.cols());
    rstd.resize(rows);
    for (Eigen::Index i = 0; i < rows; ++i) {
        const Real mean = x.row(i).sum() / d;
        const auto centered = (x.row(i).array() - mean).matrix();
        const Real var = centered.squaredNorm() / d;
        rstd(i) = Real(1) / std::sqrt(var + static_cast<Real>(kLayerNormEps));
        x_hat.row(i) = centered * rstd(i);
    }
    y = (x_hat.array().rowwise() * gain.vec().array()).rowwise() + bias.vec().array();
}

template <typename Real>
Matrix<Real> layer_norm_backward(const Matrix<Real>& dy, const Matrix<Real>& x_hat, const ColVector<Real>& rstd,
                                 const Tensor<Real>& gain, Tensor<Real>& d_gain, Tensor<Real>& d_bias) {
    d_gain.vec() += dy.cwiseProduct(x_hat).colwise().sum();
    d_bias.vec() += dy.colwise().sum();
    const Matrix<Real> dx_hat = dy.array().rowwise() * gain.vec().array();
    Matrix<Real> dx(dy.rows(), dy.cols());
    const auto d = static_cast<Real>(dy.cols());
    for (Eigen::Index i = 0; i < dy.rows(); ++i) {
        const Real m1 = dx_hat.row(i).sum() / d;
        const Real m2 = dx_hat.row(i).dot(x_hat.row(i)) / d;
        dx.row(i) = rstd(i) * (dx_hat.row(i).array() - m1 - x_hat.row(i).array() * m2).matrix();
    }
    return dx;
}

template <typename Real>
Matrix<Real> linear(const Matrix<Real>& x, const Tensor<Real>& w, const Tensor<Real>& b) {
    Matrix<Real> y = x * w.mat();
    y.rowwise() += b.vec();
    return y;
}

// Accumulates weight/bias gradients and returns the input gradient.
template <typename Real>
Matrix<Real> linear_backward(const Matrix<Real>& x, const Matrix<Real>& dy, const Tensor<Real>& w, Tensor<Real>& dw,
                             Tensor<Real>& db) {
    dw.mat().noalias() += x.transpose() * dy;
    db.vec() += dy.colwise().sum();
    return dy * w.mat().transpose();
}

template <typename Real>
Real gelu(Real x) {
    return Real(0.5) * x * (Real(1) + std::erf(x * static_cast<Real>(M_SQRT1_2)));
}

template <typename Real>
Real gelu_grad(Real x) {
    const Real cdf = Real(0.5) * (Real(1) + std::erf(x * static_cast<Real>(M_SQRT1_2)));
    const Real pdf = std::exp(Real(-0.5) * x * x) * static_cast<Real>(0.3989422804014327);
    return cdf + x * pdf;
}

template <typename Real>
Matrix<Real> dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, Rng& rng) {
    Matrix<Real> mask(rows, cols);
    const auto keep = static_cast<Real>(1.0 / (1.0 - rate));
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j) {
            mask(i, j) = rng.uniform() < rate ? Real(0) : keep;
        }
    }
    return mask;
}

void check_inputs(const EncoderConfig& c, const TokenSequence& seq, std::optional<std::size_t> task) {
    if (seq.ids.empty()) {
        throw ValidationError("encoder: empty input sequence");
    }
    if (seq.ids.size() > c.max_len) {
        throw ValidationError("encoder: sequence length " + std::to_string(seq.ids.size()) + " exceeds max_len " +
                              std::to_string(c.max_len));
    }
    if (seq.ids.front() == kPad) {
        throw ValidationError("encoder: sequence starts with PAD");
    }
    for (auto id : seq.ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= c.vocab_size) {
            throw ValidationError("encoder: token id " + std::to_string(id) + " outside vocabulary of size " +
                                  std::to_string(c.vocab_size));
        }
    }
    if (task && *task >= c.tasks) {
        throw ValidationError("encoder: task id " + std::to_string(*task) + " out of range");
    }
}

}  // namespace

template <typename Real>
Matrix<Real> embed(const EncoderParams<Real>& params, const TokenSequence& seq, std::optional<std::size_t> task) {
    check_inputs(params.config, seq, task);
    const auto L = static_cast<Eigen::Index>(seq.ids.size());
    const auto d = static_cast<Eigen::Index>(params.config.hidden);
    Matrix<Real> x(L, d);
    const auto tok = params.tok_emb.mat();
    const auto pos = params.pos_emb.mat();
    for (Eigen::Index i = 0; i < L; ++i) {
        x.row(i) = tok.row(seq.ids[static_cast<std::size_t>(i)]) + pos.row(i);
    }
    if (task) {
        x.row(0) += params.task_cond[*task].vec();
    }
    return x;
}

template <typename Real>
EncoderOutput<Real> forward(const EncoderParams<Real>& params, const TokenSequence& seq,
                            std::optional<std::size_t> task, bool train_mode, Rng* rng, ForwardCache<Real>* cache) {
    const auto& c = params.config;
    const bool use_dropout = train_mode && c.dropout > 0.0;
    if (use_dropout && rng == nullptr) {
        throw ValidationError("encoder: train-mode forward needs a dropout generator");
    }
    Matrix<Real> x = embed(params, seq, task);
    const auto L = x.rows();
    const auto d = x.cols();
    const auto heads = static_cast<Eigen::Index>(c.heads);
    const auto dh = d / heads;
    const Real scale = Real(1) / std::sqrt(static_cast<Real>(dh));

    std::vector<bool> key_ok(static_cast<std::size_t>(L));
    for (Eigen::Index j = 0; j < L; ++j) key_ok[static_cast<std::size_t>(j)] = seq.ids[static_cast<std::size_t>(j)] != kPad;

    ForwardCache<Real> local;
    ForwardCache<Real>& fc = cache ? *cache : local;
    fc = ForwardCache<Real>{};
    fc.ids = seq.ids;
    fc.task = task;
    fc.hidden = c.hidden;

    if (use_dropout) {
        fc.drop_emb = dropout_mask<Real>(L, d, c.dropout, *rng);
        x = x.cwiseProduct(fc.drop_emb);
    }

    fc.layers.resize(params.layers.size());
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        const auto& lp = params.layers[l];
        auto& lc = fc.layers[l];
        lc.x_in = x;
        layer_norm(x, lp.ln1_g, lp.ln1_b, lc.a_hat, lc.rstd1, lc.a);
        lc.q = linear(lc.a, lp.wq, lp.bq);
        lc.k = linear(lc.a, lp.wk, lp.bk);
        lc.v = linear(lc.a, lp.wv, lp.bv);
        lc.ctx.resize(L, d);
        lc.probs.resize(static_cast<std::size_t>(heads));
        for (Eigen::Index h = 0; h < heads; ++h) {
            Matrix<Real> scores = lc.q.middleCols(h * dh, dh) * lc.k.middleCols(h * dh, dh).transpose();
            scores *= scale;
            for (Eigen::Index i = 0; i < L; ++i) {
                Real mx = -std::numeric_limits<Real>::infinity();
                for (Eigen::Index j = 0; j < L; ++j) {
                    if (key_ok[static_cast<std::size_t>(j)]) mx = std::max(mx, scores(i, j));
                }
                Real sum = 0;
                for (Eigen::Index j = 0; j < L; ++j) {
                    const Real e = key_ok[static_cast<std::size_t>(j)] ? std::exp(scores(i, j) - mx) : Real(0);
                    scores(i, j) = e;
                    sum += e;
                }
                scores.row(i) /= sum;
            }
            lc.ctx.middleCols(h * dh, dh).noalias() = scores * lc.v.middleCols(h * dh, dh);
            lc.probs[static_cast<std::size_t>(h)] = std::move(scores);
        }
        Matrix<Real> attn_out = linear(lc.ctx, lp.wo, lp.bo);
        if (use_dropout) {
            lc.drop_attn = dropout_mask<Real>(L, d, c.dropout, *rng);
            attn_out = attn_out.cwiseProduct(lc.drop_attn);
        }
        lc.x_mid = x + attn_out;

        layer_norm(lc.x_mid, lp.ln2_g, lp.ln2_b, lc.f_hat, lc.rstd2, lc.f);
        lc.u = linear(lc.f, lp.w1, lp.b1);
        lc.g = lc.u.unaryExpr([](Real v) { return gelu(v); });
        Matrix<Real> ff_out = linear(lc.g, lp.w2, lp.b2);
        if (use_dropout) {
            lc.drop_ff = dropout_mask<Real>(L, d, c.dropout, *rng);
            ff_out = ff_out.cwiseProduct(lc.drop_ff);
        }
        x = lc.x_mid + ff_out;
    }

    EncoderOutput<Real> out;
    layer_norm(x, params.lnf_g, params.lnf_b, fc.hf_hat, fc.rstdf, out.hidden);
    out.pooled = out.hidden.row(0);
    return out;
}

template <typename Real>
void backward(const EncoderParams<Real>& params, const ForwardCache<Real>& fc, const Matrix<Real>& d_hidden,
              EncoderParams<Real>& grads) {
    const auto& c = params.config;
    const auto L = static_cast<Eigen::Index>(fc.ids.size());
    const auto d = static_cast<Eigen::Index>(c.hidden);
    if (fc.hidden != c.hidden || fc.layers.size() != params.layers.size() || fc.hf_hat.rows() != L ||
        grads.layers.size() != params.layers.size() || grads.config.hidden != c.hidden) {
        throw ValidationError("encoder backward: cache does not match the parameter configuration");
    }
    if (d_hidden.rows() != L || d_hidden.cols() != d) {
        throw ValidationError("encoder backward: output gradient has the wrong shape");
    }
    const auto heads = static_cast<Eigen::Index>(c.heads);
    const auto dh = d / heads;
    const Real scale = Real(1) / std::sqrt(static_cast<Real>(dh));

    Matrix<Real> dx = layer_norm_backward(d_hidden, fc.hf_hat, fc.rstdf, params.lnf_g, grads.lnf_g, grads.lnf_b);

    for (std::size_t li = params.layers.size(); li-- > 0;) {
        const auto& lp = params.layers[li];
        auto& lg = grads.layers[li];
        const auto& lc = fc.layers[li];

        // feed-forward block
        Matrix<Real> dy = lc.drop_ff.size() ? Matrix<Real>(dx.cwiseProduct(lc.drop_ff)) : dx;
        Matrix<Real> dg = linear_backward(lc.g, dy, lp.w2, lg.w2, lg.b2);
        Matrix<Real> du(dg.rows(), dg.cols());
        for (Eigen::Index i = 0; i < du.rows(); ++i)
            for (Eigen::Index j = 0; j < du.cols(); ++j) du(i, j) = dg(i, j) * gelu_grad(lc.u(i, j));
        Matrix<Real> df = linear_backward(lc.f, du, lp.w1, lg.w1, lg.b1);
        Matrix<Real> dx_mid = dx + layer_norm_backward(df, lc.f_hat, lc.rstd2, lp.ln2_g, lg.ln2_g, lg.ln2_b);

        // attention block
        Matrix<Real> d_attn = lc.drop_attn.size() ? Matrix<Real>(dx_mid.cwiseProduct(lc.drop_attn)) : dx_mid;
        Matrix<Real> d_ctx = linear_backward(lc.ctx, d_attn, lp.wo, lg.wo, lg.bo);
        Matrix<Real> dq(L, d), dk(L, d), dv(L, d);
        for (Eigen::Index h = 0; h < heads; ++h) {
            const auto& P = lc.probs[static_cast<std::size_t>(h)];
            const auto dctx_h = d_ctx.middleCols(h * dh, dh);
            Matrix<Real> dP = dctx_h * lc.v.middleCols(h * dh, dh).transpose();
            dv.middleCols(h * dh, dh).noalias() = P.transpose() * dctx_h;
            ColVector<Real> row_dot = (dP.cwiseProduct(P)).rowwise().sum();
            Matrix<Real> dS = P.cwiseProduct(dP.colwise() - row_dot) * scale;
            dq.middleCols(h * dh, dh).noalias() = dS * lc.k.middleCols(h * dh, dh);
            dk.middleCols(h * dh, dh).noalias() = dS.transpose() * lc.q.middleCols(h * dh, dh);
        }
        Matrix<Real> da = linear_backward(lc.a, dq, lp.wq, lg.wq, lg.bq);
        da += linear_backward(lc.a, dk, lp.wk, lg.wk, lg.bk);
        da += linear_backward(lc.a, dv, lp.wv, lg.wv, lg.bv);
        dx = dx_mid + layer_norm_backward(da, lc.a_hat, lc.rstd1, lp.ln1_g, lg.ln1_g, lg.ln1_b);
    }

    if (fc.drop_emb.size()) {
        dx = dx.cwiseProduct(fc.drop_emb);
    }
    auto d_tok = grads.tok_emb.mat();
    auto d_pos = grads.pos_emb.mat();
    for (Eigen::Index i = 0; i < L; ++i) {
        d_tok.row(fc.ids[static_cast<std::size_t>(i)]) += dx.row(i);
        d_pos.row(i) += dx.row(i);
    }
    if (fc.task) {
        grads.task_cond[*fc.task].vec() += dx.row(0);
    }
}

#define IDM_INSTANTIATE_ENCODER(Real)                                                                          \
    template EncoderParams<Real> make_encoder_params<Real>(const EncoderConfig&);                              \
    template EncoderParams<Real> init_encoder<Real>(const EncoderConfig&);                                     \
    template Matrix<Real> embed<Real>(const EncoderParams<Real>&, const TokenSequence&, std::optional<std::size_t>); \
    template EncoderOutput<Real> forward<Real>(const EncoderParams<Real>&, const TokenSequence&,              \
                                               std::optional<std::size_t>, bool, Rng*, ForwardCache<Real>*);  \
    template void backward<Real>(const EncoderParams<Real>&, const ForwardCache<Real>&, const Matrix<Real>&,  \
                                 EncoderParams<Real>&);

IDM_INSTANTIATE_ENCODER(float)
IDM_INSTANTIATE_ENCODER(double)

}  // namespace idm
