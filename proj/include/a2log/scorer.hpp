#pragma once

// Transformer-encoder anomaly scorer. A token-id sequence is embedded,
// enriched with sinusoidal positions and passed through post-norm encoder
// layers; the anomaly score is the Euclidean norm of the output vector at the
// [CLS] position. Forward and reverse passes are written out by hand over
// row-major Eigen matrices, one row per token of a micro-batch.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "a2log/error.hpp"
#include "a2log/random.hpp"
#include "a2log/tokenizer.hpp"

namespace a2log {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVec = Eigen::Matrix<double, 1, Eigen::Dynamic>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

struct EncoderConfig {
    std::size_t u = 20;
    std::size_t d = 128;
    std::size_t ff_hidden = 256;
    std::size_t n_layers = 2;
    std::size_t n_heads = 4;
    double dropout = 0.05;
    std::uint64_t seed = 0;

    void validate() const
    {
        if (u < 2) throw ConfigError("encoder: sequence length u must be >= 2");
        if (d == 0 || d % 2 != 0) throw ConfigError("encoder: embedding dimension d must be even and positive");
        if (n_heads == 0 || d % n_heads != 0) throw ConfigError("encoder: d must be divisible by n_heads");
        if (ff_hidden == 0) throw ConfigError("encoder: ff_hidden must be positive");
        if (n_layers == 0) throw ConfigError("encoder: at least one layer is required");
        if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("encoder: dropout must lie in [0, 1)");
    }

    friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

struct TensorSpec {
    std::string name;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::size_t offset = 0;

    std::size_t size() const noexcept { return rows * cols; }
    friend bool operator==(const TensorSpec&, const TensorSpec&) = default;
};

/// Per-layer tensor order inside the flat parameter vector.
enum LayerTensor : std::size_t {
    wq, bq, wk, bk, wv, bv, wo, bo, ln1_gain, ln1_offset, w1, b1, w2, b2, ln2_gain, ln2_offset,
    layer_tensor_count
};

inline std::vector<TensorSpec> parameter_layout(const EncoderConfig& cfg, std::size_t vocab_size)
{
    std::vector<TensorSpec> out;
    std::size_t offset = 0;
    auto add = [&](std::string name, std::size_t r, std::size_t c) {
        out.push_back({std::move(name), r, c, offset});
        offset += r * c;
    };
    add("embedding", vocab_size, cfg.d);
    const std::size_t d = cfg.d;
    const std::size_t h = cfg.ff_hidden;
    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
        const std::string p = "layer" + std::to_string(l) + ".";
        add(p + "attn.wq", d, d);
        add(p + "attn.bq", 1, d);
        add(p + "attn.wk", d, d);
        add(p + "attn.bk", 1, d);
        add(p + "attn.wv", d, d);
        add(p + "attn.bv", 1, d);
        add(p + "attn.wo", d, d);
        add(p + "attn.bo", 1, d);
        add(p + "norm1.gain", 1, d);
        add(p + "norm1.offset", 1, d);
        add(p + "ff.w1", d, h);
        add(p + "ff.b1", 1, h);
        add(p + "ff.w2", h, d);
        add(p + "ff.b2", 1, d);
        add(p + "norm2.gain", 1, d);
        add(p + "norm2.offset", 1, d);
    }
    return out;
}

/// Flat parameter storage with a name/shape directory. Gradients share the
/// same type and layout.
struct ModelParameters {
    EncoderConfig config;
    std::size_t vocab_size = 0;
    std::vector<TensorSpec> layout;
    std::vector<double> values;

    static ModelParameters zeros(const EncoderConfig& cfg, std::size_t vocab_size)
    {
        ModelParameters p;
        p.config = cfg;
        p.vocab_size = vocab_size;
        p.layout = parameter_layout(cfg, vocab_size);
        p.values.assign(p.layout.back().offset + p.layout.back().size(), 0.0);
        return p;
    }

    static ModelParameters zeros_like(const ModelParameters& other)
    {
        ModelParameters p;
        p.config = other.config;
        p.vocab_size = other.vocab_size;
        p.layout = other.layout;
        p.values.assign(other.values.size(), 0.0);
        return p;
    }

    std::size_t layer_index(std::size_t layer, LayerTensor t) const noexcept
    {
        return 1 + layer * layer_tensor_count + t;
    }

    MatMap tensor(std::size_t i)
    {
        const auto& s = layout[i];
        return MatMap(values.data() + s.offset, static_cast<Eigen::Index>(s.rows), static_cast<Eigen::Index>(s.cols));
    }
    ConstMatMap tensor(std::size_t i) const
    {
        const auto& s = layout[i];
        return ConstMatMap(values.data() + s.offset, static_cast<Eigen::Index>(s.rows),
                           static_cast<Eigen::Index>(s.cols));
    }
    MatMap layer(std::size_t l, LayerTensor t) { return tensor(layer_index(l, t)); }
    ConstMatMap layer(std::size_t l, LayerTensor t) const { return tensor(layer_index(l, t)); }
    MatMap embedding() { return tensor(0); }
    ConstMatMap embedding() const { return tensor(0); }

    bool all_finite() const
    {
        return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
    }
};

inline double xavier_bound(std::size_t fan_in, std::size_t fan_out)
{
    return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

/// Xavier-uniform weights, zero biases and offsets, unit gains.
inline ModelParameters init_parameters(const EncoderConfig& cfg, std::size_t vocab_size)
{
    cfg.validate();
    if (vocab_size < special::all.size())
        throw ConfigError("vocabulary must contain the " + std::to_string(special::all.size()) + " reserved tokens");
    auto p = ModelParameters::zeros(cfg, vocab_size);
    Rng rng(derive_seed(cfg.seed, "encoder/init"));
    for (std::size_t i = 0; i < p.layout.size(); ++i) {
        const auto& spec = p.layout[i];
        auto m = p.tensor(i);
        if (spec.name.ends_with(".gain")) {
            m.setOnes();
        } else if (spec.rows > 1) {
            const double bound = xavier_bound(spec.rows, spec.cols);
            for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = rng.uniform(-bound, bound);
        }
    }
    return p;
}

/// Sinusoidal position table, u x d.
inline RowMat positional_encoding(std::size_t u, std::size_t d)
{
    if (d == 0 || d % 2 != 0) throw ConfigError("positional encoding needs an even dimension");
    RowMat pe(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(d));
    for (std::size_t pos = 0; pos < u; ++pos) {
        for (std::size_t i = 0; i < d; i += 2) {
            const double angle =
                static_cast<double>(pos) / std::pow(10000.0, static_cast<double>(i) / static_cast<double>(d));
            pe(pos, i) = std::sin(angle);
            pe(pos, i + 1) = std::cos(angle);
        }
    }
    return pe;
}

enum class Mode { train, eval };

/// Encoded, framed sequence with its training class: 0 for the target
/// service, 1 for the stabilization class.
struct EncodedSequence {
    std::vector<TokenId> ids;
    int label = 0;
};

inline std::vector<std::vector<TokenId>> ids_of(std::span<const EncodedSequence> seqs)
{
    std::vector<std::vector<TokenId>> out;
    out.reserve(seqs.size());
    for (const auto& s : seqs) out.push_back(s.ids);
    return out;
}

struct ScoreOutput {
    RowVec z;
    double score = 0.0;
};

namespace detail {

inline constexpr double layer_norm_eps = 1e-5;

/// Activations of one encoder layer. Layers compute outputs either for all
/// u positions (`nq == u`) or, for the last layer, only for the [CLS]
/// position (`nq == 1`); "selected" rows are the first nq rows of every
/// sequence.
struct LayerCache {
    std::size_t nq = 0;
    RowMat x_in;   // m*u x d
    RowMat x_sel;  // m*nq x d, only filled when nq < u
    RowMat q;      // m*nq x d
    RowMat k, v;   // m*u x d
    RowMat heads;  // m*nq x d
    std::vector<RowMat> probs; // m*n_heads matrices of nq x u
    RowMat attn, attn_mask, xhat1, h1, pre, hidden, ff, ff_mask, xhat2, out;
    Eigen::VectorXd inv_std1, inv_std2;

    const RowMat& selected() const { return x_sel.size() ? x_sel : x_in; }
};

struct BackwardScratch {
    RowMat dout, dr2, dff, dhidden, dh1, dr1, dattn, dheads, dq, dk, dv, dx, dxhat;
    RowMat da, ds;
};

} // namespace detail

/// Reusable activation storage for forward/backward passes. Keeping one per
/// worker avoids reallocating every buffer for each micro-batch.
struct Workspace {
    std::size_t m = 0;
    std::vector<TokenId> ids;
    std::vector<detail::LayerCache> layers;
    detail::BackwardScratch scratch;
    RowMat pe;
};

namespace detail {

inline void layer_norm(const RowMat& x, ConstMatMap gain, ConstMatMap offset, RowMat& xhat,
                       Eigen::VectorXd& inv_std, RowMat& y)
{
    const auto d = static_cast<double>(x.cols());
    xhat.resize(x.rows(), x.cols());
    inv_std.resize(x.rows());
    y.resize(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        const double mean = x.row(r).sum() / d;
        xhat.row(r).array() = x.row(r).array() - mean;
        const double var = xhat.row(r).squaredNorm() / d;
        inv_std(r) = 1.0 / std::sqrt(var + layer_norm_eps);
        xhat.row(r) *= inv_std(r);
        y.row(r).array() = xhat.row(r).array() * gain.row(0).array() + offset.row(0).array();
    }
}

/// Writes dL/dx into `dx`; accumulates gain/offset gradients.
inline void layer_norm_backward(const RowMat& dy, const RowMat& xhat, const Eigen::VectorXd& inv_std,
                                ConstMatMap gain, MatMap dgain, MatMap doffset, RowMat& dxhat, RowMat& dx)
{
    dxhat.resize(dy.rows(), dy.cols());
    const auto d = static_cast<double>(dy.cols());
    dx.resize(dy.rows(), dy.cols());
    auto dg = dgain.row(0);
    auto db = doffset.row(0);
    for (Eigen::Index r = 0; r < dy.rows(); ++r) {
        dg.array() += dy.row(r).array() * xhat.row(r).array();
        db += dy.row(r);
        dxhat.row(r).array() = dy.row(r).array() * gain.row(0).array();
        const double mean_dxhat = dxhat.row(r).sum() / d;
        const double mean_dxhat_xhat = dxhat.row(r).dot(xhat.row(r)) / d;
        dx.row(r).array() =
            inv_std(r) * (dxhat.row(r).array() - mean_dxhat - xhat.row(r).array() * mean_dxhat_xhat);
    }
}

inline void dropout_mask(RowMat& mask, Eigen::Index rows, Eigen::Index cols, double rate, Rng& rng)
{
    mask.resize(rows, cols);
    const double keep_scale = 1.0 / (1.0 - rate);
    for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = rng.uniform() < rate ? 0.0 : keep_scale;
}

/// dst = src * w + bias (bias broadcast over rows).
template <class Src>
inline void affine(RowMat& dst, const Src& src, ConstMatMap w, ConstMatMap bias)
{
    dst.resize(src.rows(), w.cols());
    dst.noalias() = src * w;
    dst.rowwise() += bias.row(0);
}

/// dst.row(0) += column sums of `m`, walking rows so access stays contiguous.
inline void add_column_sums(MatMap dst, const RowMat& m)
{
    auto acc = dst.row(0);
    for (Eigen::Index r = 0; r < m.rows(); ++r) acc += m.row(r);
}

inline void check_finite(const RowMat& m, const std::string& where)
{
    if (!m.allFinite()) throw NumericError("non-finite values in " + where);
}

} // namespace detail

/// Runs the encoder on `m = ids.size() / u` sequences and returns the m x d
/// matrix of [CLS] outputs. Dropout is applied only in train mode, with masks
/// drawn from `dropout_seed`. The workspace keeps the activations needed by
/// `backward_batch`.
inline const RowMat& forward_batch(const ModelParameters& params, std::span<const TokenId> ids, Mode mode,
                                   std::uint64_t dropout_seed, Workspace& ws)
{
    const auto& cfg = params.config;
    const std::size_t u = cfg.u;
    const std::size_t d = cfg.d;
    if (ids.size() % u != 0) throw ConfigError("token id batch is not a multiple of the sequence length");
    const std::size_t m = ids.size() / u;
    const std::size_t heads = cfg.n_heads;
    const std::size_t dh = d / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    const bool drop = mode == Mode::train && cfg.dropout > 0.0;
    Rng rng(dropout_seed);

    for (std::size_t s = 0; s < m; ++s) {
        bool any_key = false;
        for (std::size_t j = 0; j < u; ++j) {
            const TokenId id = ids[s * u + j];
            if (id < 0 || static_cast<std::size_t>(id) >= params.vocab_size)
                throw ConfigError("token id " + std::to_string(id) + " outside vocabulary of size " +
                                  std::to_string(params.vocab_size));
            any_key = any_key || id != special::pad_id;
        }
        if (!any_key) throw ConfigError("sequence consists only of [PAD] tokens");
    }

    if (ws.pe.rows() != static_cast<Eigen::Index>(u) || ws.pe.cols() != static_cast<Eigen::Index>(d))
        ws.pe = positional_encoding(u, d);
    ws.m = m;
    ws.ids.assign(ids.begin(), ids.end());
    ws.layers.resize(cfg.n_layers);

    const auto emb = params.embedding();
    const auto rows = static_cast<Eigen::Index>(m * u);
    const auto ui = static_cast<Eigen::Index>(u);
    const auto dhi = static_cast<Eigen::Index>(dh);
    auto& first = ws.layers[0].x_in;
    first.resize(rows, static_cast<Eigen::Index>(d));
    for (Eigen::Index r = 0; r < rows; ++r)
        first.row(r) = emb.row(ids[static_cast<std::size_t>(r)]) + ws.pe.row(r % ui);

    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
        auto& lc = ws.layers[l];
        const bool last = l + 1 == cfg.n_layers;
        lc.nq = last ? 1 : u;
        const auto nq = static_cast<Eigen::Index>(lc.nq);
        const auto sel_rows = static_cast<Eigen::Index>(m * lc.nq);
        if (lc.nq < u) {
            lc.x_sel.resize(sel_rows, static_cast<Eigen::Index>(d));
            for (std::size_t s = 0; s < m; ++s)
                lc.x_sel.middleRows(static_cast<Eigen::Index>(s) * nq, nq) =
                    lc.x_in.middleRows(static_cast<Eigen::Index>(s * u), nq);
        } else {
            lc.x_sel.resize(0, 0);
        }
        const RowMat& xs = lc.selected();

        detail::affine(lc.q, xs, params.layer(l, wq), params.layer(l, bq));
        detail::affine(lc.k, lc.x_in, params.layer(l, wk), params.layer(l, bk));
        detail::affine(lc.v, lc.x_in, params.layer(l, wv), params.layer(l, bv));
        lc.heads.resize(sel_rows, static_cast<Eigen::Index>(d));
        lc.probs.resize(m * heads);
        for (std::size_t s = 0; s < m; ++s) {
            const auto r0 = static_cast<Eigen::Index>(s * u);
            const auto q0 = static_cast<Eigen::Index>(s) * nq;
            for (std::size_t h = 0; h < heads; ++h) {
                const auto c0 = static_cast<Eigen::Index>(h * dh);
                RowMat& a = lc.probs[s * heads + h];
                a.resize(nq, ui);
                a.noalias() = lc.q.block(q0, c0, nq, dhi).lazyProduct(lc.k.block(r0, c0, ui, dhi).transpose());
                a *= scale;
                for (std::size_t j = 0; j < u; ++j)
                    if (ids[s * u + j] == special::pad_id)
                        a.col(static_cast<Eigen::Index>(j)).setConstant(-std::numeric_limits<double>::infinity());
                for (Eigen::Index i = 0; i < nq; ++i) {
                    const double mx = a.row(i).maxCoeff();
                    a.row(i) = (a.row(i).array() - mx).exp();
                    a.row(i) /= a.row(i).sum();
                }
                lc.heads.block(q0, c0, nq, dhi).noalias() = a.lazyProduct(lc.v.block(r0, c0, ui, dhi));
            }
        }
        detail::affine(lc.attn, lc.heads, params.layer(l, wo), params.layer(l, bo));
        if (drop) {
            detail::dropout_mask(lc.attn_mask, sel_rows, lc.attn.cols(), cfg.dropout, rng);
            lc.attn.array() *= lc.attn_mask.array();
        }
        lc.attn += xs;
        detail::layer_norm(lc.attn, params.layer(l, ln1_gain), params.layer(l, ln1_offset), lc.xhat1, lc.inv_std1,
                           lc.h1);

        detail::affine(lc.pre, lc.h1, params.layer(l, w1), params.layer(l, b1));
        lc.hidden = lc.pre.cwiseMax(0.0);
        detail::affine(lc.ff, lc.hidden, params.layer(l, w2), params.layer(l, b2));
        if (drop) {
            detail::dropout_mask(lc.ff_mask, sel_rows, lc.ff.cols(), cfg.dropout, rng);
            lc.ff.array() *= lc.ff_mask.array();
        }
        lc.ff += lc.h1;
        RowMat& next = last ? lc.out : ws.layers[l + 1].x_in;
        detail::layer_norm(lc.ff, params.layer(l, ln2_gain), params.layer(l, ln2_offset), lc.xhat2, lc.inv_std2,
                           next);
    }
    return ws.layers.back().out;
}

inline RowMat forward_batch(const ModelParameters& params, std::span<const TokenId> ids, Mode mode,
                            std::uint64_t dropout_seed = 0)
{
    Workspace ws;
    return forward_batch(params, ids, mode, dropout_seed, ws);
}

/// Accumulates into `grads` the gradient of a scalar loss whose derivative
/// with respect to the [CLS] outputs of the last forward pass is `dz` (m x d).
inline void backward_batch(const ModelParameters& params, Workspace& ws, const RowMat& dz, ModelParameters& grads,
                           Mode mode)
{
    const auto& cfg = params.config;
    const std::size_t u = cfg.u;
    const std::size_t d = cfg.d;
    const std::size_t m = ws.m;
    const std::size_t heads = cfg.n_heads;
    const std::size_t dh = d / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    const bool drop = mode == Mode::train && cfg.dropout > 0.0;
    const auto rows = static_cast<Eigen::Index>(m * u);
    const auto ui = static_cast<Eigen::Index>(u);
    const auto dhi = static_cast<Eigen::Index>(dh);
    auto& g = ws.scratch;

    g.dout = dz;
    for (std::size_t li = cfg.n_layers; li-- > 0;) {
        const auto& lc = ws.layers[li];
        const auto nq = static_cast<Eigen::Index>(lc.nq);
        const auto sel_rows = static_cast<Eigen::Index>(m * lc.nq);
        const std::string where = "layer " + std::to_string(li);

        // Feed-forward block.
        detail::layer_norm_backward(g.dout, lc.xhat2, lc.inv_std2, params.layer(li, ln2_gain),
                                    grads.layer(li, ln2_gain), grads.layer(li, ln2_offset), g.dxhat, g.dr2);
        g.dff = g.dr2;
        if (drop) g.dff.array() *= lc.ff_mask.array();
        grads.layer(li, w2).noalias() += lc.hidden.transpose() * g.dff;
        detail::add_column_sums(grads.layer(li, b2), g.dff);
        g.dhidden.resize(sel_rows, static_cast<Eigen::Index>(cfg.ff_hidden));
        g.dhidden.noalias() = g.dff * params.layer(li, w2).transpose();
        g.dhidden.array() *= (lc.pre.array() > 0.0).cast<double>();
        grads.layer(li, w1).noalias() += lc.h1.transpose() * g.dhidden;
        detail::add_column_sums(grads.layer(li, b1), g.dhidden);
        g.dh1 = g.dr2;
        g.dh1.noalias() += g.dhidden * params.layer(li, w1).transpose();
        detail::check_finite(g.dh1, where + " feed-forward");

        // Attention block.
        detail::layer_norm_backward(g.dh1, lc.xhat1, lc.inv_std1, params.layer(li, ln1_gain),
                                    grads.layer(li, ln1_gain), grads.layer(li, ln1_offset), g.dxhat, g.dr1);
        g.dattn = g.dr1;
        if (drop) g.dattn.array() *= lc.attn_mask.array();
        grads.layer(li, wo).noalias() += lc.heads.transpose() * g.dattn;
        detail::add_column_sums(grads.layer(li, bo), g.dattn);
        g.dheads.resize(sel_rows, static_cast<Eigen::Index>(d));
        g.dheads.noalias() = g.dattn * params.layer(li, wo).transpose();

        g.dq.resize(sel_rows, static_cast<Eigen::Index>(d));
        g.dk.resize(rows, static_cast<Eigen::Index>(d));
        g.dv.resize(rows, static_cast<Eigen::Index>(d));
        for (std::size_t s = 0; s < m; ++s) {
            const auto r0 = static_cast<Eigen::Index>(s * u);
            const auto q0 = static_cast<Eigen::Index>(s) * nq;
            for (std::size_t h = 0; h < heads; ++h) {
                const auto c0 = static_cast<Eigen::Index>(h * dh);
                const RowMat& a = lc.probs[s * heads + h];
                const auto dout = g.dheads.block(q0, c0, nq, dhi);
                g.dv.block(r0, c0, ui, dhi).noalias() = a.transpose().lazyProduct(dout);
                g.da.resize(nq, ui);
                g.da.noalias() = dout.lazyProduct(lc.v.block(r0, c0, ui, dhi).transpose());
                g.ds.resize(nq, ui);
                for (Eigen::Index i = 0; i < nq; ++i) {
                    const double row_dot = g.da.row(i).dot(a.row(i));
                    g.ds.row(i).array() = a.row(i).array() * (g.da.row(i).array() - row_dot) * scale;
                }
                g.dq.block(q0, c0, nq, dhi).noalias() = g.ds.lazyProduct(lc.k.block(r0, c0, ui, dhi));
                g.dk.block(r0, c0, ui, dhi).noalias() = g.ds.transpose().lazyProduct(lc.q.block(q0, c0, nq, dhi));
            }
        }
        const RowMat& xs = lc.selected();
        grads.layer(li, wq).noalias() += xs.transpose() * g.dq;
        detail::add_column_sums(grads.layer(li, bq), g.dq);
        grads.layer(li, wk).noalias() += lc.x_in.transpose() * g.dk;
        detail::add_column_sums(grads.layer(li, bk), g.dk);
        grads.layer(li, wv).noalias() += lc.x_in.transpose() * g.dv;
        detail::add_column_sums(grads.layer(li, bv), g.dv);

        // Gradient of the layer input; selected rows also receive the
        // residual and query paths.
        g.dx.resize(rows, static_cast<Eigen::Index>(d));
        g.dx.noalias() = g.dk * params.layer(li, wk).transpose();
        g.dx.noalias() += g.dv * params.layer(li, wv).transpose();
        g.dr1.noalias() += g.dq * params.layer(li, wq).transpose();
        for (std::size_t s = 0; s < m; ++s)
            g.dx.middleRows(static_cast<Eigen::Index>(s * u), nq) +=
                g.dr1.middleRows(static_cast<Eigen::Index>(s) * nq, nq);
        detail::check_finite(g.dx, where + " attention");
        std::swap(g.dout, g.dx);
    }

    auto demb = grads.embedding();
    for (Eigen::Index r = 0; r < rows; ++r) demb.row(ws.ids[static_cast<std::size_t>(r)]) += g.dout.row(r);
}

/// Score of a single framed sequence.
inline ScoreOutput forward_score(std::span<const TokenId> ids, const ModelParameters& params, Mode mode,
                                 std::uint64_t dropout_seed = 0)
{
    if (ids.size() != params.config.u)
        throw ConfigError("sequence length " + std::to_string(ids.size()) + " does not match u=" +
                          std::to_string(params.config.u));
    ScoreOutput out;
    out.z = forward_batch(params, ids, mode, dropout_seed).row(0);
    out.score = out.z.norm();
    return out;
}

/// Eval-mode scores of many sequences, processed in chunks. With
/// `threads > 1` contiguous shards are scored concurrently. Shards start on
/// chunk boundaries, so every sequence lands in the same chunk whatever the
/// thread count and the scores are bit-identical. A different `chunk` may
/// change the last bits, since the matrix kernels depend on the row count.
inline std::vector<double> score_sequences(const ModelParameters& params,
                                           std::span<const std::vector<TokenId>> sequences,
                                           std::size_t threads = 1, std::size_t chunk = 128)
{
    std::vector<double> scores(sequences.size());
    const std::size_t u = params.config.u;
    auto work = [&](std::size_t begin, std::size_t end) {
        Workspace ws;
        std::vector<TokenId> flat;
        for (std::size_t s = begin; s < end; s += chunk) {
            const std::size_t e = std::min(end, s + chunk);
            flat.clear();
            for (std::size_t i = s; i < e; ++i) {
                if (sequences[i].size() != u) throw ConfigError("sequence length does not match encoder u");
                flat.insert(flat.end(), sequences[i].begin(), sequences[i].end());
            }
            const RowMat& z = forward_batch(params, flat, Mode::eval, 0, ws);
            for (std::size_t i = s; i < e; ++i) scores[i] = z.row(static_cast<Eigen::Index>(i - s)).norm();
        }
    };
    threads = std::max<std::size_t>(1, std::min(threads, sequences.size() / chunk + 1));
    if (threads == 1) {
        work(0, sequences.size());
        return scores;
    }
    std::vector<std::exception_ptr> errors(threads);
    {
        std::vector<std::jthread> pool;
        const std::size_t n_chunks = (sequences.size() + chunk - 1) / chunk;
        const std::size_t per = (n_chunks + threads - 1) / threads * chunk;
        for (std::size_t t = 0; t < threads; ++t) {
            const std::size_t b = std::min(sequences.size(), t * per);
            const std::size_t e = std::min(sequences.size(), b + per);
            pool.emplace_back([&, t, b, e] {
                try {
                    work(b, e);
                } catch (...) {
                    errors[t] = std::current_exception();
                }
            });
        }
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return scores;
}

// ---------------------------------------------------------------------------
// Hyperspherical loss

inline constexpr double log_floor = 1e-12;

/// Per-sample loss: ||z||^2 for normal targets (y = 0) and
/// -log(1 - exp(-||z||^2)) for the stabilization class (y = 1).
inline double hyperspherical_term(double norm_sq, int label)
{
    if (label == 0) return norm_sq;
    return -std::log(std::max(-std::expm1(-norm_sq), log_floor));
}

/// d(term)/d(norm_sq).
inline double hyperspherical_term_slope(double norm_sq, int label)
{
    if (label == 0) return 1.0;
    if (-std::expm1(-norm_sq) <= log_floor) return 0.0;
    return -1.0 / std::expm1(norm_sq);
}

inline double hyperspherical_loss(std::span<const double> scores, std::span<const int> labels)
{
    if (scores.empty()) throw ConfigError("loss of an empty batch is undefined");
    if (scores.size() != labels.size()) throw ConfigError("scores and labels differ in length");
    double total = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) total += hyperspherical_term(scores[i] * scores[i], labels[i]);
    return total / static_cast<double>(scores.size());
}

struct LossAndGradient {
    double loss = 0.0;
    ModelParameters gradient;
};

/// Mean hyperspherical loss of a batch and its exact gradient with respect
/// to every parameter. `sequences` are framed token-id sequences of length u.
inline LossAndGradient loss_and_gradient(const ModelParameters& params,
                                         std::span<const std::vector<TokenId>> sequences,
                                         std::span<const int> labels, Mode mode, std::uint64_t dropout_seed,
                                         Workspace& ws, std::size_t micro_batch = 64)
{
    if (sequences.empty()) throw ConfigError("loss of an empty batch is undefined");
    if (sequences.size() != labels.size()) throw ConfigError("sequences and labels differ in length");
    LossAndGradient out{0.0, ModelParameters::zeros_like(params)};
    const double inv_n = 1.0 / static_cast<double>(sequences.size());
    std::vector<TokenId> flat;
    RowMat dz;
    std::size_t chunk_index = 0;
    for (std::size_t s = 0; s < sequences.size(); s += micro_batch, ++chunk_index) {
        const std::size_t e = std::min(sequences.size(), s + micro_batch);
        flat.clear();
        for (std::size_t i = s; i < e; ++i) {
            if (sequences[i].size() != params.config.u) throw ConfigError("sequence length does not match encoder u");
            flat.insert(flat.end(), sequences[i].begin(), sequences[i].end());
        }
        const RowMat& z = forward_batch(params, flat, mode, derive_seed(dropout_seed, chunk_index), ws);
        dz.resize(z.rows(), z.cols());
        for (std::size_t i = s; i < e; ++i) {
            const auto r = static_cast<Eigen::Index>(i - s);
            const double q = z.row(r).squaredNorm();
            const double term = hyperspherical_term(q, labels[i]);
            if (!std::isfinite(term)) throw NumericError("non-finite loss term at batch position " + std::to_string(i));
            out.loss += term * inv_n;
            dz.row(r) = (2.0 * hyperspherical_term_slope(q, labels[i]) * inv_n) * z.row(r);
        }
        backward_batch(params, ws, dz, out.gradient, mode);
    }
    return out;
}

inline LossAndGradient loss_and_gradient(const ModelParameters& params,
                                         std::span<const std::vector<TokenId>> sequences,
                                         std::span<const int> labels, Mode mode = Mode::eval,
                                         std::uint64_t dropout_seed = 0)
{
    Workspace ws;
    return loss_and_gradient(params, sequences, labels, mode, dropout_seed, ws);
}

} // namespace a2log
