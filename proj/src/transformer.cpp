// Copyright 2026 Shield Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "shield/transformer.hpp"

#include "shield/error.hpp"
#include "shield/random.hpp"

#include <cmath>

namespace shield::mae {

namespace {

constexpr double kLayerNormEps = 1e-5;
const double kGeluC = std::sqrt(2.0 / M_PI);

double gelu(double x) { return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + 0.044715 * x * x * x))); }

double gelu_grad(double x) {
    const double t = std::tanh(kGeluC * (x + 0.044715 * x * x * x));
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * 0.044715 * x * x);
}

void softmax_rows(Matrix& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        auto row = m.row(r);
        const double mx = row.maxCoeff();
        row = (row.array() - mx).exp();
        row /= row.sum();
    }
}

}  // namespace

struct MaeNetwork::BlockCache {
    Matrix x;
    LayerNormCache ln1;
    Matrix a;
    Matrix qkv;
    std::vector<Matrix> probs;
    Matrix attn;
    Matrix y;
    LayerNormCache ln2;
    Matrix b;
    Matrix h1;
    Matrix g;
};

MaeNetwork::MaeNetwork(const ModelShape& shape) : shape_(shape) {
    if (shape_.vocab < 5) throw ConfigError("vocabulary too small for the model");
    if (shape_.dim == 0 || shape_.heads == 0 || shape_.dim % shape_.heads != 0) {
        throw ConfigError("model dim must be a positive multiple of the head count");
    }
    if (shape_.max_seq_len < 2) throw ConfigError("max_seq_len must be at least 2");
    tok_emb_ = add_slot("tok_emb", shape_.vocab, shape_.dim);
    pos_emb_ = add_slot("pos_emb", shape_.max_seq_len, shape_.dim);
    for (std::size_t l = 0; l < shape_.encoder_layers; ++l) encoder_.push_back(add_block("enc" + std::to_string(l)));
    enc_ln_g_ = add_slot("enc_ln_g", 1, shape_.dim);
    enc_ln_b_ = add_slot("enc_ln_b", 1, shape_.dim);
    decoder_ = add_block("dec");
    dec_ln_g_ = add_slot("dec_ln_g", 1, shape_.dim);
    dec_ln_b_ = add_slot("dec_ln_b", 1, shape_.dim);
    out_w_ = add_slot("out_w", shape_.dim, shape_.vocab);
    out_b_ = add_slot("out_b", 1, shape_.vocab);
    params_.assign(slots_.empty() ? 0 : slots_.back().offset + slots_.back().size(), 0.0);
}

std::size_t MaeNetwork::add_slot(const std::string& name, std::size_t rows, std::size_t cols) {
    const std::size_t offset = slots_.empty() ? 0 : slots_.back().offset + slots_.back().size();
    slots_.push_back(TensorSlot{name, offset, rows, cols});
    return slots_.size() - 1;
}

MaeNetwork::Block MaeNetwork::add_block(const std::string& p) {
    const std::size_t d = shape_.dim, f = shape_.ffn_dim;
    Block b{};
    b.ln1_g = add_slot(p + ".ln1_g", 1, d);
    b.ln1_b = add_slot(p + ".ln1_b", 1, d);
    b.w_qkv = add_slot(p + ".w_qkv", d, 3 * d);
    b.b_qkv = add_slot(p + ".b_qkv", 1, 3 * d);
    b.w_o = add_slot(p + ".w_o", d, d);
    b.b_o = add_slot(p + ".b_o", 1, d);
    b.ln2_g = add_slot(p + ".ln2_g", 1, d);
    b.ln2_b = add_slot(p + ".ln2_b", 1, d);
    b.w_1 = add_slot(p + ".w_1", d, f);
    b.b_1 = add_slot(p + ".b_1", 1, f);
    b.w_2 = add_slot(p + ".w_2", f, d);
    b.b_2 = add_slot(p + ".b_2", 1, d);
    return b;
}

void MaeNetwork::init_weights(std::uint64_t seed) {
    Rng rng(mix_seed(seed, 0x77656967ULL));
    for (const auto& s : slots_) {
        const bool is_gain = s.name.size() > 2 && s.name.compare(s.name.size() - 2, 2, "_g") == 0;
        const bool is_bias = s.rows == 1 && !is_gain;
        for (std::size_t i = 0; i < s.size(); ++i) {
            double& v = params_[s.offset + i];
            if (is_gain) {
                v = 1.0;
            } else if (is_bias) {
                v = 0.0;
            } else {
                v = rng.normal(0.0, 0.02);
            }
        }
    }
}

Eigen::Map<const Matrix> MaeNetwork::view(std::size_t slot) const {
    const auto& s = slots_[slot];
    return Eigen::Map<const Matrix>(params_.data() + s.offset, static_cast<Eigen::Index>(s.rows),
                                    static_cast<Eigen::Index>(s.cols));
}

Eigen::Map<Matrix> MaeNetwork::grad_view(std::vector<double>& grad, std::size_t slot) const {
    const auto& s = slots_[slot];
    return Eigen::Map<Matrix>(grad.data() + s.offset, static_cast<Eigen::Index>(s.rows),
                              static_cast<Eigen::Index>(s.cols));
}

Matrix MaeNetwork::layer_norm(const Matrix& x, std::size_t g, std::size_t b, LayerNormCache* cache) const {
    const auto n = static_cast<double>(x.cols());
    Matrix xhat(x.rows(), x.cols());
    Vector rstd(x.rows());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        const double mean = x.row(r).sum() / n;
        const double var = (x.row(r).array() - mean).square().sum() / n;
        rstd[r] = 1.0 / std::sqrt(var + kLayerNormEps);
        xhat.row(r) = (x.row(r).array() - mean) * rstd[r];
    }
    Matrix y = (xhat.array().rowwise() * view(g).row(0).array()).rowwise() + view(b).row(0).array();
    if (cache) {
        cache->xhat = std::move(xhat);
        cache->rstd = std::move(rstd);
    }
    return y;
}

Matrix MaeNetwork::layer_norm_backward(const Matrix& dy, std::size_t g, std::size_t b, const LayerNormCache& cache,
                                       std::vector<double>& grad) const {
    grad_view(grad, g).row(0) += (dy.array() * cache.xhat.array()).colwise().sum().matrix();
    grad_view(grad, b).row(0) += dy.colwise().sum();
    const Matrix dxhat = dy.array().rowwise() * view(g).row(0).array();
    const auto n = static_cast<double>(dy.cols());
    Matrix dx(dy.rows(), dy.cols());
    for (Eigen::Index r = 0; r < dy.rows(); ++r) {
        const double mean_d = dxhat.row(r).sum() / n;
        const double mean_dx = dxhat.row(r).dot(cache.xhat.row(r)) / n;
        dx.row(r) = (dxhat.row(r).array() - mean_d - cache.xhat.row(r).array() * mean_dx) * cache.rstd[r];
    }
    return dx;
}

Matrix MaeNetwork::block_forward(const Matrix& x, const Block& blk, BlockCache* cache) const {
    const auto L = x.rows();
    const auto d = static_cast<Eigen::Index>(shape_.dim);
    const auto heads = static_cast<Eigen::Index>(shape_.heads);
    const auto dh = d / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    LayerNormCache ln1;
    Matrix a = layer_norm(x, blk.ln1_g, blk.ln1_b, cache ? &ln1 : nullptr);
    Matrix qkv = a * view(blk.w_qkv);
    qkv.rowwise() += view(blk.b_qkv).row(0);

    Matrix attn(L, d);
    std::vector<Matrix> probs;
    for (Eigen::Index h = 0; h < heads; ++h) {
        Matrix p = qkv.middleCols(h * dh, dh) * qkv.middleCols(d + h * dh, dh).transpose() * scale;
        softmax_rows(p);
        attn.middleCols(h * dh, dh) = p * qkv.middleCols(2 * d + h * dh, dh);
        if (cache) probs.push_back(std::move(p));
    }
    Matrix y = x + attn * view(blk.w_o);
    y.rowwise() += view(blk.b_o).row(0);

    LayerNormCache ln2;
    Matrix bn = layer_norm(y, blk.ln2_g, blk.ln2_b, cache ? &ln2 : nullptr);
    Matrix h1 = bn * view(blk.w_1);
    h1.rowwise() += view(blk.b_1).row(0);
    Matrix g = h1.unaryExpr(&gelu);
    Matrix z = y + g * view(blk.w_2);
    z.rowwise() += view(blk.b_2).row(0);

    if (cache) {
        cache->x = x;
        cache->ln1 = std::move(ln1);
        cache->a = std::move(a);
        cache->qkv = std::move(qkv);
        cache->probs = std::move(probs);
        cache->attn = std::move(attn);
        cache->y = std::move(y);
        cache->ln2 = std::move(ln2);
        cache->b = std::move(bn);
        cache->h1 = std::move(h1);
        cache->g = std::move(g);
    }
    return z;
}

Matrix MaeNetwork::block_backward(const Matrix& dz, const Block& blk, const BlockCache& c,
                                  std::vector<double>& grad) const {
    const auto L = dz.rows();
    const auto d = static_cast<Eigen::Index>(shape_.dim);
    const auto heads = static_cast<Eigen::Index>(shape_.heads);
    const auto dh = d / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    // Feed-forward half.
    grad_view(grad, blk.w_2).noalias() += c.g.transpose() * dz;
    grad_view(grad, blk.b_2).row(0) += dz.colwise().sum();
    Matrix dg = dz * view(blk.w_2).transpose();
    Matrix dh1 = dg.array() * c.h1.unaryExpr(&gelu_grad).array();
    grad_view(grad, blk.w_1).noalias() += c.b.transpose() * dh1;
    grad_view(grad, blk.b_1).row(0) += dh1.colwise().sum();
    Matrix db = dh1 * view(blk.w_1).transpose();
    Matrix dy = dz + layer_norm_backward(db, blk.ln2_g, blk.ln2_b, c.ln2, grad);

    // Attention half.
    grad_view(grad, blk.w_o).noalias() += c.attn.transpose() * dy;
    grad_view(grad, blk.b_o).row(0) += dy.colwise().sum();
    Matrix dattn = dy * view(blk.w_o).transpose();
    Matrix dqkv(L, 3 * d);
    for (Eigen::Index h = 0; h < heads; ++h) {
        const auto q = c.qkv.middleCols(h * dh, dh);
        const auto k = c.qkv.middleCols(d + h * dh, dh);
        const auto v = c.qkv.middleCols(2 * d + h * dh, dh);
        const Matrix& p = c.probs[static_cast<std::size_t>(h)];
        const auto dout = dattn.middleCols(h * dh, dh);
        Matrix dp = dout * v.transpose();
        dqkv.middleCols(2 * d + h * dh, dh) = p.transpose() * dout;
        Matrix ds(L, L);
        for (Eigen::Index r = 0; r < L; ++r) {
            const double dot = dp.row(r).dot(p.row(r));
            ds.row(r) = p.row(r).array() * (dp.row(r).array() - dot);
        }
        ds *= scale;
        dqkv.middleCols(h * dh, dh) = ds * k;
        dqkv.middleCols(d + h * dh, dh) = ds.transpose() * q;
    }
    grad_view(grad, blk.w_qkv).noalias() += c.a.transpose() * dqkv;
    grad_view(grad, blk.b_qkv).row(0) += dqkv.colwise().sum();
    Matrix da = dqkv * view(blk.w_qkv).transpose();
    return dy + layer_norm_backward(da, blk.ln1_g, blk.ln1_b, c.ln1, grad);
}

Matrix MaeNetwork::embed_tokens(const std::vector<TokenId>& ids) const {
    const auto tok = view(tok_emb_);
    const auto pos = view(pos_emb_);
    Matrix x(static_cast<Eigen::Index>(ids.size()), static_cast<Eigen::Index>(shape_.dim));
    for (std::size_t j = 0; j < ids.size(); ++j) {
        x.row(static_cast<Eigen::Index>(j)) = tok.row(ids[j]) + pos.row(static_cast<Eigen::Index>(j));
    }
    return x;
}

Vector MaeNetwork::encode_summary(const std::vector<TokenId>& ids) const {
    Matrix x = embed_tokens(ids);
    for (const auto& blk : encoder_) x = block_forward(x, blk, nullptr);
    Matrix h = layer_norm(x.topRows(1), enc_ln_g_, enc_ln_b_, nullptr);
    return h.row(0).transpose();
}

LossParts MaeNetwork::loss(const MaeExample& ex) const { return run(ex, nullptr); }

LossParts MaeNetwork::loss_and_grad(const MaeExample& ex, std::vector<double>& grad) const {
    if (grad.size() != params_.size()) grad.assign(params_.size(), 0.0);
    return run(ex, &grad);
}

LossParts MaeNetwork::run(const MaeExample& ex, std::vector<double>* grad) const {
    const std::size_t len = ex.target.size();
    LossParts parts;
    if (len < 2) return parts;
    if (len > shape_.max_seq_len || ex.encoder_input.size() != len || ex.decoder_input.size() != len) {
        throw ConfigError("example length does not match the model");
    }
    const auto L = static_cast<Eigen::Index>(len);
    const auto d = static_cast<Eigen::Index>(shape_.dim);
    const auto out_w = view(out_w_);
    const auto out_b = view(out_b_).row(0);

    // Cross-entropy over selected rows of a hidden matrix; fills d(hidden).
    auto cross_entropy = [&](const Matrix& hidden, const std::vector<std::size_t>& rows, Matrix* dhidden) {
        if (rows.empty()) return 0.0;
        const auto k = static_cast<Eigen::Index>(rows.size());
        Matrix sel(k, d);
        for (Eigen::Index i = 0; i < k; ++i) sel.row(i) = hidden.row(static_cast<Eigen::Index>(rows[i]));
        Matrix logits = sel * out_w;
        logits.rowwise() += out_b;
        softmax_rows(logits);
        double total = 0.0;
        for (Eigen::Index i = 0; i < k; ++i) {
            const auto t = ex.target[rows[i]];
            total -= std::log(std::max(logits(i, t), 1e-300));
            logits(i, t) -= 1.0;
        }
        const double inv = 1.0 / static_cast<double>(k);
        if (dhidden) {
            logits *= inv;
            grad_view(*grad, out_w_).noalias() += sel.transpose() * logits;
            grad_view(*grad, out_b_).row(0) += logits.colwise().sum();
            Matrix dsel = logits * out_w.transpose();
            for (Eigen::Index i = 0; i < k; ++i) dhidden->row(static_cast<Eigen::Index>(rows[i])) += dsel.row(i);
        }
        return total * inv;
    };

    // Encoder and masked-token prediction.
    std::vector<BlockCache> enc_cache(encoder_.size());
    Matrix x = embed_tokens(ex.encoder_input);
    for (std::size_t l = 0; l < encoder_.size(); ++l) x = block_forward(x, encoder_[l], grad ? &enc_cache[l] : nullptr);
    LayerNormCache enc_ln;
    Matrix hn = layer_norm(x, enc_ln_g_, enc_ln_b_, grad ? &enc_ln : nullptr);
    Matrix dhn;
    if (grad) dhn = Matrix::Zero(L, d);
    parts.encoder = cross_entropy(hn, ex.encoder_masked, grad ? &dhn : nullptr);

    // Decoder: summary state at row 0, aggressively masked tokens after it.
    Matrix xd = embed_tokens(ex.decoder_input);
    xd.row(0) = hn.row(0) + view(pos_emb_).row(0);
    BlockCache dec_cache;
    Matrix z = block_forward(xd, decoder_, grad ? &dec_cache : nullptr);
    LayerNormCache dec_ln;
    Matrix hd = layer_norm(z, dec_ln_g_, dec_ln_b_, grad ? &dec_ln : nullptr);
    std::vector<std::size_t> all_rows(len - 1);
    for (std::size_t j = 1; j < len; ++j) all_rows[j - 1] = j;
    Matrix dhd;
    if (grad) dhd = Matrix::Zero(L, d);
    parts.decoder = cross_entropy(hd, all_rows, grad ? &dhd : nullptr);

    if (!grad) return parts;

    auto dtok = grad_view(*grad, tok_emb_);
    auto dpos = grad_view(*grad, pos_emb_);

    Matrix dz = layer_norm_backward(dhd, dec_ln_g_, dec_ln_b_, dec_ln, *grad);
    Matrix dxd = block_backward(dz, decoder_, dec_cache, *grad);
    dhn.row(0) += dxd.row(0);
    dpos.row(0) += dxd.row(0);
    for (Eigen::Index j = 1; j < L; ++j) {
        dtok.row(ex.decoder_input[static_cast<std::size_t>(j)]) += dxd.row(j);
        dpos.row(j) += dxd.row(j);
    }

    Matrix dx = layer_norm_backward(dhn, enc_ln_g_, enc_ln_b_, enc_ln, *grad);
    for (std::size_t l = encoder_.size(); l-- > 0;) dx = block_backward(dx, encoder_[l], enc_cache[l], *grad);
    for (Eigen::Index j = 0; j < L; ++j) {
        dtok.row(ex.encoder_input[static_cast<std::size_t>(j)]) += dx.row(j);
        dpos.row(j) += dx.row(j);
    }
    return parts;
}

}  // namespace shield::mae
