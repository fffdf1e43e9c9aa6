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

#pragma once

#include "shield/tokenizer.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace shield::mae {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

struct ModelShape {
    std::size_t vocab = 0;
    std::size_t dim = 128;
    std::size_t encoder_layers = 4;
    std::size_t heads = 4;
    std::size_t ffn_dim = 512;
    std::size_t max_seq_len = 128;
};

// Location of one parameter tensor inside the flat parameter buffer.
struct TensorSlot {
    std::string name;
    std::size_t offset = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;

    std::size_t size() const { return rows * cols; }
};

// One training example: the original sequence plus the two masked views.
struct MaeExample {
    std::vector<TokenId> target;        // x
    std::vector<TokenId> encoder_input; // x^e
    std::vector<std::size_t> encoder_masked;
    std::vector<TokenId> decoder_input; // x^d
};

struct LossParts {
    double encoder = 0.0;  // MLM cross-entropy, mean over masked positions
    double decoder = 0.0;  // reconstruction cross-entropy, mean over positions 1..L-1
    double total() const { return encoder + decoder; }
};

// Pre-LN bidirectional transformer encoder with a one-block decoder that
// reconstructs the sequence from the encoder's summary-token state and an
// aggressively masked copy of the input. Both heads share the token
// embedding and the output projection. All parameters live in one flat
// buffer so the optimizer and gradient checks can treat them uniformly.
class MaeNetwork {
public:
    MaeNetwork() = default;
    explicit MaeNetwork(const ModelShape& shape);

    void init_weights(std::uint64_t seed);

    const ModelShape& shape() const { return shape_; }
    std::vector<double>& params() { return params_; }
    const std::vector<double>& params() const { return params_; }
    const std::vector<TensorSlot>& slots() const { return slots_; }

    // Final-layer-normalized hidden state at position 0.
    Vector encode_summary(const std::vector<TokenId>& ids) const;

    LossParts loss(const MaeExample& ex) const;

    // Adds d(total loss)/d(params) into grad (same length as params()).
    LossParts loss_and_grad(const MaeExample& ex, std::vector<double>& grad) const;

private:
    struct Block {
        std::size_t ln1_g, ln1_b, w_qkv, b_qkv, w_o, b_o, ln2_g, ln2_b, w_1, b_1, w_2, b_2;
    };
    struct BlockCache;
    struct LayerNormCache {
        Matrix xhat;
        Vector rstd;
    };

    std::size_t add_slot(const std::string& name, std::size_t rows, std::size_t cols);
    Block add_block(const std::string& prefix);

    Eigen::Map<const Matrix> view(std::size_t slot) const;
    Eigen::Map<Matrix> grad_view(std::vector<double>& grad, std::size_t slot) const;

    Matrix layer_norm(const Matrix& x, std::size_t g, std::size_t b, LayerNormCache* cache) const;
    Matrix layer_norm_backward(const Matrix& dy, std::size_t g, std::size_t b, const LayerNormCache& cache,
                               std::vector<double>& grad) const;
    Matrix block_forward(const Matrix& x, const Block& blk, BlockCache* cache) const;
    Matrix block_backward(const Matrix& dz, const Block& blk, const BlockCache& cache, std::vector<double>& grad) const;
    Matrix embed_tokens(const std::vector<TokenId>& ids) const;

    LossParts run(const MaeExample& ex, std::vector<double>* grad) const;

    ModelShape shape_;
    std::vector<TensorSlot> slots_;
    std::vector<double> params_;
    std::size_t tok_emb_ = 0, pos_emb_ = 0, enc_ln_g_ = 0, enc_ln_b_ = 0, dec_ln_g_ = 0, dec_ln_b_ = 0, out_w_ = 0,
                out_b_ = 0;
    std::vector<Block> encoder_;
    Block decoder_{};
};

}  // namespace shield::mae
