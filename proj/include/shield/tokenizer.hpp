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

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace shield::mae {

using TokenId = std::int32_t;

// Token ids of one event sentence. ids[0] is always the summary ([CLS]) token.
struct TokenSequence {
    std::vector<TokenId> ids;

    std::size_t size() const { return ids.size(); }
    bool operator==(const TokenSequence&) const = default;
};

struct MaskRange {
    double lo = 0.15;
    double hi = 0.30;
};

struct MaskedSequence {
    TokenSequence base;
    std::vector<std::size_t> masked_positions;  // ascending, never 0
    double mask_ratio = 0.0;

    // base with every masked position replaced by mask_id.
    std::vector<TokenId> apply(TokenId mask_id) const;

    bool operator==(const MaskedSequence&) const = default;
};

// Ratio drawn uniformly from the range; round(ratio * (len - 1)) positions
// (at least one when len > 1) drawn without replacement from 1..len-1.
MaskedSequence mask(const TokenSequence& x, MaskRange range, std::uint64_t seed);

// Uncased WordPiece: lowercase, split on whitespace and ASCII punctuation,
// then greedy longest-match-first subwords with "##" continuations.
class WordPieceTokenizer {
public:
    static constexpr TokenId kPad = 0;
    static constexpr TokenId kUnk = 1;
    static constexpr TokenId kCls = 2;
    static constexpr TokenId kSep = 3;
    static constexpr TokenId kMask = 4;

    WordPieceTokenizer() = default;

    // The first five entries must be the special tokens in the order above.
    explicit WordPieceTokenizer(std::vector<std::string> vocab, std::size_t max_seq_len = 128);

    // Learns a vocabulary by greedy most-frequent-pair merges over the words
    // of the corpus, seeded with printable ASCII in both word-initial and
    // "##" forms. Stops at max_vocab entries or when no pair occurs at least
    // min_pair_count times.
    static WordPieceTokenizer train(const std::vector<std::string>& corpus, std::size_t max_vocab = 30000,
                                    std::size_t min_pair_count = 2, std::size_t max_seq_len = 128);

    static WordPieceTokenizer load(const std::string& vocab_path, std::size_t max_seq_len = 128);
    void save(const std::string& vocab_path) const;

    // Throws VocabularyMissing when no vocabulary is loaded.
    TokenSequence tokenize(std::string_view sentence) const;

    std::vector<std::string> basic_split(std::string_view sentence) const;
    std::vector<std::string> wordpiece(const std::string& word) const;

    // Inverse of tokenize for whitespace-separated text: "##" pieces glue
    // onto the previous piece, everything else is space separated.
    std::string detokenize(const TokenSequence& seq) const;

    std::size_t vocab_size() const { return vocab_.size(); }
    std::size_t max_seq_len() const { return max_seq_len_; }
    const std::vector<std::string>& vocab() const { return vocab_; }
    TokenId id_of(const std::string& piece) const;  // kUnk when absent
    std::string vocab_hash() const;                 // sha256 over the newline-joined vocabulary

private:
    std::vector<std::string> vocab_;
    std::unordered_map<std::string, TokenId> index_;
    std::size_t max_seq_len_ = 128;
};

}  // namespace shield::mae
