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

#include "shield/tokenizer.hpp"

#include "shield/error.hpp"
#include "shield/random.hpp"
#include "shield/text.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <set>

namespace shield::mae {

namespace {

constexpr std::size_t kMaxWordChars = 100;
const char* const kSpecials[] = {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"};

bool is_punct(unsigned char c) { return c < 0x80 && std::ispunct(c); }

}  // namespace

std::vector<TokenId> MaskedSequence::apply(TokenId mask_id) const {
    std::vector<TokenId> out = base.ids;
    for (auto p : masked_positions) out[p] = mask_id;
    return out;
}

MaskedSequence mask(const TokenSequence& x, MaskRange range, std::uint64_t seed) {
    MaskedSequence m;
    m.base = x;
    Rng rng(mix_seed(seed, 0x6d61736bULL));
    m.mask_ratio = range.hi > range.lo ? rng.uniform(range.lo, range.hi) : range.lo;
    if (x.size() <= 1) return m;
    const std::size_t maskable = x.size() - 1;
    auto count = static_cast<std::size_t>(std::llround(m.mask_ratio * static_cast<double>(maskable)));
    count = std::clamp<std::size_t>(count, 1, maskable);
    for (auto p : rng.sample_without_replacement(maskable, count)) m.masked_positions.push_back(p + 1);
    std::sort(m.masked_positions.begin(), m.masked_positions.end());
    return m;
}

WordPieceTokenizer::WordPieceTokenizer(std::vector<std::string> vocab, std::size_t max_seq_len)
    : vocab_(std::move(vocab)), max_seq_len_(max_seq_len) {
    if (vocab_.size() < 5) throw VocabularyMissing("vocabulary lacks the special tokens");
    for (std::size_t i = 0; i < 5; ++i) {
        if (vocab_[i] != kSpecials[i]) throw VocabularyMissing("vocabulary entry " + std::to_string(i) + " must be " + kSpecials[i]);
    }
    if (max_seq_len_ < 1) throw ConfigError("max_seq_len must be at least 1");
    for (std::size_t i = 0; i < vocab_.size(); ++i) index_.emplace(vocab_[i], static_cast<TokenId>(i));
}

TokenId WordPieceTokenizer::id_of(const std::string& piece) const {
    auto it = index_.find(piece);
    return it == index_.end() ? kUnk : it->second;
}

std::vector<std::string> WordPieceTokenizer::basic_split(std::string_view sentence) const {
    std::vector<std::string> words;
    std::string current;
    auto flush = [&] {
        if (!current.empty()) words.push_back(std::move(current));
        current.clear();
    };
    for (char ch : sentence) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isspace(c)) {
            flush();
        } else if (c < 0x20 || c == 0x7f) {
            // control characters are dropped
        } else if (is_punct(c)) {
            flush();
            words.emplace_back(1, ch);
        } else {
            current.push_back(static_cast<char>(std::tolower(c)));
        }
    }
    flush();
    return words;
}

std::vector<std::string> WordPieceTokenizer::wordpiece(const std::string& word) const {
    if (word.size() > kMaxWordChars) return {"[UNK]"};
    std::vector<std::string> pieces;
    std::size_t start = 0;
    while (start < word.size()) {
        std::size_t end = word.size();
        std::string found;
        while (end > start) {
            std::string candidate = (start > 0 ? "##" : "") + word.substr(start, end - start);
            if (index_.count(candidate)) {
                found = std::move(candidate);
                break;
            }
            --end;
        }
        if (found.empty()) return {"[UNK]"};
        pieces.push_back(std::move(found));
        start = end;
    }
    return pieces;
}

TokenSequence WordPieceTokenizer::tokenize(std::string_view sentence) const {
    if (vocab_.empty()) throw VocabularyMissing("tokenizer has no vocabulary loaded");
    TokenSequence seq;
    seq.ids.push_back(kCls);
    for (const auto& word : basic_split(sentence)) {
        for (const auto& piece : wordpiece(word)) {
            if (seq.ids.size() >= max_seq_len_) return seq;
            seq.ids.push_back(id_of(piece));
        }
    }
    return seq;
}

std::string WordPieceTokenizer::detokenize(const TokenSequence& seq) const {
    std::string out;
    for (std::size_t i = 0; i < seq.ids.size(); ++i) {
        const TokenId id = seq.ids[i];
        if (id == kCls || id == kSep || id == kPad) continue;
        const std::string& piece = vocab_.at(static_cast<std::size_t>(id));
        if (piece.rfind("##", 0) == 0) {
            out += piece.substr(2);
        } else {
            if (!out.empty()) out += ' ';
            out += piece;
        }
    }
    return out;
}

std::string WordPieceTokenizer::vocab_hash() const { return text::sha256_hex(text::join(vocab_, "\n")); }

WordPieceTokenizer WordPieceTokenizer::load(const std::string& vocab_path, std::size_t max_seq_len) {
    std::string body;
    try {
        body = text::read_file(vocab_path);
    } catch (const IoError& e) {
        throw VocabularyMissing(e.what());
    }
    std::vector<std::string> vocab;
    for (auto& line : text::split_lines(body)) {
        if (!line.empty()) vocab.push_back(std::move(line));
    }
    return WordPieceTokenizer(std::move(vocab), max_seq_len);
}

void WordPieceTokenizer::save(const std::string& vocab_path) const {
    text::write_file(vocab_path, text::join(vocab_, "\n") + "\n");
}

WordPieceTokenizer WordPieceTokenizer::train(const std::vector<std::string>& corpus, std::size_t max_vocab,
                                             std::size_t min_pair_count, std::size_t max_seq_len) {
    std::vector<std::string> vocab(std::begin(kSpecials), std::end(kSpecials));
    std::unordered_map<std::string, TokenId> index;
    auto intern = [&](const std::string& piece) {
        auto [it, inserted] = index.emplace(piece, static_cast<TokenId>(vocab.size()));
        if (inserted) vocab.push_back(piece);
        return it->second;
    };
    for (const auto& s : vocab) index.emplace(s, static_cast<TokenId>(&s - vocab.data()));

    // Printable ASCII without uppercase, which never survives lowercasing.
    for (int c = 0x21; c < 0x7f; ++c) {
        if (std::isupper(c)) continue;
        intern(std::string(1, static_cast<char>(c)));
    }
    for (int c = 0x21; c < 0x7f; ++c) {
        if (std::isupper(c) || is_punct(static_cast<unsigned char>(c))) continue;
        intern("##" + std::string(1, static_cast<char>(c)));
    }

    WordPieceTokenizer splitter(std::vector<std::string>(std::begin(kSpecials), std::end(kSpecials)));
    std::map<std::string, std::size_t> word_counts;
    for (const auto& sentence : corpus) {
        for (auto& w : splitter.basic_split(sentence)) {
            if (w.size() <= kMaxWordChars) ++word_counts[w];
        }
    }

    // Each distinct word as a symbol sequence, plus its corpus frequency.
    struct Word {
        std::vector<TokenId> symbols;
        std::size_t count;
    };
    std::vector<Word> words;
    for (const auto& [w, count] : word_counts) {
        Word word{{}, count};
        for (std::size_t i = 0; i < w.size(); ++i) {
            word.symbols.push_back(intern((i ? "##" : "") + std::string(1, w[i])));
        }
        words.push_back(std::move(word));
    }

    using Pair = std::pair<TokenId, TokenId>;
    std::map<Pair, std::size_t> pair_counts;
    std::map<Pair, std::set<std::size_t>> pair_words;
    auto add_pairs = [&](std::size_t wi, int sign) {
        const auto& sym = words[wi].symbols;
        for (std::size_t i = 0; i + 1 < sym.size(); ++i) {
            Pair p{sym[i], sym[i + 1]};
            if (sign > 0) {
                pair_counts[p] += words[wi].count;
                pair_words[p].insert(wi);
            } else {
                auto it = pair_counts.find(p);
                it->second -= words[wi].count;
                if (it->second == 0) pair_counts.erase(it);
                pair_words[p].erase(wi);
            }
        }
    };
    for (std::size_t wi = 0; wi < words.size(); ++wi) add_pairs(wi, +1);

    auto merged_text = [&](const Pair& p) {
        const std::string& right = vocab[static_cast<std::size_t>(p.second)];
        return vocab[static_cast<std::size_t>(p.first)] + right.substr(2);
    };

    while (vocab.size() < max_vocab && !pair_counts.empty()) {
        const Pair* best = nullptr;
        std::size_t best_count = 0;
        std::string best_text;
        for (const auto& [p, count] : pair_counts) {
            if (count < best_count) continue;
            std::string t = merged_text(p);
            if (count > best_count || t < best_text) {
                best = &p;
                best_count = count;
                best_text = std::move(t);
            }
        }
        if (!best || best_count < min_pair_count) break;
        const Pair target = *best;
        const TokenId merged = intern(best_text);
        const std::set<std::size_t> affected = pair_words[target];
        for (std::size_t wi : affected) {
            add_pairs(wi, -1);
            auto& sym = words[wi].symbols;
            std::vector<TokenId> next;
            next.reserve(sym.size());
            for (std::size_t i = 0; i < sym.size(); ++i) {
                if (i + 1 < sym.size() && sym[i] == target.first && sym[i + 1] == target.second) {
                    next.push_back(merged);
                    ++i;
                } else {
                    next.push_back(sym[i]);
                }
            }
            sym = std::move(next);
            add_pairs(wi, +1);
        }
        pair_words.erase(target);
    }
    if (vocab.size() > max_vocab && max_vocab >= 5) vocab.resize(max_vocab);
    return WordPieceTokenizer(std::move(vocab), max_seq_len);
}

}  // namespace shield::mae
