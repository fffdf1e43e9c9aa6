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

#include "shield/mae.hpp"

#include "shield/error.hpp"
#include "shield/random.hpp"
#include "shield/text.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <unordered_map>

namespace shield::mae {

namespace {

constexpr char kMagic[8] = {'S', 'H', 'L', 'D', 'M', 'A', 'E', '\0'};
constexpr std::uint32_t kFormatVersion = 1;

class ByteWriter {
public:
    template <typename T>
    void pod(const T& v) {
        buf_.append(reinterpret_cast<const char*>(&v), sizeof(T));
    }
    void u64(std::uint64_t v) { pod(v); }
    void str(const std::string& s) {
        u64(s.size());
        buf_ += s;
    }
    void raw(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }
    const std::string& bytes() const { return buf_; }

private:
    std::string buf_;
};

class ByteReader {
public:
    explicit ByteReader(std::string data) : data_(std::move(data)) {}

    template <typename T>
    T pod() {
        T v{};
        take(&v, sizeof(T));
        return v;
    }
    std::uint64_t u64() { return pod<std::uint64_t>(); }
    std::string str() {
        const auto n = u64();
        if (n > data_.size() - pos_) throw ModelFormatError("checkpoint truncated");
        std::string s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    void take(void* out, std::size_t n) {
        if (n > data_.size() - pos_) throw ModelFormatError("checkpoint truncated");
        std::memcpy(out, data_.data() + pos_, n);
        pos_ += n;
    }
    bool done() const { return pos_ == data_.size(); }

private:
    std::string data_;
    std::size_t pos_ = 0;
};

bool within(MaskRange inner, double lo, double hi) { return inner.lo >= lo && inner.hi <= hi && inner.lo <= inner.hi; }

// Adam with bias correction over the flat parameter buffer.
class Adam {
public:
    Adam(std::size_t n, double lr) : lr_(lr), m_(n, 0.0), v_(n, 0.0) {}

    void step(std::vector<double>& params, const std::vector<double>& grad) {
        ++t_;
        const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
        for (std::size_t i = 0; i < params.size(); ++i) {
            m_[i] = kBeta1 * m_[i] + (1.0 - kBeta1) * grad[i];
            v_[i] = kBeta2 * v_[i] + (1.0 - kBeta2) * grad[i] * grad[i];
            params[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + kEps);
        }
    }

private:
    static constexpr double kBeta1 = 0.9;
    static constexpr double kBeta2 = 0.999;
    static constexpr double kEps = 1e-8;
    double lr_;
    std::uint64_t t_ = 0;
    std::vector<double> m_, v_;
};

double mean_loss(const MaeNetwork& net, const std::vector<MaeExample>& examples) {
    if (examples.empty()) return 0.0;
    double total = 0.0;
    for (const auto& ex : examples) total += net.loss(ex).total();
    return total / static_cast<double>(examples.size());
}

}  // namespace

std::string event_to_sentence(const Event& e) {
    std::string out;
    for (const std::string* field : {&e.event_type, &e.command_line, &e.process_path, &e.ip_address, &e.file_path}) {
        if (field->empty()) continue;
        if (!out.empty()) out += ' ';
        out += *field;
    }
    return out;
}

void MaeHyper::validate() const {
    if (!within(encode_mask, 0.15, 0.30)) throw ConfigError("encode mask range must lie within [0.15, 0.30]");
    if (!within(decode_mask, 0.50, 0.70)) throw ConfigError("decode mask range must lie within [0.50, 0.70]");
    if (shape.dim == 0 || shape.heads == 0 || shape.dim % shape.heads != 0) {
        throw ConfigError("dim must be a positive multiple of heads");
    }
    if (shape.encoder_layers == 0 || shape.ffn_dim == 0) throw ConfigError("encoder needs at least one layer");
    if (shape.max_seq_len < 2) throw ConfigError("max_seq_len must be at least 2");
    if (!(learning_rate > 0.0) || batch_size == 0) throw ConfigError("learning rate and batch size must be positive");
    if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) throw ConfigError("holdout fraction must be in (0, 1)");
    if (max_vocab < 5) throw ConfigError("max_vocab must leave room for the special tokens");
}

MaeModel::MaeModel(WordPieceTokenizer tokenizer, MaeNetwork network, MaeHyper hyper)
    : tokenizer_(std::move(tokenizer)), network_(std::move(network)), hyper_(std::move(hyper)) {}

TokenSequence MaeModel::tokenize_event(const Event& e) const { return tokenizer_.tokenize(event_to_sentence(e)); }

Vector MaeModel::single_mask_embedding(const TokenSequence& x, std::uint64_t seed) const {
    const auto masked = mask(x, hyper_.encode_mask, seed);
    return network_.encode_summary(masked.apply(WordPieceTokenizer::kMask));
}

Vector MaeModel::embed_sentence(const std::string& sentence, std::size_t m, std::uint64_t seed) const {
    if (m == 0) throw ConfigError("embedding needs at least one mask");
    const TokenSequence x = tokenizer_.tokenize(sentence);
    Vector sum = Vector::Zero(static_cast<Eigen::Index>(dim()));
    for (std::size_t i = 0; i < m; ++i) sum += single_mask_embedding(x, seed + i);
    return sum / static_cast<double>(m);
}

void MaeModel::save(const std::string& path) const {
    ByteWriter w;
    w.raw(kMagic, sizeof(kMagic));
    w.pod(kFormatVersion);
    const auto& s = hyper_.shape;
    for (std::size_t v : {s.vocab, s.dim, s.encoder_layers, s.heads, s.ffn_dim, s.max_seq_len}) w.u64(v);
    for (double v : {hyper_.encode_mask.lo, hyper_.encode_mask.hi, hyper_.decode_mask.lo, hyper_.decode_mask.hi,
                     hyper_.learning_rate, hyper_.holdout_fraction, hyper_.grad_clip}) {
        w.pod(v);
    }
    for (std::size_t v : {hyper_.batch_size, hyper_.epochs, hyper_.max_vocab}) w.u64(v);
    w.str(tokenizer_.vocab_hash());
    w.u64(tokenizer_.vocab_size());
    for (const auto& piece : tokenizer_.vocab()) w.str(piece);
    const auto& p = network_.params();
    w.u64(p.size());
    w.raw(p.data(), p.size() * sizeof(double));
    text::write_file(path, w.bytes());
}

MaeModel MaeModel::load(const std::string& path) {
    ByteReader r(text::read_file(path));
    char magic[sizeof(kMagic)];
    r.take(magic, sizeof(magic));
    if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw ModelFormatError(path + ": not a model checkpoint");
    const auto version = r.pod<std::uint32_t>();
    if (version != kFormatVersion) {
        throw ModelFormatError(path + ": unsupported checkpoint version " + std::to_string(version));
    }
    MaeHyper h;
    auto& s = h.shape;
    for (std::size_t* v : {&s.vocab, &s.dim, &s.encoder_layers, &s.heads, &s.ffn_dim, &s.max_seq_len}) *v = r.u64();
    for (double* v : {&h.encode_mask.lo, &h.encode_mask.hi, &h.decode_mask.lo, &h.decode_mask.hi, &h.learning_rate,
                      &h.holdout_fraction, &h.grad_clip}) {
        *v = r.pod<double>();
    }
    for (std::size_t* v : {&h.batch_size, &h.epochs, &h.max_vocab}) *v = r.u64();
    const std::string stored_hash = r.str();
    const auto vocab_size = r.u64();
    if (vocab_size != s.vocab) throw ModelFormatError(path + ": vocabulary size mismatch");
    std::vector<std::string> vocab;
    vocab.reserve(vocab_size);
    for (std::uint64_t i = 0; i < vocab_size; ++i) vocab.push_back(r.str());
    WordPieceTokenizer tok;
    try {
        tok = WordPieceTokenizer(std::move(vocab), s.max_seq_len);
        h.validate();
    } catch (const Error& e) {
        throw ModelFormatError(path + ": " + e.what());
    }
    if (tok.vocab_hash() != stored_hash) throw ModelFormatError(path + ": vocabulary hash mismatch");
    MaeNetwork net(s);
    const auto n = r.u64();
    if (n != net.params().size()) throw ModelFormatError(path + ": weight count does not match the model shape");
    r.take(net.params().data(), n * sizeof(double));
    if (!r.done()) throw ModelFormatError(path + ": trailing bytes after weights");
    return MaeModel(std::move(tok), std::move(net), std::move(h));
}

MaeExample make_example(const TokenSequence& x, const MaeHyper& hyper, std::uint64_t seed) {
    MaeExample ex;
    ex.target = x.ids;
    const auto enc = mask(x, hyper.encode_mask, mix_seed(seed, 1));
    ex.encoder_input = enc.apply(WordPieceTokenizer::kMask);
    ex.encoder_masked = enc.masked_positions;
    ex.decoder_input = mask(x, hyper.decode_mask, mix_seed(seed, 2)).apply(WordPieceTokenizer::kMask);
    return ex;
}

TrainResult train(const EventLog& d_tr, MaeHyper hyper, std::uint64_t seed, const EpochCallback& on_epoch) {
    if (d_tr.empty()) throw EmptyTrainingSet("training log has no events");
    hyper.validate();
    std::vector<std::string> corpus;
    corpus.reserve(d_tr.size());
    for (const auto& e : d_tr.events) corpus.push_back(event_to_sentence(e));
    auto tok = WordPieceTokenizer::train(corpus, hyper.max_vocab, 2, hyper.shape.max_seq_len);
    spdlog::info("learned vocabulary of {} pieces", tok.vocab_size());
    return train(d_tr, tok, hyper, seed, on_epoch);
}

TrainResult train(const EventLog& d_tr, const WordPieceTokenizer& tokenizer, MaeHyper hyper, std::uint64_t seed,
                  const EpochCallback& on_epoch) {
    if (d_tr.empty()) throw EmptyTrainingSet("training log has no events");
    if (d_tr.label != LogLabel::training) throw ConfigError("MAE training requires a log labelled training");
    hyper.shape.vocab = tokenizer.vocab_size();
    hyper.shape.max_seq_len = tokenizer.max_seq_len();
    hyper.validate();

    std::unordered_map<std::string, TokenSequence> cache;
    std::vector<const TokenSequence*> seqs;
    seqs.reserve(d_tr.size());
    for (const auto& e : d_tr.events) {
        auto s = event_to_sentence(e);
        auto it = cache.find(s);
        if (it == cache.end()) it = cache.emplace(s, tokenizer.tokenize(s)).first;
        seqs.push_back(&it->second);
    }

    Rng split_rng(mix_seed(seed, 0x73706c74ULL));
    std::vector<std::size_t> order(seqs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    split_rng.shuffle(order);
    std::size_t n_hold = 0;
    if (order.size() >= 2) {
        n_hold = static_cast<std::size_t>(std::ceil(hyper.holdout_fraction * static_cast<double>(order.size())));
        n_hold = std::clamp<std::size_t>(n_hold, 1, order.size() - 1);
    }
    std::vector<std::size_t> held(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_hold));
    std::vector<std::size_t> train_idx(order.begin() + static_cast<std::ptrdiff_t>(n_hold), order.end());
    if (held.empty()) held = train_idx;  // a single event is its own held-out set

    std::vector<MaeExample> heldout;
    for (std::size_t i : held) heldout.push_back(make_example(*seqs[i], hyper, mix_seed(seed ^ 0x686f6c64ULL, i)));

    MaeNetwork net(hyper.shape);
    net.init_weights(seed);
    Adam adam(net.params().size(), hyper.learning_rate);

    TrainResult result;
    result.report.train_events = train_idx.size();
    result.report.heldout_events = n_hold;
    auto record = [&](EpochStats stats) {
        if (!std::isfinite(stats.heldout_loss) || !std::isfinite(stats.train_loss)) {
            throw NonFiniteLoss("non-finite loss at epoch " + std::to_string(stats.epoch) +
                                " (train " + std::to_string(stats.train_loss) + ", held-out " +
                                std::to_string(stats.heldout_loss) + ")");
        }
        result.report.history.push_back(stats);
        if (on_epoch) on_epoch(stats);
    };
    record({0, 0.0, mean_loss(net, heldout)});

    std::vector<double> grad(net.params().size());
    Rng epoch_rng(mix_seed(seed, 0x65706f63ULL));
    for (std::size_t epoch = 1; epoch <= hyper.epochs; ++epoch) {
        epoch_rng.shuffle(train_idx);
        double epoch_total = 0.0;
        std::size_t counted = 0;
        for (std::size_t start = 0; start < train_idx.size(); start += hyper.batch_size) {
            const std::size_t end = std::min(train_idx.size(), start + hyper.batch_size);
            std::fill(grad.begin(), grad.end(), 0.0);
            double batch_total = 0.0;
            for (std::size_t b = start; b < end; ++b) {
                const std::size_t i = train_idx[b];
                const auto ex = make_example(*seqs[i], hyper, mix_seed(mix_seed(seed, epoch), i));
                batch_total += net.loss_and_grad(ex, grad).total();
            }
            if (!std::isfinite(batch_total)) {
                throw NonFiniteLoss("non-finite training loss in epoch " + std::to_string(epoch) + " batch at " +
                                    std::to_string(start));
            }
            const double inv = 1.0 / static_cast<double>(end - start);
            double norm2 = 0.0;
            for (auto& g : grad) {
                g *= inv;
                norm2 += g * g;
            }
            const double norm = std::sqrt(norm2);
            if (hyper.grad_clip > 0.0 && norm > hyper.grad_clip) {
                const double scale = hyper.grad_clip / norm;
                for (auto& g : grad) g *= scale;
            }
            adam.step(net.params(), grad);
            epoch_total += batch_total;
            counted += end - start;
        }
        record({epoch, counted ? epoch_total / static_cast<double>(counted) : 0.0, mean_loss(net, heldout)});
    }
    result.model = MaeModel(tokenizer, std::move(net), hyper);
    return result;
}

EventEmbedding embed(const MaeModel& model, const Event& e, std::size_t m, std::uint64_t seed,
                     std::size_t event_index) {
    const Vector v = model.embed_sentence(event_to_sentence(e), m, seed);
    return EventEmbedding{std::vector<double>(v.data(), v.data() + v.size()), event_index};
}

std::vector<EventEmbedding> embed_log(const MaeModel& model, const EventLog& log, std::size_t m, std::uint64_t seed) {
    std::unordered_map<std::string, std::vector<double>> memo;
    std::vector<EventEmbedding> out;
    out.reserve(log.size());
    for (std::size_t i = 0; i < log.size(); ++i) {
        auto sentence = event_to_sentence(log[i]);
        auto it = memo.find(sentence);
        if (it == memo.end()) {
            const Vector v = model.embed_sentence(sentence, m, seed);
            it = memo.emplace(std::move(sentence), std::vector<double>(v.data(), v.data() + v.size())).first;
        }
        out.push_back(EventEmbedding{it->second, i});
    }
    return out;
}

}  // namespace shield::mae
