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

#include "shield/event.hpp"
#include "shield/tokenizer.hpp"
#include "shield/transformer.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace shield::mae {

// event_type, command_line, process_path, ip_address, file_path joined by
// single spaces, empty fields skipped. IDs and timestamps never appear.
std::string event_to_sentence(const Event& e);

struct MaeHyper {
    ModelShape shape;  // shape.vocab is filled in by train()
    MaskRange encode_mask{0.15, 0.30};
    MaskRange decode_mask{0.50, 0.70};
    double learning_rate = 1e-3;
    std::size_t batch_size = 64;
    std::size_t epochs = 10;
    double holdout_fraction = 0.05;
    double grad_clip = 1.0;  // global L2 norm, 0 disables
    std::size_t max_vocab = 30000;

    // Throws ConfigError.
    void validate() const;
};

struct EpochStats {
    std::size_t epoch = 0;      // 0 is the untrained model
    double train_loss = 0.0;    // mean over the epoch's examples, 0 for epoch 0
    double heldout_loss = 0.0;  // fixed masks, identical across epochs
};

struct TrainReport {
    std::vector<EpochStats> history;
    std::size_t train_events = 0;
    std::size_t heldout_events = 0;

    double initial_heldout() const { return history.empty() ? 0.0 : history.front().heldout_loss; }
    double final_heldout() const { return history.empty() ? 0.0 : history.back().heldout_loss; }
};

class MaeModel {
public:
    MaeModel() = default;
    MaeModel(WordPieceTokenizer tokenizer, MaeNetwork network, MaeHyper hyper);

    const WordPieceTokenizer& tokenizer() const { return tokenizer_; }
    const MaeNetwork& network() const { return network_; }
    MaeNetwork& network() { return network_; }
    const MaeHyper& hyper() const { return hyper_; }
    std::size_t dim() const { return hyper_.shape.dim; }

    TokenSequence tokenize_event(const Event& e) const;

    // Summary-token state of the encoder for one encode-phase mask.
    Vector single_mask_embedding(const TokenSequence& x, std::uint64_t seed) const;

    // Mean of m single-mask embeddings with seeds seed..seed+m-1.
    Vector embed_sentence(const std::string& sentence, std::size_t m, std::uint64_t seed) const;

    // Binary checkpoint: magic, format version, hyperparameters, vocabulary
    // hash, vocabulary and weights. Throws IoError / ModelFormatError.
    void save(const std::string& path) const;
    static MaeModel load(const std::string& path);

private:
    WordPieceTokenizer tokenizer_;
    MaeNetwork network_;
    MaeHyper hyper_;
};

struct EventEmbedding {
    std::vector<double> vector;
    std::size_t event_index = 0;
};

// Encode-phase and decode-phase views of x drawn from the hyper's ranges.
MaeExample make_example(const TokenSequence& x, const MaeHyper& hyper, std::uint64_t seed);

struct TrainResult {
    MaeModel model;
    TrainReport report;
};

using EpochCallback = std::function<void(const EpochStats&)>;

// Learns the vocabulary from d_tr, then minimizes the summed encoder and
// decoder losses with Adam. 5% of the events are held out with fixed masks.
// Throws EmptyTrainingSet, NonFiniteLoss, ConfigError.
TrainResult train(const EventLog& d_tr, MaeHyper hyper, std::uint64_t seed, const EpochCallback& on_epoch = {});

// Same, reusing an existing tokenizer instead of learning one.
TrainResult train(const EventLog& d_tr, const WordPieceTokenizer& tokenizer, MaeHyper hyper, std::uint64_t seed,
                  const EpochCallback& on_epoch = {});

EventEmbedding embed(const MaeModel& model, const Event& e, std::size_t m, std::uint64_t seed,
                     std::size_t event_index = 0);

// Embeds every event; identical sentences are computed once.
std::vector<EventEmbedding> embed_log(const MaeModel& model, const EventLog& log, std::size_t m, std::uint64_t seed);

}  // namespace shield::mae
