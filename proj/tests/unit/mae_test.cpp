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

#include "shield/error.hpp"
#include "shield/mae.hpp"
#include "shield/random.hpp"
#include "shield/scenario.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <cmath>

using namespace shield;
using namespace shield::mae;
using shield::testing::make_event;

namespace {

MaeHyper tiny_hyper() {
    MaeHyper h;
    h.shape.dim = 16;
    h.shape.encoder_layers = 1;
    h.shape.heads = 2;
    h.shape.ffn_dim = 32;
    h.shape.max_seq_len = 32;
    h.batch_size = 16;
    h.epochs = 2;
    return h;
}

EventLog training_log(std::size_t n, std::uint64_t seed = 3) {
    scenario::BenignOptions opt;
    opt.count = n;
    opt.seed = seed;
    return scenario::generate_benign(opt);
}

// Central-difference derivative of the total loss w.r.t. one parameter.
double numeric_grad(MaeNetwork& net, const MaeExample& ex, std::size_t i, double eps) {
    double& p = net.params()[i];
    const double saved = p;
    p = saved + eps;
    const double up = net.loss(ex).total();
    p = saved - eps;
    const double down = net.loss(ex).total();
    p = saved;
    return (up - down) / (2.0 * eps);
}

}  // namespace

TEST_SUITE("mae") {

TEST_CASE("event_to_sentence joins the non-id fields in order") {
    auto e = make_event("s1", "o1", "EVENT_READ", "", 5);
    CHECK(event_to_sentence(e) == "EVENT_READ");
    e.command_line = "sh /usr/libexec/save-entropy";
    CHECK(event_to_sentence(e) == "EVENT_READ sh /usr/libexec/save-entropy");
    auto full = make_event("s", "o", "EVENT_CONNECT", "curl x", 1, "/usr/bin/curl", "1.2.3.4:80", "/tmp/f");
    CHECK(event_to_sentence(full) == "EVENT_CONNECT curl x /usr/bin/curl 1.2.3.4:80 /tmp/f");
    auto later = full;
    later.timestamp = 999;
    later.subject_id = "other";
    later.object_id = "other-obj";
    CHECK(event_to_sentence(later) == event_to_sentence(full));
}

TEST_CASE("analytic gradient agrees with central differences") {
    const auto log = training_log(50);
    std::vector<std::string> corpus;
    for (const auto& e : log.events) corpus.push_back(event_to_sentence(e));
    const auto tok = WordPieceTokenizer::train(corpus, 30000, 2, 32);

    ModelShape shape;
    shape.vocab = tok.vocab_size();
    shape.dim = 8;
    shape.encoder_layers = 2;
    shape.heads = 2;
    shape.ffn_dim = 16;
    shape.max_seq_len = 32;
    MaeNetwork net(shape);
    net.init_weights(17);
    // Spread the weights out so the check is not dominated by near-zero terms.
    Rng jitter(5);
    for (auto& p : net.params()) p += jitter.normal(0.0, 0.3);

    MaeHyper hyper;
    const auto x = tok.tokenize(event_to_sentence(log[3]));
    REQUIRE(x.size() >= 4);
    const auto ex = make_example(x, hyper, 23);

    std::vector<double> grad(net.params().size(), 0.0);
    net.loss_and_grad(ex, grad);

    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < grad.size(); ++i) {
        if (grad[i] != 0.0) candidates.push_back(i);
    }
    REQUIRE(candidates.size() > 20);
    Rng pick(41);
    for (std::size_t k : pick.sample_without_replacement(candidates.size(), 20)) {
        const std::size_t i = candidates[k];
        const double analytic = grad[i];
        const double numeric = numeric_grad(net, ex, i, 1e-5);
        const double scale = std::max(std::abs(analytic), std::abs(numeric));
        const double err = scale < 1e-7 ? std::abs(analytic - numeric) : std::abs(analytic - numeric) / scale;
        INFO("param " << i << " analytic " << analytic << " numeric " << numeric);
        CHECK(err <= 1e-3);
    }
}

TEST_CASE("every parameter tensor receives gradient") {
    const auto log = training_log(30);
    std::vector<std::string> corpus;
    for (const auto& e : log.events) corpus.push_back(event_to_sentence(e));
    const auto tok = WordPieceTokenizer::train(corpus, 30000, 2, 32);
    ModelShape shape{tok.vocab_size(), 8, 2, 2, 16, 32};
    MaeNetwork net(shape);
    net.init_weights(1);
    std::vector<double> grad;
    net.loss_and_grad(make_example(tok.tokenize(event_to_sentence(log[0])), MaeHyper{}, 3), grad);
    for (const auto& slot : net.slots()) {
        double sum = 0.0;
        for (std::size_t i = 0; i < slot.size(); ++i) sum += std::abs(grad[slot.offset + i]);
        INFO(slot.name);
        CHECK(sum > 0.0);
    }
}

TEST_CASE("single repeated event is learned almost perfectly") {
    EventLog log;
    log.label = LogLabel::training;
    for (int i = 0; i < 64; ++i) {
        log.events.push_back(make_event("p", "f", "EVENT_READ", "sh /usr/libexec/save-entropy", i, "/bin/sh"));
    }
    auto hyper = tiny_hyper();
    hyper.batch_size = 8;
    hyper.epochs = 12;
    hyper.learning_rate = 3e-3;
    auto result = train(log, hyper, 9);
    INFO("initial " << result.report.initial_heldout() << " final " << result.report.final_heldout());
    CHECK(result.report.final_heldout() < 0.1 * result.report.initial_heldout());
    CHECK(result.report.final_heldout() < 0.3);
}

TEST_CASE("training is reproducible and tracks the held-out split") {
    const auto log = training_log(200);
    const auto a = train(log, tiny_hyper(), 4);
    const auto b = train(log, tiny_hyper(), 4);
    CHECK(a.model.network().params() == b.model.network().params());
    REQUIRE(a.report.history.size() == 3);
    CHECK(a.report.history[0].epoch == 0);
    CHECK(a.report.heldout_events == 10);
    CHECK(a.report.train_events == 190);
    CHECK(a.report.final_heldout() < a.report.initial_heldout());
}

TEST_CASE("training preconditions") {
    EventLog empty;
    empty.label = LogLabel::training;
    CHECK_THROWS_AS(train(empty, tiny_hyper(), 1), EmptyTrainingSet);
    auto bad = tiny_hyper();
    bad.encode_mask = {0.10, 0.30};
    CHECK_THROWS_AS(train(training_log(10), bad, 1), ConfigError);
    bad = tiny_hyper();
    bad.decode_mask = {0.50, 0.80};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("embeddings average single-mask embeddings and are deterministic") {
    const auto log = training_log(120);
    const auto model = train(log, tiny_hyper(), 2).model;
    const Event& e = log[7];
    const auto x = model.tokenize_event(e);

    const auto one = embed(model, e, 1, 100);
    const Vector single = model.single_mask_embedding(x, 100);
    REQUIRE(one.vector.size() == model.dim());
    for (std::size_t i = 0; i < one.vector.size(); ++i) CHECK(one.vector[i] == doctest::Approx(single[i]).epsilon(1e-12));

    const auto four = embed(model, e, 4, 100);
    std::vector<double> mean(model.dim(), 0.0);
    for (std::uint64_t s = 100; s < 104; ++s) {
        const Vector v = model.single_mask_embedding(x, s);
        for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += v[i] / 4.0;
    }
    for (std::size_t i = 0; i < mean.size(); ++i) CHECK(four.vector[i] == doctest::Approx(mean[i]).epsilon(1e-12));

    auto twin = e;
    twin.subject_id = "someone-else";
    twin.timestamp += 12345;
    CHECK(embed(model, twin, 5, 8).vector == embed(model, e, 5, 8).vector);

    const auto all = embed_log(model, log, 2, 8);
    REQUIRE(all.size() == log.size());
    CHECK(all[7].event_index == 7);
    CHECK(all[7].vector == embed(model, e, 2, 8).vector);
}

TEST_CASE("embeddings stay finite on random sentences") {
    const auto log = training_log(100);
    const auto model = train(log, tiny_hyper(), 5).model;
    Rng rng(77);
    const std::string alphabet = "abcdefghijklmnopqrstuvwxyz0123456789/._-:\\ ABCXYZ~!@#$%^&*()";
    std::size_t bad = 0;
    for (int i = 0; i < 10000; ++i) {
        std::string s;
        const auto len = rng.below(60);
        for (std::uint64_t k = 0; k < len; ++k) s.push_back(alphabet[rng.below(alphabet.size())]);
        const Vector v = model.embed_sentence(s, 1, static_cast<std::uint64_t>(i));
        if (!v.allFinite()) ++bad;
    }
    CHECK(bad == 0);
}

TEST_CASE("checkpoint round-trip and corruption detection") {
    testing::TempDir dir;
    const auto log = training_log(80);
    const auto model = train(log, tiny_hyper(), 6).model;
    model.save(dir.file("mae.bin"));
    const auto back = MaeModel::load(dir.file("mae.bin"));
    CHECK(back.network().params() == model.network().params());
    CHECK(back.tokenizer().vocab() == model.tokenizer().vocab());
    CHECK(back.hyper().shape.dim == model.hyper().shape.dim);
    CHECK(embed(back, log[1], 3, 1).vector == embed(model, log[1], 3, 1).vector);

    auto bytes = text::read_file(dir.file("mae.bin"));
    text::write_file(dir.file("short.bin"), bytes.substr(0, bytes.size() / 2));
    CHECK_THROWS_AS(MaeModel::load(dir.file("short.bin")), ModelFormatError);
    text::write_file(dir.file("junk.bin"), "not a model at all");
    CHECK_THROWS_AS(MaeModel::load(dir.file("junk.bin")), ModelFormatError);
    CHECK_THROWS_AS(MaeModel::load(dir.file("missing.bin")), IoError);
}

}  // TEST_SUITE
