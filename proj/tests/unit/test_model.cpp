#include <doctest.h>

#include <cmath>

#include "clarity/error.hpp"
#include "clarity/model.hpp"
#include "fixtures.hpp"

using namespace clarity;

namespace {

ModelConfig small_config() {
    ModelConfig cfg;
    cfg.encoder_identifier = "tiny-encoder-small";
    cfg.max_sequence_length = 32;
    cfg.feature_width = 4;
    cfg.dropout = 0.25;
    cfg.init_seed = 3;
    return cfg;
}

std::vector<QAPair> three_records() {
    std::vector<QAPair> out(3);
    out[0].question = "Will you raise taxes?";
    out[0].answer = "Yes, next year.";
    out[0].affirmative_question = true;
    out[1].question = "What about trade? And jobs?";
    out[1].answer = "Many factors matter here.";
    out[1].multiple_questions = true;
    out[2].question = "Can you comment?";
    out[2].answer = "No.";
    out[2].affirmative_question = true;
    return out;
}

/// Scalar probe L = sum(logits .* R); dL/dlogits = R.
double probe(const Classifier& m, const ModelBatch& b, const Matrix& r) {
    return (m.forward(b, Mode::Train, 99).array() * r.array()).sum();
}

}  // namespace

TEST_CASE("analytic gradients match central differences for every parameter") {
    Classifier model(small_config());
    const auto recs = three_records();
    const ModelBatch batch = model.make_batch(recs);
    Rng rng(17);
    Matrix r(3, kClarityCount);
    for (Eigen::Index i = 0; i < r.size(); ++i) r.data()[i] = rng.uniform() * 2.0 - 1.0;

    model.zero_grad();
    Classifier::Cache cache;
    model.forward(batch, Mode::Train, 99, &cache);
    model.backward(cache, r);

    const double h = 1e-5;
    for (Param* p : model.parameters()) {
        Matrix numeric(p->value.rows(), p->value.cols());
        for (Eigen::Index i = 0; i < p->value.size(); ++i) {
            double& x = p->value.data()[i];
            const double saved = x;
            x = saved + h;
            const double up = probe(model, batch, r);
            x = saved - h;
            const double down = probe(model, batch, r);
            x = saved;
            numeric.data()[i] = (up - down) / (2.0 * h);
        }
        // Key biases shift every score in a row equally, so their exact
        // gradient is zero; the floor keeps noise-over-noise out of the ratio.
        const double scale = std::max(p->grad.norm() + numeric.norm(), 1e-6);
        const double rel = (p->grad - numeric).norm() / scale;
        INFO(p->name);
        CHECK(rel < 1e-4);
        if (p->name.find("key.bias") != std::string::npos) CHECK(numeric.norm() < 1e-8);
    }
}

TEST_CASE("dropout is keyed by sample id, not batch position") {
    Classifier model(small_config());
    const auto recs = three_records();
    const std::vector<std::size_t> ids{10, 11, 12};
    const Matrix whole = model.forward(model.make_batch(recs, ids), Mode::Train, 5);
    const std::vector<std::size_t> one{11};
    const Matrix single = model.forward(model.make_batch(std::span(recs).subspan(1, 1), one), Mode::Train, 5);
    CHECK((whole.row(1) - single.row(0)).norm() < 1e-12);
    const Matrix eval_a = model.forward(model.make_batch(recs), Mode::Eval);
    const Matrix eval_b = model.forward(model.make_batch(recs), Mode::Eval, 1234);
    CHECK(eval_a == eval_b);
}

TEST_CASE("padding does not change a sequence's logits") {
    Classifier model(small_config());
    auto recs = three_records();
    recs[2].answer = "No, and let me explain at length why the answer is no today.";
    const Matrix padded = model.forward(model.make_batch(recs), Mode::Eval);
    const Matrix alone = model.forward(model.make_batch(std::span(recs).subspan(0, 1)), Mode::Eval);
    CHECK((padded.row(0) - alone.row(0)).norm() < 1e-12);
}

TEST_CASE("checkpoints round-trip bit-exactly") {
    fixtures::TempDir dir;
    Classifier model(small_config());
    model.classifier_bias().value(0, 1) = 0.123456789012345678;
    save_checkpoint(model, dir / "ckpt", {{"note", "x"}});
    const Classifier back = load_checkpoint(dir / "ckpt");
    CHECK(back.config().encoder_identifier == "tiny-encoder-small");
    CHECK(back.config().feature_width == 4);
    const auto a = model.parameters();
    const auto b = back.parameters();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i]->name == b[i]->name);
        CHECK(a[i]->value == b[i]->value);
    }
    const auto recs = three_records();
    CHECK(model.forward(model.make_batch(recs), Mode::Eval) == back.forward(back.make_batch(recs), Mode::Eval));
    CHECK_THROWS_AS(load_checkpoint(dir / "missing"), TrainingError);
}

TEST_CASE("hub encoders are refused with the offline alternatives") {
    try {
        resolve_encoder("microsoft/deberta-v3-base");
        FAIL("expected TrainingError");
    } catch (const TrainingError& e) {
        CHECK(std::string(e.what()).find("tiny-encoder") != std::string::npos);
    }
    CHECK_THROWS_AS(resolve_encoder("no-such-model"), TrainingError);
    CHECK(resolve_encoder("tiny-encoder").hidden == 32);
}

TEST_CASE("long inputs are truncated from the answer tail and counted") {
    ModelConfig cfg = small_config();
    cfg.max_sequence_length = 16;
    Classifier model(cfg);
    QAPair p;
    p.question = "Will you go?";
    p.answer = "one two three four five six seven eight";
    const auto ids = model.encode_pair(p);
    CHECK(ids.size() == 16);
    CHECK(ids.front() == kClsId);
    CHECK(ids.back() == kSepId);
    // The question side keeps its 6 tokens (punctuation included); the
    // answer keeps 7 of its 10.
    CHECK(ids[7] == kSepId);
    CHECK(model.truncation_count() == 1);

    QAPair short_pair;
    short_pair.question = "Go?";
    short_pair.answer = "Yes.";
    model.encode_pair(short_pair);
    CHECK(model.truncation_count() == 1);
}

TEST_CASE("model configuration is validated") {
    ModelConfig cfg = small_config();
    cfg.max_sequence_length = 1000;
    CHECK_THROWS_AS(Classifier{cfg}, TrainingError);
    cfg = small_config();
    cfg.dropout = 1.0;
    CHECK_THROWS_AS(validate(cfg), TrainingError);
}

TEST_CASE("argmax breaks ties toward the smallest code") {
    RowVector v(3);
    v << 0.5, 0.5, 0.1;
    CHECK(argmax_label(v) == 0);
    v << 0.1, 0.7, 0.7;
    CHECK(argmax_label(v) == 1);
}
