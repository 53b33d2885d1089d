#include <doctest.h>

#include <cmath>
#include <numeric>
#include <set>

#include "clarity/error.hpp"
#include "clarity/train.hpp"
#include "fixtures.hpp"

using namespace clarity;

namespace {

/// Straight-line softmax and focal term used as the reference.
double reference_focal(const Matrix& logits, const std::vector<int>& y, double gamma, const std::vector<double>& alpha,
                       const std::vector<double>& w) {
    double num = 0.0, den = 0.0;
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        double z = 0.0;
        for (Eigen::Index c = 0; c < logits.cols(); ++c) z += std::exp(logits(i, c));
        const double pt = std::exp(logits(i, y[static_cast<std::size_t>(i)])) / z;
        const double a = alpha.empty() ? 1.0 : alpha[static_cast<std::size_t>(y[static_cast<std::size_t>(i)])];
        const double wi = w.empty() ? 1.0 : w[static_cast<std::size_t>(i)];
        num += wi * a * std::pow(1.0 - pt, gamma) * -std::log(pt);
        den += wi;
    }
    return num / den;
}

Matrix random_logits(Rng& rng, int rows, int cols, double scale) {
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = (rng.uniform() * 2.0 - 1.0) * scale;
    return m;
}

ModelConfig small_model() {
    ModelConfig cfg;
    cfg.encoder_identifier = "tiny-encoder-small";
    cfg.max_sequence_length = 48;
    cfg.feature_width = 4;
    cfg.init_seed = 1;
    return cfg;
}

}  // namespace

TEST_CASE("gamma = 0 reduces focal loss to weighted cross-entropy") {
    Rng rng(2);
    for (int trial = 0; trial < 100; ++trial) {
        const Matrix logits = random_logits(rng, 5, 3, 4.0);
        std::vector<int> y(5);
        std::vector<double> w(5);
        for (std::size_t i = 0; i < 5; ++i) {
            y[i] = static_cast<int>(rng.index(3));
            w[i] = 0.5 + rng.uniform();
        }
        const auto r = focal_loss(logits, y, {0.0, {}}, w);
        CHECK(r.loss == doctest::Approx(reference_focal(logits, y, 0.0, {}, w)).epsilon(1e-12));
    }
}

TEST_CASE("focal loss at p_t = 0.5 with gamma = 2") {
    Matrix logits(1, 3);
    logits << std::log(2.0), 0.0, 0.0;
    const auto r = focal_loss(logits, {0}, {2.0, {}});
    CHECK(r.loss == doctest::Approx(0.25 * std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("focal loss matches the reference with class and sample weights") {
    Rng rng(8);
    const std::vector<double> alpha{0.5634, 1.0925, 3.2285};
    for (int trial = 0; trial < 50; ++trial) {
        const Matrix logits = random_logits(rng, 4, 3, 3.0);
        const std::vector<int> y{0, 1, 2, static_cast<int>(rng.index(3))};
        const std::vector<double> w{1.0, 0.7, 0.5, 1.0};
        const auto r = focal_loss(logits, y, {2.0, alpha}, w);
        CHECK(r.loss == doctest::Approx(reference_focal(logits, y, 2.0, alpha, w)).epsilon(1e-12));
        CHECK(r.weight_sum == doctest::Approx(3.2));
    }
}

TEST_CASE("focal gradient matches central differences") {
    Rng rng(4);
    const std::vector<double> alpha{1.0, 2.0, 0.5};
    for (double gamma : {0.0, 0.5, 1.0, 2.0, 3.0}) {
        const Matrix logits = random_logits(rng, 3, 3, 2.0);
        const std::vector<int> y{0, 2, 1};
        const std::vector<double> w{1.0, 0.5, 0.7};
        const auto r = focal_loss(logits, y, {gamma, alpha}, w);
        const double h = 1e-6;
        for (Eigen::Index i = 0; i < logits.size(); ++i) {
            Matrix up = logits, down = logits;
            up.data()[i] += h;
            down.data()[i] -= h;
            const double num = (focal_loss(up, y, {gamma, alpha}, w).weighted_sum -
                                focal_loss(down, y, {gamma, alpha}, w).weighted_sum) /
                               (2.0 * h);
            CHECK(r.grad_sum.data()[i] == doctest::Approx(num).epsilon(1e-6));
        }
    }
}

TEST_CASE("focal loss decreases as the true-class probability rises") {
    double previous = INFINITY;
    for (double z = -4.0; z <= 6.0; z += 0.25) {
        Matrix logits(1, 3);
        logits << z, 0.0, 0.0;
        const double l = focal_loss(logits, {0}, {2.0, {}}).loss;
        CHECK(l < previous);
        previous = l;
    }
}

TEST_CASE("scaling every sample weight leaves the loss unchanged") {
    Rng rng(5);
    const Matrix logits = random_logits(rng, 4, 3, 2.0);
    const std::vector<int> y{0, 1, 2, 1};
    const auto a = focal_loss(logits, y, {2.0, {}}, {1.0, 0.7, 0.5, 1.0});
    const auto b = focal_loss(logits, y, {2.0, {}}, {2.0, 1.4, 1.0, 2.0});
    CHECK(a.loss == doctest::Approx(b.loss).epsilon(1e-12));
}

TEST_CASE("focal loss rejects invalid input") {
    Matrix logits(1, 3);
    logits << NAN, 0.0, 0.0;
    CHECK_THROWS_AS(focal_loss(logits, {0}, {2.0, {}}), TrainingError);
    logits << 0.0, 0.0, 0.0;
    CHECK_THROWS_AS(focal_loss(logits, {3}, {2.0, {}}), TrainingError);
    CHECK_THROWS_AS(focal_loss(logits, {0}, {2.0, {1.0, 1.0}}), TrainingError);
}

TEST_CASE("inverse-frequency weights for the reference training counts") {
    const auto w = inverse_frequency_weights({2040, 1052, 356});
    REQUIRE(w.size() == 3);
    CHECK(w[0] == doctest::Approx(3448.0 / (3 * 2040)));
    CHECK(w[1] == doctest::Approx(3448.0 / (3 * 1052)));
    CHECK(w[2] == doctest::Approx(3448.0 / (3 * 356)));
    CHECK(w[0] == doctest::Approx(0.5634).epsilon(1e-4));
    CHECK(w[1] == doctest::Approx(1.0925).epsilon(1e-4));
    CHECK(w[2] == doctest::Approx(3.2285).epsilon(1e-4));
    CHECK(w[2] / w[0] == doctest::Approx(2040.0 / 356.0));
    CHECK_THROWS_AS(inverse_frequency_weights({5, 0, 3}), TrainingError);
}

TEST_CASE("layer-wise rates decay geometrically and cover every parameter once") {
    Classifier model(small_model());
    const auto groups = llrd_param_groups(model, 3e-5, 0.9);
    REQUIRE(groups.size() == 3);
    std::set<const Param*> seen;
    for (std::size_t g = 0; g < groups.size(); ++g) {
        CHECK(groups[g].depth == static_cast<int>(g));
        CHECK(groups[g].lr == doctest::Approx(3e-5 * std::pow(0.9, static_cast<double>(g))));
        for (const Param* p : groups[g].params) {
            CHECK(p->depth == groups[g].depth);
            CHECK(seen.insert(p).second);
        }
    }
    CHECK(seen.size() == model.parameters().size());
    const Param* head = &model.classifier_weight();
    CHECK(std::find(groups[0].params.begin(), groups[0].params.end(), head) != groups[0].params.end());
}

TEST_CASE("warmup and cosine schedule boundaries") {
    CHECK(warmup_steps(100, 0.15) == 15);
    CHECK(warmup_steps(10, 0.3) == 3);
    CHECK(warmup_steps(7, 0.0) == 0);
    CHECK(lr_multiplier(0, 100, 0.1) == 0.0);
    CHECK(lr_multiplier(5, 100, 0.1) == doctest::Approx(0.5));
    CHECK(lr_multiplier(10, 100, 0.1) == doctest::Approx(1.0));
    CHECK(lr_multiplier(55, 100, 0.1) == doctest::Approx(0.5));
    CHECK(lr_multiplier(100, 100, 0.1) == doctest::Approx(0.0));
    CHECK(linear_lr_multiplier(55, 100, 0.1) == doctest::Approx(0.5));
    CHECK(linear_lr_multiplier(100, 100, 0.1) == doctest::Approx(0.0));
    double previous = 2.0;
    for (std::size_t s = 10; s <= 100; ++s) {
        const double m = lr_multiplier(s, 100, 0.1);
        CHECK(m <= previous);
        previous = m;
    }
}

TEST_CASE("accumulated micro-batches match one large batch") {
    const Dataset d = fixtures::toy_corpus(32, 3);
    std::vector<std::size_t> ids(32);
    std::iota(ids.begin(), ids.end(), std::size_t{0});
    Classifier a(small_model());
    Classifier b(small_model());
    const FocalLossConfig loss{2.0, {0.8, 1.1, 1.4}};
    std::vector<QAPair> recs = d.records;
    for (std::size_t i = 0; i < recs.size(); i += 3) recs[i].sample_weight = 0.5;

    const auto [la, wa] = accumulate_gradients(a, recs, ids, 8, loss, 77);
    const auto [lb, wb] = accumulate_gradients(b, recs, ids, 32, loss, 77);
    CHECK(la == doctest::Approx(lb).epsilon(1e-12));
    CHECK(wa == doctest::Approx(wb));
    const auto pa = a.parameters();
    const auto pb = b.parameters();
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK((pa[i]->grad - pb[i]->grad).norm() < 1e-10);

    AdamW oa, ob;
    const auto ga = llrd_param_groups(a, 1e-3, 0.9);
    const auto gb = llrd_param_groups(b, 1e-3, 0.9);
    oa.step(ga, 1.0);
    ob.step(gb, 1.0);
    double diff = 0.0;
    for (std::size_t i = 0; i < pa.size(); ++i)
        diff = std::max(diff, (pa[i]->value - pb[i]->value).cwiseAbs().maxCoeff());
    CHECK(diff < 1e-5);
}

TEST_CASE("AdamW first step moves each weight by about lr") {
    Param p("w", Matrix::Constant(2, 2, 1.0), 0, true);
    p.grad << 0.3, -2.0, 5.0, -0.01;
    Param b("b", Matrix::Constant(1, 2, 1.0), 0, false);
    b.grad << 1.0, -1.0;
    AdamW opt(AdamW::Options{0.9, 0.999, 1e-8, 0.1});
    opt.step({ParamGroup{0, 0.01, {&p, &b}}}, 1.0);
    // Decay shrinks decayed weights by lr * wd before the Adam step.
    CHECK(p.value(0, 0) == doctest::Approx(1.0 * (1 - 0.001) - 0.01).epsilon(1e-6));
    CHECK(p.value(0, 1) == doctest::Approx(1.0 * (1 - 0.001) + 0.01).epsilon(1e-6));
    CHECK(b.value(0, 0) == doctest::Approx(0.99).epsilon(1e-6));
    CHECK(opt.steps_taken() == 1);
}

TEST_CASE("gradient clipping caps the global norm") {
    Param p("w", Matrix::Zero(1, 2), 0, true);
    p.grad << 3.0, 4.0;
    CHECK(clip_grad_norm({&p}, 1.0) == doctest::Approx(5.0));
    CHECK(p.grad.norm() == doctest::Approx(1.0));
    CHECK(clip_grad_norm({&p}, 10.0) == doctest::Approx(1.0));
    CHECK(p.grad.norm() == doctest::Approx(1.0));
}

TEST_CASE("early stopping treats equal scores as no improvement") {
    EarlyStopping s(2);
    CHECK_FALSE(s.update(0.5));
    CHECK(s.improved_last());
    CHECK_FALSE(s.update(0.5));
    CHECK_FALSE(s.improved_last());
    CHECK(s.update(0.5));
    CHECK(s.best_epoch() == 1);

    EarlyStopping t(2);
    t.update(0.4);
    t.update(0.3);
    CHECK_FALSE(t.update(0.6));
    CHECK(t.best_epoch() == 3);
    CHECK(t.best_score() == 0.6);
}

TEST_CASE("training configuration is validated") {
    TrainingConfig cfg;
    CHECK(cfg.effective_batch() == 32);
    CHECK_NOTHROW(validate(cfg));
    cfg.micro_batch = 0;
    CHECK_THROWS_AS(validate(cfg), TrainingError);
    cfg = TrainingConfig{};
    cfg.warmup_fraction = 1.5;
    CHECK_THROWS_AS(validate(cfg), TrainingError);
    cfg = TrainingConfig{};
    cfg.llrd_alpha = 0.0;
    CHECK_THROWS_AS(validate(cfg), TrainingError);
}

TEST_CASE("degenerate validation sets are refused") {
    const Dataset constant = fixtures::counted_dataset(0, 5, 0);
    CHECK_THROWS_AS(check_validation_integrity(constant, Task::Clarity), IntegrityError);
    CHECK_THROWS_AS(check_validation_integrity(Dataset{}, Task::Clarity), IntegrityError);
    CHECK_NOTHROW(check_validation_integrity(fixtures::counted_dataset(1, 1, 0), Task::Clarity));
    const Dataset train = fixtures::toy_corpus(12);
    CHECK_THROWS_AS(train_loop(Classifier(small_model()), train, constant, TrainingConfig{}), IntegrityError);
}

TEST_CASE("training is reproducible and records one lr per step") {
    const Dataset all = fixtures::toy_corpus(30, 4);
    const auto [train, dev] = stratified_split(all, 0.3, 1);
    TrainingConfig cfg;
    cfg.base_lr = 5e-3;
    cfg.micro_batch = 4;
    cfg.accumulation_steps = 2;
    cfg.max_epochs = 2;
    cfg.patience = 5;
    const auto a = train_loop(Classifier(small_model()), train, dev, cfg);
    const auto b = train_loop(Classifier(small_model()), train, dev, cfg);
    REQUIRE(a.history.epochs.size() == 2);
    const std::size_t steps = (train.size() + 7) / 8;
    for (std::size_t e = 0; e < 2; ++e) {
        CHECK(a.history.epochs[e].lr_trace.size() == steps);
        CHECK(a.history.epochs[e].train_loss == b.history.epochs[e].train_loss);
        CHECK(a.history.epochs[e].dev_macro_f1 == b.history.epochs[e].dev_macro_f1);
    }
    CHECK(a.history.epochs.back().lr_trace.back() == doctest::Approx(0.0).epsilon(1e-12));

    fixtures::TempDir dir;
    write_history(a.history, dir / "h.tsv");
    const std::string h = fixtures::read_file(dir / "h.tsv");
    CHECK(h.rfind("epoch\ttrain_loss\tdev_macro_f1\tfinal_lr\tsteps\n", 0) == 0);
    CHECK(std::count(h.begin(), h.end(), '\n') == 3);
}

TEST_CASE("stratified k-fold partitions every class evenly") {
    const Dataset d = fixtures::counted_dataset(10, 11, 7);
    const auto folds = stratified_kfold(d, 3, 5);
    REQUIRE(folds.size() == 3);
    std::map<std::string, int> dev_hits;
    for (const auto& [train, dev] : folds) {
        CHECK(train.size() + dev.size() == d.size());
        std::set<std::string> tr;
        for (const auto& r : train.records) tr.insert(r.id);
        for (const auto& r : dev.records) {
            CHECK(tr.count(r.id) == 0);
            ++dev_hits[r.id];
        }
    }
    CHECK(dev_hits.size() == d.size());
    for (const auto& [id, n] : dev_hits) CHECK(n == 1);
    for (std::size_t c = 0; c < 3; ++c) {
        std::size_t lo = SIZE_MAX, hi = 0;
        for (const auto& f : folds) {
            const std::size_t n = class_counts(f.second, Task::Clarity)[c];
            lo = std::min(lo, n);
            hi = std::max(hi, n);
        }
        CHECK(hi - lo <= 1);
    }
    CHECK_THROWS_AS(stratified_kfold(fixtures::counted_dataset(10, 10, 2), 3, 5), DataError);
    CHECK_THROWS_AS(stratified_kfold(d, 1, 5), DataError);
}

TEST_CASE("a 3 x 3 grid yields nine ranked rows") {
    const Dataset all = fixtures::toy_corpus(24, 9);
    const auto [train, dev] = stratified_split(all, 0.25, 2);
    TrainingConfig fixed;
    fixed.micro_batch = 6;
    fixed.accumulation_steps = 1;
    fixed.max_epochs = 1;
    Grid grid;
    grid.base_lrs = {1e-3, 2e-3, 5e-3};
    grid.alphas = {0.8, 0.9, 0.95};
    const auto cells = grid_search(grid, small_model(), train, dev, fixed);
    REQUIRE(cells.size() == 9);
    std::set<std::pair<double, double>> combos;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        combos.insert({cells[i].base_lr, cells[i].llrd_alpha});
        REQUIRE(cells[i].dev_macro_f1.has_value());
        if (i > 0) CHECK(*cells[i - 1].dev_macro_f1 >= *cells[i].dev_macro_f1);
    }
    CHECK(combos.size() == 9);

    fixtures::TempDir dir;
    write_grid_table(cells, dir / "g.tsv");
    const std::string g = fixtures::read_file(dir / "g.tsv");
    CHECK(std::count(g.begin(), g.end(), '\n') == 10);

    grid.alphas = {0.9, -1.0};
    grid.base_lrs = {1e-3};
    const auto mixed = grid_search(grid, small_model(), train, dev, fixed);
    REQUIRE(mixed.size() == 2);
    CHECK(mixed[0].dev_macro_f1.has_value());
    CHECK_FALSE(mixed[1].dev_macro_f1.has_value());
    CHECK_FALSE(mixed[1].error.empty());
}
