#include <doctest.h>

#include <cmath>

#include "clarity/baselines.hpp"
#include "clarity/error.hpp"
#include "clarity/eval.hpp"
#include "fixtures.hpp"

using namespace clarity;

namespace {

TfidfConfig plain_unigrams() {
    TfidfConfig cfg;
    cfg.ngram_max = 1;
    cfg.min_df = 1;
    cfg.max_df = 1.0;
    cfg.use_stopwords = false;
    cfg.l2_normalize = false;
    return cfg;
}

double value_at(const SparseRow& row, int col) {
    for (const auto& [c, v] : row)
        if (c == col) return v;
    return 0.0;
}

struct ToySplit {
    Dataset train, test;
    SparseMatrix xtr, xte;
    std::vector<int> ytr, yte;
};

ToySplit toy_features() {
    ToySplit s;
    std::tie(s.train, s.test) = stratified_split(fixtures::toy_corpus(90, 11), 0.3, 4);
    TfidfConfig cfg;
    cfg.min_df = 1;
    TfidfVectorizer vec(cfg);
    std::vector<std::string> a, b;
    for (const auto& r : s.train.records) {
        a.push_back(r.answer);
        s.ytr.push_back(code(*r.clarity));
    }
    for (const auto& r : s.test.records) {
        b.push_back(r.answer);
        s.yte.push_back(code(*r.clarity));
    }
    s.xtr = vec.fit_transform(a);
    s.xte = vec.transform(b);
    return s;
}

}  // namespace

TEST_CASE("tf-idf values for a three-document corpus") {
    TfidfVectorizer vec(plain_unigrams(), {});
    const auto x = vec.fit_transform({"apple banana", "apple cherry", "banana banana apple"});
    REQUIRE(vec.vocabulary().size() == 3);
    CHECK(vec.vocabulary().at("apple") == 0);
    CHECK(vec.vocabulary().at("banana") == 1);
    CHECK(vec.vocabulary().at("cherry") == 2);
    // df = 3, 2, 1 over N = 3: idf = ln(4/4)+1, ln(4/3)+1, ln(4/2)+1.
    const double idf_banana = 1.28768207245178;
    const double idf_cherry = 1.69314718055995;
    CHECK(vec.idf()[0] == doctest::Approx(1.0));
    CHECK(vec.idf()[1] == doctest::Approx(idf_banana).epsilon(1e-12));
    CHECK(vec.idf()[2] == doctest::Approx(idf_cherry).epsilon(1e-12));
    CHECK(value_at(x.rows[2], 0) == doctest::Approx(1.0));
    CHECK(value_at(x.rows[2], 1) == doctest::Approx(2.0 * idf_banana).epsilon(1e-12));
    CHECK(value_at(x.rows[1], 2) == doctest::Approx(idf_cherry).epsilon(1e-12));
    CHECK(value_at(x.rows[0], 2) == 0.0);

    TfidfConfig norm = plain_unigrams();
    norm.l2_normalize = true;
    TfidfVectorizer nv(norm, {});
    for (const auto& row : nv.fit_transform({"apple banana", "apple cherry", "banana banana apple"}).rows)
        CHECK(squared_norm(row) == doctest::Approx(1.0));
}

TEST_CASE("min_df drops terms seen in a single document") {
    TfidfConfig cfg = plain_unigrams();
    cfg.min_df = 2;
    TfidfVectorizer vec(cfg, {});
    vec.fit_transform({"apple banana", "apple cherry", "banana banana apple"});
    CHECK(vec.vocabulary().count("cherry") == 0);
    CHECK(vec.vocabulary().size() == 2);
}

TEST_CASE("bigrams, stopwords and the feature cap") {
    TfidfConfig cfg = plain_unigrams();
    cfg.ngram_max = 2;
    cfg.use_stopwords = true;
    TfidfVectorizer vec(cfg, {"the"});
    CHECK(vec.analyze("The tax cut, the plan") == std::vector<std::string>{"tax", "cut", "plan", "tax cut", "cut plan"});
    cfg.max_features = 2;
    TfidfVectorizer capped(cfg, {});
    capped.fit_transform({"b b a", "c b a", "d"});
    // Frequencies: b 3, a 2, then ties at 1 resolved lexicographically.
    CHECK(capped.vocabulary().size() == 2);
    CHECK(capped.vocabulary().count("a") == 1);
    CHECK(capped.vocabulary().count("b") == 1);
    TfidfVectorizer empty(plain_unigrams(), {});
    CHECK_THROWS_AS(empty.fit_transform({}), DataError);
    CHECK_THROWS_AS(empty.transform({"x"}), DataError);
}

TEST_CASE("balanced weights count the classes present") {
    const auto w = balanced_class_weights({0, 0, 0, 1}, 3);
    CHECK(w[0] == doctest::Approx(4.0 / (2 * 3)));
    CHECK(w[1] == doctest::Approx(4.0 / (2 * 1)));
    CHECK(w[2] == 0.0);
}

TEST_CASE("majority baseline predicts the most frequent training class") {
    const Dataset train = fixtures::counted_dataset(2, 5, 1);
    const Dataset test = fixtures::counted_dataset(3, 3, 3);
    const auto preds = majority_baseline(train, test);
    CHECK(preds == std::vector<int>(9, code(ClarityLabel::Ambivalent)));
    CHECK(majority_baseline(fixtures::counted_dataset(2, 2, 0), test).front() == 0);
}

TEST_CASE("logistic regression separates a separable training set") {
    const ToySplit s = toy_features();
    const auto fit = train_classical(ClassicalKind::LogReg, s.xtr, s.ytr, 3);
    const auto pred = fit.model->predict(s.xtr);
    CHECK(accuracy(confusion_matrix(s.ytr, pred, 3)) == 1.0);
}

TEST_CASE("every classical baseline beats the majority class") {
    const ToySplit s = toy_features();
    const auto maj = majority_baseline(s.train, s.test);
    const double floor = macro_f1(confusion_matrix(s.yte, maj, 3));
    for (auto kind : {ClassicalKind::LogReg, ClassicalKind::Svm, ClassicalKind::RandomForest}) {
        const auto fit = train_classical(kind, s.xtr, s.ytr, 3);
        const double f1 = macro_f1(confusion_matrix(s.yte, fit.model->predict(s.xte), 3));
        INFO(fit.model->describe());
        CHECK(f1 > floor);
    }
}

TEST_CASE("the SVM grid cross-validates every C and kernel") {
    const ToySplit s = toy_features();
    const auto fit = train_classical(ClassicalKind::Svm, s.xtr, s.ytr, 3);
    REQUIRE(fit.svm_grid.size() == 6);
    CHECK(fit.svm_grid[0].c == 0.1);
    CHECK(fit.svm_grid[0].kernel == SvmKernel::Linear);
    CHECK(fit.svm_grid[5].c == 10.0);
    CHECK(fit.svm_grid[5].kernel == SvmKernel::Rbf);
    for (const auto& cell : fit.svm_grid) CHECK((cell.cv_macro_f1 >= 0.0 && cell.cv_macro_f1 <= 1.0));
}

TEST_CASE("classical baselines are deterministic for a fixed seed") {
    const ToySplit s = toy_features();
    for (auto kind : {ClassicalKind::LogReg, ClassicalKind::Svm, ClassicalKind::RandomForest}) {
        const auto a = train_classical(kind, s.xtr, s.ytr, 3, {.seed = 5});
        const auto b = train_classical(kind, s.xtr, s.ytr, 3, {.seed = 5});
        CHECK(a.model->predict(s.xte) == b.model->predict(s.xte));
    }
}

TEST_CASE("a single-class training set is refused") {
    const ToySplit s = toy_features();
    CHECK_THROWS_AS(train_classical(ClassicalKind::LogReg, s.xtr, std::vector<int>(s.ytr.size(), 1), 3), DataError);
}

TEST_CASE("transformer baseline settings") {
    const auto distil = transformer_baseline_config(TransformerKind::Distil);
    const auto base = transformer_baseline_config(TransformerKind::Base);
    CHECK(distil.training.micro_batch == 16);
    CHECK(base.training.micro_batch == 8);
    for (const auto* c : {&distil, &base}) {
        CHECK(c->training.base_lr == 2e-5);
        CHECK(c->training.max_epochs == 4);
        CHECK(c->training.gamma == 0.0);
        CHECK(c->training.llrd_alpha == 1.0);
        CHECK(c->training.schedule == ScheduleKind::WarmupLinear);
        CHECK(c->training.warmup_fraction == doctest::Approx(0.1));
    }
    CHECK(distil.encoder_identifier != base.encoder_identifier);

    const auto [train, dev] = stratified_split(fixtures::toy_corpus(24, 2), 0.25, 1);
    const auto run = simple_transformer_baseline(distil, train, dev, 48);
    CHECK_FALSE(run.model.config().use_features);
    CHECK(run.history.epochs.size() <= 4);
    CHECK_FALSE(run.history.epochs.empty());
}

TEST_CASE("comparison table lists local scores beside full-scale targets") {
    const auto& refs = reference_baseline_scores();
    CHECK(refs[1].test_macro_f1 == 0.4476);
    CHECK(refs[5].test_macro_f1 == 0.5628);
    const std::string table = render_comparison({{"TF-IDF + Logistic Regression", 0.91}, {"local extra", 0.5}});
    CHECK(table.find("| TF-IDF + Logistic Regression | 0.9100 | 0.4476 |") != std::string::npos);
    CHECK(table.find("| local extra | 0.5000 | - |") != std::string::npos);
    CHECK(table.find("| BERT-base | - | 0.5628 |") != std::string::npos);
}
