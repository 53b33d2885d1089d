#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "clarity/data.hpp"
#include "clarity/model.hpp"
#include "clarity/train.hpp"

namespace clarity {

// ---------------------------------------------------------------------------
// Majority class
// ---------------------------------------------------------------------------

/// Most frequent training label (ties to the lowest code), predicted for
/// every test record.
std::vector<int> majority_baseline(const Dataset& train, const Dataset& test, Task task = Task::Clarity);

// ---------------------------------------------------------------------------
// TF-IDF
// ---------------------------------------------------------------------------

/// Sorted (column, value) pairs.
using SparseRow = std::vector<std::pair<int, double>>;

struct SparseMatrix {
    int cols = 0;
    std::vector<SparseRow> rows;

    std::size_t size() const noexcept { return rows.size(); }
};

double dot(const SparseRow& a, const SparseRow& b);
double squared_norm(const SparseRow& a);

struct TfidfConfig {
    int max_features = 5000;
    int ngram_min = 1;
    int ngram_max = 2;
    int min_df = 2;
    double max_df = 0.95;
    bool use_stopwords = true;
    bool sublinear_tf = false;
    bool l2_normalize = true;
};

void validate(const TfidfConfig& cfg);

/// English stopword list shipped in resources/stopwords.txt.
const std::set<std::string>& builtin_stopwords();
std::set<std::string> load_stopwords(const std::filesystem::path& path);

/// Smoothed idf, ln((1 + N) / (1 + df)) + 1, times raw or 1 + ln(tf) term
/// frequency. Terms past max_features are cut by corpus frequency with
/// lexicographic tie-breaking.
class TfidfVectorizer {
public:
    explicit TfidfVectorizer(TfidfConfig cfg, std::set<std::string> stopwords = builtin_stopwords());

    /// Throws DataError for an empty corpus or empty vocabulary.
    SparseMatrix fit_transform(const std::vector<std::string>& corpus);
    SparseMatrix transform(const std::vector<std::string>& corpus) const;

    const std::map<std::string, int>& vocabulary() const noexcept { return vocab_; }
    const std::vector<double>& idf() const noexcept { return idf_; }

    std::vector<std::string> analyze(std::string_view doc) const;

private:
    TfidfConfig cfg_;
    std::set<std::string> stopwords_;
    std::map<std::string, int> vocab_;
    std::vector<double> idf_;
};

/// "balanced" class weights: n / (K * n_c) with K the number of classes
/// present; absent classes get 0.
std::vector<double> balanced_class_weights(const std::vector<int>& labels, int k);

// ---------------------------------------------------------------------------
// Classical models
// ---------------------------------------------------------------------------

class ClassicalModel {
public:
    virtual ~ClassicalModel() = default;
    virtual std::vector<int> predict(const SparseMatrix& x) const = 0;
    virtual std::string describe() const = 0;
};

/// Multinomial logistic regression, 0.5 ||W||^2 + C sum_i w_i CE_i, fit by
/// gradient descent with backtracking line search.
class LogisticRegression : public ClassicalModel {
public:
    struct Options {
        double c = 1.0;
        int max_iter = 300;
        double tol = 1e-6;
    };

    LogisticRegression(Options opts, int k) : opts_(opts), k_(k) {}
    void fit(const SparseMatrix& x, const std::vector<int>& y, const std::vector<double>& class_weights);
    std::vector<int> predict(const SparseMatrix& x) const override;
    std::string describe() const override;
    Matrix decision_function(const SparseMatrix& x) const;

private:
    Options opts_;
    int k_;
    Matrix w_;  // k x (cols + 1), last column is the intercept
};

enum class SvmKernel { Linear, Rbf };

/// One-vs-rest soft-margin SVM trained by dual coordinate descent on the
/// hinge loss. The bias is folded into the kernel as K(x, y) + 1.
class KernelSvm : public ClassicalModel {
public:
    struct Options {
        double c = 1.0;
        SvmKernel kernel = SvmKernel::Linear;
        /// rbf width; <= 0 selects 1 / (n_features * variance).
        double gamma = 0.0;
        int max_epochs = 200;
        double tol = 1e-3;
        std::uint64_t seed = 0;
    };

    KernelSvm(Options opts, int k) : opts_(opts), k_(k) {}
    void fit(const SparseMatrix& x, const std::vector<int>& y, const std::vector<double>& class_weights);
    std::vector<int> predict(const SparseMatrix& x) const override;
    std::string describe() const override;

private:
    double kernel(const SparseRow& a, double na, const SparseRow& b, double nb) const;

    Options opts_;
    int k_;
    double gamma_ = 0.0;
    std::vector<SparseRow> support_;
    std::vector<double> support_norms_;
    Matrix coef_;  // k x n_support, alpha_i * y_i per class
};

struct SvmGridResult {
    double c = 0.0;
    SvmKernel kernel = SvmKernel::Linear;
    double cv_macro_f1 = 0.0;
};

/// Random forest of CART trees (gini, bootstrap, sqrt(features) per split).
class RandomForest : public ClassicalModel {
public:
    struct Options {
        int trees = 100;
        int max_depth = 20;
        int min_samples_split = 10;
        int min_samples_leaf = 4;
        std::uint64_t seed = 0;
    };

    RandomForest(Options opts, int k) : opts_(opts), k_(k) {}
    void fit(const SparseMatrix& x, const std::vector<int>& y, const std::vector<double>& class_weights);
    std::vector<int> predict(const SparseMatrix& x) const override;
    std::string describe() const override;

    struct Node {
        int feature = -1;
        double threshold = 0.0;
        int left = -1;
        int right = -1;
        std::vector<double> distribution;
    };
    using Tree = std::vector<Node>;

private:
    Options opts_;
    int k_;
    std::vector<Tree> trees_;
};

enum class ClassicalKind { LogReg, Svm, RandomForest };

struct ClassicalConfig {
    std::uint64_t seed = 0;
    int cv_folds = 3;
    std::vector<double> svm_c_grid{0.1, 1.0, 10.0};
    std::vector<SvmKernel> svm_kernels{SvmKernel::Linear, SvmKernel::Rbf};
};

struct ClassicalFit {
    std::unique_ptr<ClassicalModel> model;
    /// SVM only: every cross-validated grid cell, in grid order.
    std::vector<SvmGridResult> svm_grid;
};

/// Fits one classical model with balanced class weights. Throws DataError
/// when fewer than two classes are present.
ClassicalFit train_classical(ClassicalKind kind, const SparseMatrix& x, const std::vector<int>& y, int k,
                             const ClassicalConfig& cfg = {});

// ---------------------------------------------------------------------------
// Plain transformer fine-tuning
// ---------------------------------------------------------------------------

enum class TransformerKind { Distil, Base };

struct TransformerBaselineConfig {
    std::string encoder_identifier;
    TrainingConfig training;
};

/// Plain fine-tune settings: class-weighted cross-entropy, linear warmup 10%
/// then linear decay, no LLRD and no boolean features. Distil uses batch 16,
/// Base batch 8; both 4 epochs at lr 2e-5.
TransformerBaselineConfig transformer_baseline_config(TransformerKind kind);

TrainResult simple_transformer_baseline(const TransformerBaselineConfig& cfg, const Dataset& train,
                                        const Dataset& dev, int max_sequence_length = 256);

// ---------------------------------------------------------------------------
// Comparison table
// ---------------------------------------------------------------------------

struct ReferenceScore {
    std::string model;
    double test_macro_f1 = 0.0;
};

/// Full-scale test macro F1 targets for the baseline comparison table.
const std::vector<ReferenceScore>& reference_baseline_scores();

/// Markdown table of local scores next to the full-scale targets.
std::string render_comparison(const std::vector<std::pair<std::string, double>>& local);

}  // namespace clarity
