#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "clarity/data.hpp"

namespace clarity {

/// Rows are true labels, columns are predictions.
class ConfusionMatrix {
public:
    ConfusionMatrix() = default;
    explicit ConfusionMatrix(std::vector<std::string> label_names);
    ConfusionMatrix(std::vector<std::string> label_names, std::vector<std::vector<long>> counts);

    int size() const noexcept { return static_cast<int>(names_.size()); }
    long at(int truth, int pred) const { return counts_[truth][pred]; }
    void add(int truth, int pred, long n = 1);

    long total() const;
    long row_total(int c) const;
    long col_total(int c) const;
    long trace() const;

    const std::vector<std::string>& label_names() const noexcept { return names_; }
    const std::vector<std::vector<long>>& counts() const noexcept { return counts_; }

    bool operator==(const ConfusionMatrix&) const = default;

private:
    std::vector<std::string> names_;
    std::vector<std::vector<long>> counts_;
};

/// Throws DataError on length mismatch or a label outside [0, K).
ConfusionMatrix confusion_matrix(const std::vector<int>& truths, const std::vector<int>& preds, int k,
                                 std::vector<std::string> label_names = {});

struct ClassMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    long support = 0;
};

/// Zero denominators yield 0.
std::vector<ClassMetrics> per_class_prf(const ConfusionMatrix& m);

/// Unweighted mean of per-class F1 over all K classes.
double macro_f1(const ConfusionMatrix& m);

double accuracy(const ConfusionMatrix& m);

enum class ReportFormat { PlainText, Markdown };

/// "count (xx.x%)" with round-half-away-from-zero on the tenth.
std::string count_with_percent(long count, long total);

std::string render_report(const ConfusionMatrix& m, const std::vector<ClassMetrics>& metrics, ReportFormat format);

/// key=value lines: macro_f1, accuracy, total, and per-class p/r/f1/support.
std::string metrics_text(const ConfusionMatrix& m);

/// Stored matrix: header row of label names, then one row of counts per
/// true label, tab separated.
void save_matrix(const ConfusionMatrix& m, const std::filesystem::path& path);
ConfusionMatrix load_matrix(const std::filesystem::path& path);

struct ScoredPrediction {
    QAPair pair;
    int predicted = 0;
    std::optional<double> confidence;
};

/// Misclassified pairs grouped by (true, predicted). Buckets are sorted by
/// confidence descending when every entry has one, else kept in input order.
std::map<std::pair<int, int>, std::vector<ScoredPrediction>> error_buckets(
    const std::vector<ScoredPrediction>& pairs, Task task = Task::Clarity);

/// Share of all errors that fall between the two given classes (either
/// direction). Zero when there are no errors.
double confusion_share(const ConfusionMatrix& m, int a, int b);

/// Aligns gold records with predictions by id. Throws DataError for a
/// prediction id missing from gold or a gold record without a prediction.
std::pair<std::vector<int>, std::vector<int>> align_predictions(const Dataset& gold,
                                                                const std::vector<Prediction>& preds, Task task);

}  // namespace clarity
