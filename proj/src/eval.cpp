#include "clarity/eval.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "clarity/error.hpp"
#include "clarity/text.hpp"

namespace clarity {

ConfusionMatrix::ConfusionMatrix(std::vector<std::string> label_names)
    : names_(std::move(label_names)), counts_(names_.size(), std::vector<long>(names_.size(), 0)) {}

ConfusionMatrix::ConfusionMatrix(std::vector<std::string> label_names, std::vector<std::vector<long>> counts)
    : names_(std::move(label_names)), counts_(std::move(counts)) {
    if (counts_.size() != names_.size()) throw DataError("confusion matrix: row count does not match label count");
    for (const auto& row : counts_) {
        if (row.size() != names_.size()) throw DataError("confusion matrix must be square");
        for (long v : row)
            if (v < 0) throw DataError("confusion matrix counts must be non-negative");
    }
}

void ConfusionMatrix::add(int truth, int pred, long n) {
    if (truth < 0 || truth >= size() || pred < 0 || pred >= size())
        throw DataError("confusion matrix: label out of range");
    counts_[truth][pred] += n;
}

long ConfusionMatrix::total() const {
    long t = 0;
    for (const auto& row : counts_)
        for (long v : row) t += v;
    return t;
}

long ConfusionMatrix::row_total(int c) const {
    long t = 0;
    for (long v : counts_[c]) t += v;
    return t;
}

long ConfusionMatrix::col_total(int c) const {
    long t = 0;
    for (const auto& row : counts_) t += row[c];
    return t;
}

long ConfusionMatrix::trace() const {
    long t = 0;
    for (int c = 0; c < size(); ++c) t += counts_[c][c];
    return t;
}

ConfusionMatrix confusion_matrix(const std::vector<int>& truths, const std::vector<int>& preds, int k,
                                 std::vector<std::string> label_names) {
    if (k < 1) throw DataError("confusion matrix needs at least one class");
    if (truths.size() != preds.size())
        throw DataError("confusion matrix: " + std::to_string(truths.size()) + " truths but " +
                        std::to_string(preds.size()) + " predictions");
    if (label_names.empty())
        for (int c = 0; c < k; ++c) label_names.push_back(std::to_string(c));
    if (static_cast<int>(label_names.size()) != k) throw DataError("confusion matrix: wrong number of label names");
    ConfusionMatrix m(std::move(label_names));
    for (std::size_t i = 0; i < truths.size(); ++i) {
        if (truths[i] < 0 || truths[i] >= k) throw DataError("true label " + std::to_string(truths[i]) + " out of range");
        if (preds[i] < 0 || preds[i] >= k) throw DataError("predicted label " + std::to_string(preds[i]) + " out of range");
        m.add(truths[i], preds[i]);
    }
    return m;
}

std::vector<ClassMetrics> per_class_prf(const ConfusionMatrix& m) {
    std::vector<ClassMetrics> out;
    for (int c = 0; c < m.size(); ++c) {
        ClassMetrics cm;
        const long tp = m.at(c, c);
        const long col = m.col_total(c);
        const long row = m.row_total(c);
        cm.support = row;
        cm.precision = col > 0 ? static_cast<double>(tp) / static_cast<double>(col) : 0.0;
        cm.recall = row > 0 ? static_cast<double>(tp) / static_cast<double>(row) : 0.0;
        const double s = cm.precision + cm.recall;
        cm.f1 = s > 0.0 ? 2.0 * cm.precision * cm.recall / s : 0.0;
        out.push_back(cm);
    }
    return out;
}

double macro_f1(const ConfusionMatrix& m) {
    if (m.size() == 0) return 0.0;
    double sum = 0.0;
    for (const auto& c : per_class_prf(m)) sum += c.f1;
    return sum / m.size();
}

double accuracy(const ConfusionMatrix& m) {
    const long t = m.total();
    return t > 0 ? static_cast<double>(m.trace()) / static_cast<double>(t) : 0.0;
}

std::string count_with_percent(long count, long total) {
    long tenths = 0;
    if (total > 0) {
        // Integer rounding avoids binary artifacts at exact .x5 boundaries.
        const long num = 2 * count * 1000 + (count >= 0 ? total : -total);
        tenths = num / (2 * total);
    }
    const long whole = tenths / 10;
    const long frac = tenths % 10;
    const std::string sign = tenths < 0 && whole == 0 ? "-" : "";
    return std::to_string(count) + " (" + sign + std::to_string(whole) + "." + std::to_string(frac < 0 ? -frac : frac) +
           "%)";
}

namespace {

std::string pad_left(const std::string& s, std::size_t width) {
    return s.size() >= width ? s : std::string(width - s.size(), ' ') + s;
}

std::string pad_right(const std::string& s, std::size_t width) {
    return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

struct TextTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

TextTable matrix_grid(const ConfusionMatrix& m) {
    TextTable g;
    const long total = m.total();
    g.header.push_back("True \\ Pred");
    for (const auto& n : m.label_names()) g.header.push_back(n);
    g.header.push_back("Total");
    for (int r = 0; r < m.size(); ++r) {
        std::vector<std::string> row{m.label_names()[r]};
        for (int c = 0; c < m.size(); ++c) row.push_back(std::to_string(m.at(r, c)));
        row.push_back(count_with_percent(m.row_total(r), total));
        g.rows.push_back(std::move(row));
    }
    std::vector<std::string> last{"Total"};
    for (int c = 0; c < m.size(); ++c) last.push_back(count_with_percent(m.col_total(c), total));
    last.push_back(count_with_percent(total, total));
    g.rows.push_back(std::move(last));
    return g;
}

TextTable metrics_grid(const ConfusionMatrix& m, const std::vector<ClassMetrics>& metrics) {
    TextTable g;
    g.header = {"Class", "Precision", "Recall", "F1", "Support"};
    for (std::size_t c = 0; c < metrics.size(); ++c) {
        const auto& cm = metrics[c];
        const std::string name = c < m.label_names().size() ? m.label_names()[c] : std::to_string(c);
        g.rows.push_back({name, text::format_fixed(cm.precision, 4), text::format_fixed(cm.recall, 4),
                          text::format_fixed(cm.f1, 4), std::to_string(cm.support)});
    }
    return g;
}

std::string plain(const TextTable& g) {
    std::vector<std::size_t> width(g.header.size(), 0);
    auto measure = [&](const std::vector<std::string>& row) {
        for (std::size_t i = 0; i < row.size(); ++i) width[i] = std::max(width[i], row[i].size());
    };
    measure(g.header);
    for (const auto& r : g.rows) measure(r);
    std::ostringstream out;
    auto emit = [&](const std::vector<std::string>& row) {
        std::string line;
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i > 0) line += "  ";
            line += i == 0 ? pad_right(row[i], width[i]) : pad_left(row[i], width[i]);
        }
        while (!line.empty() && line.back() == ' ') line.pop_back();
        out << line << '\n';
    };
    emit(g.header);
    for (const auto& r : g.rows) emit(r);
    return out.str();
}

std::string markdown(const TextTable& g) {
    std::ostringstream out;
    auto emit = [&](const std::vector<std::string>& row) {
        out << '|';
        for (const auto& cell : row) out << ' ' << cell << " |";
        out << '\n';
    };
    emit(g.header);
    out << '|';
    for (std::size_t i = 0; i < g.header.size(); ++i) out << (i == 0 ? " --- |" : " ---: |");
    out << '\n';
    for (const auto& r : g.rows) emit(r);
    return out.str();
}

}  // namespace

std::string render_report(const ConfusionMatrix& m, const std::vector<ClassMetrics>& metrics, ReportFormat format) {
    double macro = 0.0;
    for (const auto& c : metrics) macro += c.f1;
    if (!metrics.empty()) macro /= static_cast<double>(metrics.size());

    std::ostringstream out;
    const bool md = format == ReportFormat::Markdown;
    const TextTable cm = matrix_grid(m);
    const TextTable pm = metrics_grid(m, metrics);
    if (md) {
        out << "## Confusion matrix\n\nRows are true labels, columns are predictions.\n\n" << markdown(cm);
        out << "\n## Per-class metrics\n\n" << markdown(pm) << '\n';
        out << "**Macro F1: " << text::format_fixed(macro, 4) << "**\n\n";
        out << "Accuracy: " << text::format_fixed(accuracy(m), 4) << '\n';
    } else {
        out << "Confusion matrix (rows = true labels, columns = predictions)\n\n" << plain(cm);
        out << "\nPer-class metrics\n\n" << plain(pm) << '\n';
        out << "Macro F1: " << text::format_fixed(macro, 4) << '\n';
        out << "Accuracy: " << text::format_fixed(accuracy(m), 4) << '\n';
    }
    return out.str();
}

std::string metrics_text(const ConfusionMatrix& m) {
    std::ostringstream out;
    out << "macro_f1=" << text::format_exact(macro_f1(m)) << '\n';
    out << "accuracy=" << text::format_exact(accuracy(m)) << '\n';
    out << "total=" << m.total() << '\n';
    const auto metrics = per_class_prf(m);
    for (std::size_t c = 0; c < metrics.size(); ++c) {
        std::string key = m.label_names()[c];
        std::replace(key.begin(), key.end(), ' ', '_');
        out << key << ".precision=" << text::format_exact(metrics[c].precision) << '\n';
        out << key << ".recall=" << text::format_exact(metrics[c].recall) << '\n';
        out << key << ".f1=" << text::format_exact(metrics[c].f1) << '\n';
        out << key << ".support=" << metrics[c].support << '\n';
    }
    return out.str();
}

void save_matrix(const ConfusionMatrix& m, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write matrix to " + path.string());
    out << text::join(m.label_names(), "\t") << '\n';
    for (const auto& row : m.counts()) {
        for (std::size_t c = 0; c < row.size(); ++c) out << (c ? "\t" : "") << row[c];
        out << '\n';
    }
}

ConfusionMatrix load_matrix(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open matrix file " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw DataError(path.string() + ": empty matrix file");
    const auto names = text::split(line, '\t');
    std::vector<std::vector<long>> counts;
    int row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (text::trim(line).empty()) continue;
        const auto cells = text::split(line, '\t');
        if (cells.size() != names.size())
            throw DataError(path.string() + ":" + std::to_string(row) + ": expected " +
                            std::to_string(names.size()) + " counts");
        std::vector<long> r;
        for (const auto& c : cells) {
            const std::string v = text::trim(c);
            std::size_t used = 0;
            long n = 0;
            try {
                n = std::stol(v, &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (v.empty() || used != v.size() || n < 0)
                throw DataError(path.string() + ":" + std::to_string(row) + ": bad count '" + v + "'");
            r.push_back(n);
        }
        counts.push_back(std::move(r));
    }
    return ConfusionMatrix(names, std::move(counts));
}

std::map<std::pair<int, int>, std::vector<ScoredPrediction>> error_buckets(const std::vector<ScoredPrediction>& pairs,
                                                                           Task task) {
    std::map<std::pair<int, int>, std::vector<ScoredPrediction>> out;
    bool all_scored = true;
    for (const auto& sp : pairs) {
        const auto truth = label_of(sp.pair, task);
        if (!truth) throw DataError("error analysis needs labeled records; '" + sp.pair.id + "' is unlabeled");
        if (*truth == sp.predicted) continue;
        all_scored = all_scored && sp.confidence.has_value();
        out[{*truth, sp.predicted}].push_back(sp);
    }
    if (all_scored) {
        for (auto& [key, bucket] : out)
            std::stable_sort(bucket.begin(), bucket.end(), [](const ScoredPrediction& a, const ScoredPrediction& b) {
                return *a.confidence > *b.confidence;
            });
    }
    return out;
}

double confusion_share(const ConfusionMatrix& m, int a, int b) {
    const long errors = m.total() - m.trace();
    if (errors == 0) return 0.0;
    return static_cast<double>(m.at(a, b) + m.at(b, a)) / static_cast<double>(errors);
}

std::pair<std::vector<int>, std::vector<int>> align_predictions(const Dataset& gold, const std::vector<Prediction>& preds,
                                                                Task task) {
    std::unordered_map<std::string, int> by_id;
    for (const auto& p : preds) {
        if (!by_id.emplace(p.id, p.label).second) throw DataError("duplicate prediction for id '" + p.id + "'");
    }
    std::unordered_map<std::string, bool> gold_ids;
    std::vector<int> truths;
    std::vector<int> out;
    for (const auto& r : gold.records) {
        const auto l = label_of(r, task);
        if (!l) throw DataError("gold record '" + r.id + "' is unlabeled");
        if (!gold_ids.emplace(r.id, true).second) throw DataError("duplicate gold id '" + r.id + "'");
        const auto it = by_id.find(r.id);
        if (it == by_id.end()) throw DataError("no prediction for gold record '" + r.id + "'");
        truths.push_back(*l);
        out.push_back(it->second);
    }
    for (const auto& p : preds)
        if (!gold_ids.count(p.id)) throw DataError("prediction id '" + p.id + "' is not in the gold file");
    return {std::move(truths), std::move(out)};
}

}  // namespace clarity
