#include "clarity/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>

#include "clarity/error.hpp"
#include "clarity/eval.hpp"
#include "clarity/parallel.hpp"
#include "clarity/resources.hpp"
#include "clarity/rng.hpp"
#include "clarity/text.hpp"

namespace clarity {

// ---------------------------------------------------------------------------
// Majority class
// ---------------------------------------------------------------------------

std::vector<int> majority_baseline(const Dataset& train, const Dataset& test, Task task) {
    std::vector<std::size_t> counts(static_cast<std::size_t>(label_count(task)), 0);
    std::size_t labeled = 0;
    for (const auto& r : train.records) {
        if (const auto l = label_of(r, task)) {
            ++counts[static_cast<std::size_t>(*l)];
            ++labeled;
        }
    }
    if (labeled == 0) throw DataError("majority baseline needs a labeled training set");
    const auto best = std::max_element(counts.begin(), counts.end()) - counts.begin();
    return std::vector<int>(test.size(), static_cast<int>(best));
}

// ---------------------------------------------------------------------------
// TF-IDF
// ---------------------------------------------------------------------------

double dot(const SparseRow& a, const SparseRow& b) {
    double s = 0.0;
    auto i = a.begin();
    auto j = b.begin();
    while (i != a.end() && j != b.end()) {
        if (i->first < j->first) {
            ++i;
        } else if (j->first < i->first) {
            ++j;
        } else {
            s += i->second * j->second;
            ++i;
            ++j;
        }
    }
    return s;
}

double squared_norm(const SparseRow& a) {
    double s = 0.0;
    for (const auto& [c, v] : a) s += v * v;
    return s;
}

void validate(const TfidfConfig& cfg) {
    if (cfg.max_features < 1) throw DataError("max_features must be >= 1");
    if (cfg.ngram_min < 1 || cfg.ngram_max < cfg.ngram_min) throw DataError("invalid ngram range");
    if (cfg.min_df < 1) throw DataError("min_df must be >= 1");
    if (!(cfg.max_df > 0.0 && cfg.max_df <= 1.0)) throw DataError("max_df must be in (0, 1]");
}

std::set<std::string> load_stopwords(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open stopword list " + path.string());
    std::set<std::string> out;
    std::string line;
    while (std::getline(in, line)) {
        const std::string w = text::to_lower(text::trim(line));
        if (!w.empty() && w[0] != '#') out.insert(w);
    }
    return out;
}

const std::set<std::string>& builtin_stopwords() {
    static const std::set<std::string> words = load_stopwords(resource_path("stopwords.txt"));
    return words;
}

TfidfVectorizer::TfidfVectorizer(TfidfConfig cfg, std::set<std::string> stopwords)
    : cfg_(cfg), stopwords_(std::move(stopwords)) {
    validate(cfg_);
}

std::vector<std::string> TfidfVectorizer::analyze(std::string_view doc) const {
    std::vector<std::string> words;
    for (auto& w : text::alpha_words(doc))
        if (!cfg_.use_stopwords || !stopwords_.count(w)) words.push_back(std::move(w));
    std::vector<std::string> out;
    for (int n = cfg_.ngram_min; n <= cfg_.ngram_max; ++n) {
        const auto len = static_cast<std::size_t>(n);
        for (std::size_t i = 0; i + len <= words.size(); ++i) {
            std::string g = words[i];
            for (std::size_t j = 1; j < len; ++j) g += ' ' + words[i + j];
            out.push_back(std::move(g));
        }
    }
    return out;
}

SparseMatrix TfidfVectorizer::fit_transform(const std::vector<std::string>& corpus) {
    if (corpus.empty()) throw DataError("tf-idf needs a non-empty corpus");
    std::map<std::string, std::size_t> df;
    std::map<std::string, std::size_t> freq;
    for (const auto& doc : corpus) {
        std::set<std::string> seen;
        for (auto& t : analyze(doc)) {
            ++freq[t];
            if (seen.insert(t).second) ++df[t];
        }
    }
    const double n = static_cast<double>(corpus.size());
    std::vector<std::string> kept;
    for (const auto& [term, d] : df) {
        if (d < static_cast<std::size_t>(cfg_.min_df)) continue;
        if (static_cast<double>(d) > cfg_.max_df * n) continue;
        kept.push_back(term);
    }
    if (kept.size() > static_cast<std::size_t>(cfg_.max_features)) {
        std::stable_sort(kept.begin(), kept.end(),
                         [&](const std::string& a, const std::string& b) { return freq[a] > freq[b]; });
        kept.resize(static_cast<std::size_t>(cfg_.max_features));
        std::sort(kept.begin(), kept.end());
    }
    if (kept.empty()) throw DataError("tf-idf vocabulary is empty after document-frequency filtering");
    vocab_.clear();
    idf_.assign(kept.size(), 0.0);
    for (std::size_t i = 0; i < kept.size(); ++i) {
        vocab_[kept[i]] = static_cast<int>(i);
        idf_[i] = std::log((1.0 + n) / (1.0 + static_cast<double>(df[kept[i]]))) + 1.0;
    }
    return transform(corpus);
}

SparseMatrix TfidfVectorizer::transform(const std::vector<std::string>& corpus) const {
    if (vocab_.empty()) throw DataError("tf-idf vectorizer is not fitted");
    SparseMatrix out;
    out.cols = static_cast<int>(vocab_.size());
    out.rows.reserve(corpus.size());
    for (const auto& doc : corpus) {
        std::map<int, double> tf;
        for (const auto& t : analyze(doc)) {
            const auto it = vocab_.find(t);
            if (it != vocab_.end()) tf[it->second] += 1.0;
        }
        SparseRow row;
        row.reserve(tf.size());
        for (const auto& [c, count] : tf) {
            const double f = cfg_.sublinear_tf ? 1.0 + std::log(count) : count;
            row.emplace_back(c, f * idf_[static_cast<std::size_t>(c)]);
        }
        if (cfg_.l2_normalize) {
            const double norm = std::sqrt(squared_norm(row));
            if (norm > 0.0)
                for (auto& e : row) e.second /= norm;
        }
        out.rows.push_back(std::move(row));
    }
    return out;
}

std::vector<double> balanced_class_weights(const std::vector<int>& labels, int k) {
    std::vector<double> counts(static_cast<std::size_t>(k), 0.0);
    for (int y : labels) {
        if (y < 0 || y >= k) throw DataError("label " + std::to_string(y) + " out of range");
        counts[static_cast<std::size_t>(y)] += 1.0;
    }
    const double present = static_cast<double>(std::count_if(counts.begin(), counts.end(), [](double c) { return c > 0; }));
    std::vector<double> out(static_cast<std::size_t>(k), 0.0);
    for (std::size_t c = 0; c < counts.size(); ++c)
        if (counts[c] > 0) out[c] = static_cast<double>(labels.size()) / (present * counts[c]);
    return out;
}

namespace {

void check_fit_input(const SparseMatrix& x, const std::vector<int>& y, int k) {
    if (x.size() != y.size())
        throw DataError("feature rows (" + std::to_string(x.size()) + ") and labels (" + std::to_string(y.size()) +
                        ") differ");
    if (x.size() == 0) throw DataError("cannot fit on an empty training set");
    for (int l : y)
        if (l < 0 || l >= k) throw DataError("label " + std::to_string(l) + " out of range");
}

int argmax_row(const Matrix& m, Eigen::Index r) {
    int best = 0;
    for (Eigen::Index c = 1; c < m.cols(); ++c)
        if (m(r, c) > m(r, best)) best = static_cast<int>(c);
    return best;
}

double sparse_value(const SparseRow& row, int col) {
    const auto it = std::lower_bound(row.begin(), row.end(), col,
                                     [](const std::pair<int, double>& e, int c) { return e.first < c; });
    return it != row.end() && it->first == col ? it->second : 0.0;
}

}  // namespace

// ---------------------------------------------------------------------------
// Logistic regression
// ---------------------------------------------------------------------------

Matrix LogisticRegression::decision_function(const SparseMatrix& x) const {
    if (w_.size() == 0) throw DataError("logistic regression is not fitted");
    const auto d = w_.cols() - 1;
    Matrix out(static_cast<Eigen::Index>(x.size()), k_);
    for (std::size_t i = 0; i < x.size(); ++i) {
        for (int c = 0; c < k_; ++c) {
            double s = w_(c, d);
            for (const auto& [j, v] : x.rows[i])
                if (j < d) s += w_(c, j) * v;
            out(static_cast<Eigen::Index>(i), c) = s;
        }
    }
    return out;
}

void LogisticRegression::fit(const SparseMatrix& x, const std::vector<int>& y,
                             const std::vector<double>& class_weights) {
    check_fit_input(x, y, k_);
    const Eigen::Index d = x.cols;
    const auto n = x.size();
    std::vector<double> sw(n);
    for (std::size_t i = 0; i < n; ++i)
        sw[i] = class_weights.empty() ? 1.0 : class_weights[static_cast<std::size_t>(y[i])];

    auto objective = [&](const Matrix& w, Matrix* grad) {
        double f = 0.5 * w.leftCols(d).squaredNorm();
        if (grad) {
            *grad = Matrix::Zero(w.rows(), w.cols());
            grad->leftCols(d) = w.leftCols(d);
        }
        RowVector z(k_);
        for (std::size_t i = 0; i < n; ++i) {
            if (sw[i] == 0.0) continue;
            for (int c = 0; c < k_; ++c) {
                double s = w(c, d);
                for (const auto& [j, v] : x.rows[i]) s += w(c, j) * v;
                z(c) = s;
            }
            const double m = z.maxCoeff();
            const double lse = m + std::log((z.array() - m).exp().sum());
            f += opts_.c * sw[i] * (lse - z(y[i]));
            if (grad) {
                for (int c = 0; c < k_; ++c) {
                    const double g = opts_.c * sw[i] * (std::exp(z(c) - lse) - (c == y[i] ? 1.0 : 0.0));
                    for (const auto& [j, v] : x.rows[i]) (*grad)(c, j) += g * v;
                    (*grad)(c, d) += g;
                }
            }
        }
        return f;
    };

    w_ = Matrix::Zero(k_, d + 1);
    Matrix grad;
    double f = objective(w_, &grad);
    double step = 1.0;
    for (int it = 0; it < opts_.max_iter; ++it) {
        const double gsq = grad.squaredNorm();
        if (std::sqrt(gsq) < opts_.tol) break;
        Matrix candidate;
        double fc = 0.0;
        bool accepted = false;
        for (int tries = 0; tries < 50; ++tries) {
            candidate = w_ - step * grad;
            fc = objective(candidate, nullptr);
            if (fc <= f - 0.5 * step * gsq) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) break;
        const double drop = f - fc;
        w_ = std::move(candidate);
        f = objective(w_, &grad);
        step *= 2.0;
        if (drop <= opts_.tol * std::max(1.0, std::abs(f))) break;
    }
}

std::vector<int> LogisticRegression::predict(const SparseMatrix& x) const {
    const Matrix s = decision_function(x);
    std::vector<int> out(x.size());
    for (Eigen::Index i = 0; i < s.rows(); ++i) out[static_cast<std::size_t>(i)] = argmax_row(s, i);
    return out;
}

std::string LogisticRegression::describe() const {
    return "logistic regression (C=" + text::format_exact(opts_.c) + ", balanced)";
}

// ---------------------------------------------------------------------------
// Kernel SVM
// ---------------------------------------------------------------------------

double KernelSvm::kernel(const SparseRow& a, double na, const SparseRow& b, double nb) const {
    const double ab = dot(a, b);
    if (opts_.kernel == SvmKernel::Linear) return ab + 1.0;
    return std::exp(-gamma_ * std::max(0.0, na + nb - 2.0 * ab)) + 1.0;
}

void KernelSvm::fit(const SparseMatrix& x, const std::vector<int>& y, const std::vector<double>& class_weights) {
    check_fit_input(x, y, k_);
    if (!(opts_.c > 0.0)) throw DataError("SVM C must be positive");
    const std::size_t n = x.size();
    std::vector<double> norms(n);
    for (std::size_t i = 0; i < n; ++i) norms[i] = squared_norm(x.rows[i]);

    gamma_ = opts_.gamma;
    if (opts_.kernel == SvmKernel::Rbf && gamma_ <= 0.0) {
        double sum = 0.0;
        double sq = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            for (const auto& [j, v] : x.rows[i]) sum += v;
            sq += norms[i];
        }
        const double cells = static_cast<double>(n) * std::max(1, x.cols);
        const double var = sq / cells - (sum / cells) * (sum / cells);
        gamma_ = var > 0.0 ? 1.0 / (std::max(1, x.cols) * var) : 1.0;
    }

    Matrix gram(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i; j < n; ++j) {
            const double v = kernel(x.rows[i], norms[i], x.rows[j], norms[j]);
            gram(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
            gram(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = v;
        }

    Matrix alpha_y = Matrix::Zero(k_, static_cast<Eigen::Index>(n));
    for (int c = 0; c < k_; ++c) {
        std::vector<double> sign(n);
        std::vector<double> upper(n);
        for (std::size_t i = 0; i < n; ++i) {
            sign[i] = y[i] == c ? 1.0 : -1.0;
            const double cw = class_weights.empty() ? 1.0 : class_weights[static_cast<std::size_t>(y[i])];
            upper[i] = opts_.c * cw;
        }
        std::vector<double> alpha(n, 0.0);
        Vector f = Vector::Zero(static_cast<Eigen::Index>(n));  // sum_j alpha_j y_j K(i, j)
        Rng rng(child_seed(opts_.seed, static_cast<std::uint64_t>(c)));
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), std::size_t{0});
        for (int epoch = 0; epoch < opts_.max_epochs; ++epoch) {
            rng.shuffle(order);
            double worst = 0.0;
            for (std::size_t i : order) {
                const auto ii = static_cast<Eigen::Index>(i);
                const double g = sign[i] * f(ii) - 1.0;
                double pg = g;
                if (alpha[i] <= 0.0)
                    pg = std::min(g, 0.0);
                else if (alpha[i] >= upper[i])
                    pg = std::max(g, 0.0);
                worst = std::max(worst, std::abs(pg));
                if (pg == 0.0) continue;
                const double kii = gram(ii, ii);
                const double next = std::clamp(alpha[i] - g / kii, 0.0, upper[i]);
                const double delta = next - alpha[i];
                if (delta == 0.0) continue;
                alpha[i] = next;
                f += (delta * sign[i]) * gram.col(ii);
            }
            if (worst < opts_.tol) break;
        }
        for (std::size_t i = 0; i < n; ++i) alpha_y(c, static_cast<Eigen::Index>(i)) = alpha[i] * sign[i];
    }

    support_.clear();
    support_norms_.clear();
    std::vector<Eigen::Index> keep;
    for (std::size_t i = 0; i < n; ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        if (alpha_y.col(ii).cwiseAbs().maxCoeff() > 0.0) {
            keep.push_back(ii);
            support_.push_back(x.rows[i]);
            support_norms_.push_back(norms[i]);
        }
    }
    coef_ = Matrix(k_, static_cast<Eigen::Index>(keep.size()));
    for (std::size_t s = 0; s < keep.size(); ++s) coef_.col(static_cast<Eigen::Index>(s)) = alpha_y.col(keep[s]);
}

std::vector<int> KernelSvm::predict(const SparseMatrix& x) const {
    std::vector<int> out(x.size(), 0);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double ni = squared_norm(x.rows[i]);
        Vector kv(static_cast<Eigen::Index>(support_.size()));
        for (std::size_t s = 0; s < support_.size(); ++s)
            kv(static_cast<Eigen::Index>(s)) = kernel(support_[s], support_norms_[s], x.rows[i], ni);
        const Vector score = coef_ * kv;
        int best = 0;
        for (int c = 1; c < k_; ++c)
            if (score(c) > score(best)) best = c;
        out[i] = best;
    }
    return out;
}

std::string KernelSvm::describe() const {
    return std::string("svm (") + (opts_.kernel == SvmKernel::Linear ? "linear" : "rbf") +
           ", C=" + text::format_exact(opts_.c) + ", balanced)";
}

// ---------------------------------------------------------------------------
// Random forest
// ---------------------------------------------------------------------------

namespace {

struct ColumnEntry {
    std::size_t row;
    double value;
};

double gini(const std::vector<double>& dist, double total) {
    if (total <= 0.0) return 0.0;
    double s = 1.0;
    for (double v : dist) s -= (v / total) * (v / total);
    return s;
}

struct TreeBuilder {
    const SparseMatrix& x;
    const std::vector<int>& y;
    const std::vector<std::vector<ColumnEntry>>& columns;
    const std::vector<double>& class_weights;
    const RandomForest::Options& opts;
    int k;
    std::vector<int> boot;
    std::vector<std::uint32_t> stamp;
    std::uint32_t current = 0;

    struct Split {
        int feature = -1;
        double threshold = 0.0;
        double score = 0.0;
    };

    std::vector<double> distribution(const std::vector<std::size_t>& rows, int* samples) const {
        std::vector<double> d(static_cast<std::size_t>(k), 0.0);
        int count = 0;
        for (std::size_t r : rows) {
            d[static_cast<std::size_t>(y[r])] += boot[r] * class_weights[static_cast<std::size_t>(y[r])];
            count += boot[r];
        }
        *samples = count;
        return d;
    }

    Split best_split(const std::vector<std::size_t>& rows, const std::vector<double>& dist, int samples, Rng& rng) {
        ++current;
        for (std::size_t r : rows) stamp[r] = current;
        const double total = std::accumulate(dist.begin(), dist.end(), 0.0);
        const int d = x.cols;
        const int mtry = std::max(1, static_cast<int>(std::sqrt(static_cast<double>(d))));
        std::vector<int> features;
        std::set<int> chosen;
        while (static_cast<int>(features.size()) < std::min(mtry, d)) {
            const int f = static_cast<int>(rng.index(static_cast<std::size_t>(d)));
            if (chosen.insert(f).second) features.push_back(f);
        }
        Split best;
        best.score = gini(dist, total) * total;
        bool found = false;
        for (int f : features) {
            // Values of this feature inside the node, with the implicit zeros
            // collapsed into a single block.
            std::vector<std::pair<double, std::size_t>> nz;
            for (const auto& e : columns[static_cast<std::size_t>(f)])
                if (stamp[e.row] == current && e.value != 0.0) nz.emplace_back(e.value, e.row);
            std::sort(nz.begin(), nz.end());
            std::vector<double> zero_dist = dist;
            int zero_samples = samples;
            for (const auto& [v, r] : nz) {
                zero_dist[static_cast<std::size_t>(y[r])] -= boot[r] * class_weights[static_cast<std::size_t>(y[r])];
                zero_samples -= boot[r];
            }
            struct Group {
                double value;
                std::vector<double> dist;
                int samples;
            };
            std::vector<Group> groups;
            auto push = [&](double v, const std::vector<double>& gd, int gs) {
                if (gs == 0) return;
                if (!groups.empty() && groups.back().value == v) {
                    for (int c = 0; c < k; ++c) groups.back().dist[static_cast<std::size_t>(c)] += gd[static_cast<std::size_t>(c)];
                    groups.back().samples += gs;
                } else {
                    groups.push_back({v, gd, gs});
                }
            };
            bool zero_done = false;
            for (const auto& [v, r] : nz) {
                if (!zero_done && v > 0.0) {
                    push(0.0, zero_dist, zero_samples);
                    zero_done = true;
                }
                std::vector<double> gd(static_cast<std::size_t>(k), 0.0);
                gd[static_cast<std::size_t>(y[r])] = boot[r] * class_weights[static_cast<std::size_t>(y[r])];
                push(v, gd, boot[r]);
            }
            if (!zero_done) push(0.0, zero_dist, zero_samples);
            if (groups.size() < 2) continue;

            std::vector<double> left(static_cast<std::size_t>(k), 0.0);
            int left_samples = 0;
            for (std::size_t g = 0; g + 1 < groups.size(); ++g) {
                for (int c = 0; c < k; ++c) left[static_cast<std::size_t>(c)] += groups[g].dist[static_cast<std::size_t>(c)];
                left_samples += groups[g].samples;
                const int right_samples = samples - left_samples;
                if (left_samples < opts.min_samples_leaf || right_samples < opts.min_samples_leaf) continue;
                std::vector<double> right(static_cast<std::size_t>(k));
                for (int c = 0; c < k; ++c)
                    right[static_cast<std::size_t>(c)] = dist[static_cast<std::size_t>(c)] - left[static_cast<std::size_t>(c)];
                const double wl = std::accumulate(left.begin(), left.end(), 0.0);
                const double wr = std::accumulate(right.begin(), right.end(), 0.0);
                const double score = gini(left, wl) * wl + gini(right, wr) * wr;
                if (score < best.score - 1e-12) {
                    best.score = score;
                    best.feature = f;
                    best.threshold = 0.5 * (groups[g].value + groups[g + 1].value);
                    found = true;
                }
            }
        }
        if (!found) best.feature = -1;
        return best;
    }

    RandomForest::Tree build(Rng& rng) {
        RandomForest::Tree tree;
        std::vector<std::size_t> root;
        for (std::size_t r = 0; r < y.size(); ++r)
            if (boot[r] > 0 && class_weights[static_cast<std::size_t>(y[r])] > 0.0) root.push_back(r);
        struct Work {
            int node;
            int depth;
            std::vector<std::size_t> rows;
        };
        tree.push_back({});
        std::vector<Work> stack;
        stack.push_back({0, 0, std::move(root)});
        while (!stack.empty()) {
            Work w = std::move(stack.back());
            stack.pop_back();
            int samples = 0;
            const auto dist = distribution(w.rows, &samples);
            const double total = std::accumulate(dist.begin(), dist.end(), 0.0);
            auto& node = tree[static_cast<std::size_t>(w.node)];
            node.distribution.assign(static_cast<std::size_t>(k), 0.0);
            if (total > 0.0)
                for (int c = 0; c < k; ++c) node.distribution[static_cast<std::size_t>(c)] = dist[static_cast<std::size_t>(c)] / total;
            const bool pure = std::count_if(dist.begin(), dist.end(), [](double v) { return v > 0.0; }) <= 1;
            if (pure || w.depth >= opts.max_depth || samples < opts.min_samples_split) continue;
            const Split s = best_split(w.rows, dist, samples, rng);
            if (s.feature < 0) continue;
            std::vector<std::size_t> left, right;
            for (std::size_t r : w.rows)
                (sparse_value(x.rows[r], s.feature) <= s.threshold ? left : right).push_back(r);
            const int l = static_cast<int>(tree.size());
            tree.push_back({});
            tree.push_back({});
            auto& parent = tree[static_cast<std::size_t>(w.node)];
            parent.feature = s.feature;
            parent.threshold = s.threshold;
            parent.left = l;
            parent.right = l + 1;
            stack.push_back({l + 1, w.depth + 1, std::move(right)});
            stack.push_back({l, w.depth + 1, std::move(left)});
        }
        return tree;
    }
};

}  // namespace

void RandomForest::fit(const SparseMatrix& x, const std::vector<int>& y, const std::vector<double>& class_weights) {
    check_fit_input(x, y, k_);
    if (opts_.trees < 1) throw DataError("random forest needs at least one tree");
    std::vector<std::vector<ColumnEntry>> columns(static_cast<std::size_t>(std::max(0, x.cols)));
    for (std::size_t r = 0; r < x.size(); ++r)
        for (const auto& [c, v] : x.rows[r]) columns[static_cast<std::size_t>(c)].push_back({r, v});
    std::vector<double> cw = class_weights;
    if (cw.empty()) cw.assign(static_cast<std::size_t>(k_), 1.0);

    trees_.assign(static_cast<std::size_t>(opts_.trees), {});
    const int threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    parallel_for(trees_.size(), threads, [&](std::size_t t) {
        Rng rng(child_seed(opts_.seed, t));
        TreeBuilder b{x, y, columns, cw, opts_, k_, std::vector<int>(y.size(), 0),
                      std::vector<std::uint32_t>(y.size(), 0)};
        for (std::size_t i = 0; i < y.size(); ++i) ++b.boot[rng.index(y.size())];
        trees_[t] = b.build(rng);
    });
}

std::vector<int> RandomForest::predict(const SparseMatrix& x) const {
    if (trees_.empty()) throw DataError("random forest is not fitted");
    std::vector<int> out(x.size(), 0);
    for (std::size_t i = 0; i < x.size(); ++i) {
        std::vector<double> votes(static_cast<std::size_t>(k_), 0.0);
        for (const auto& tree : trees_) {
            int n = 0;
            while (tree[static_cast<std::size_t>(n)].feature >= 0) {
                const auto& node = tree[static_cast<std::size_t>(n)];
                n = sparse_value(x.rows[i], node.feature) <= node.threshold ? node.left : node.right;
            }
            const auto& d = tree[static_cast<std::size_t>(n)].distribution;
            for (int c = 0; c < k_; ++c) votes[static_cast<std::size_t>(c)] += d[static_cast<std::size_t>(c)];
        }
        out[i] = static_cast<int>(std::max_element(votes.begin(), votes.end()) - votes.begin());
    }
    return out;
}

std::string RandomForest::describe() const {
    return "random forest (" + std::to_string(opts_.trees) + " trees, max_depth " + std::to_string(opts_.max_depth) +
           ", balanced)";
}

// ---------------------------------------------------------------------------
// Fitting
// ---------------------------------------------------------------------------

namespace {

SparseMatrix take_rows(const SparseMatrix& x, const std::vector<std::size_t>& idx) {
    SparseMatrix out;
    out.cols = x.cols;
    for (std::size_t i : idx) out.rows.push_back(x.rows[i]);
    return out;
}

/// Stratified fold assignment over a label vector.
std::vector<int> fold_assignment(const std::vector<int>& y, int k, int folds, std::uint64_t seed) {
    std::vector<int> out(y.size(), 0);
    std::size_t cursor = 0;
    for (int c = 0; c < k; ++c) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < y.size(); ++i)
            if (y[i] == c) members.push_back(i);
        Rng(child_seed(seed, static_cast<std::uint64_t>(c))).shuffle(members);
        for (std::size_t i : members) out[i] = static_cast<int>(cursor++ % static_cast<std::size_t>(folds));
    }
    return out;
}

}  // namespace

ClassicalFit train_classical(ClassicalKind kind, const SparseMatrix& x, const std::vector<int>& y, int k,
                             const ClassicalConfig& cfg) {
    check_fit_input(x, y, k);
    std::set<int> present(y.begin(), y.end());
    if (present.size() < 2) throw DataError("classical baselines need at least two classes in the training labels");
    const auto weights = balanced_class_weights(y, k);

    ClassicalFit fit;
    switch (kind) {
        case ClassicalKind::LogReg: {
            auto m = std::make_unique<LogisticRegression>(LogisticRegression::Options{}, k);
            m->fit(x, y, weights);
            fit.model = std::move(m);
            break;
        }
        case ClassicalKind::RandomForest: {
            RandomForest::Options o;
            o.seed = cfg.seed;
            auto m = std::make_unique<RandomForest>(o, k);
            m->fit(x, y, weights);
            fit.model = std::move(m);
            break;
        }
        case ClassicalKind::Svm: {
            if (cfg.cv_folds < 2) throw DataError("SVM grid search needs at least 2 folds");
            const auto folds = fold_assignment(y, k, cfg.cv_folds, cfg.seed);
            double best_score = -1.0;
            KernelSvm::Options best_opts;
            for (double c : cfg.svm_c_grid) {
                for (SvmKernel kernel : cfg.svm_kernels) {
                    KernelSvm::Options o;
                    o.c = c;
                    o.kernel = kernel;
                    o.seed = cfg.seed;
                    std::vector<int> truths;
                    std::vector<int> preds;
                    double score = 0.0;
                    for (int f = 0; f < cfg.cv_folds; ++f) {
                        std::vector<std::size_t> tr, dv;
                        for (std::size_t i = 0; i < y.size(); ++i) (folds[i] == f ? dv : tr).push_back(i);
                        if (tr.empty() || dv.empty()) continue;
                        std::vector<int> ytr, ydv;
                        for (std::size_t i : tr) ytr.push_back(y[i]);
                        for (std::size_t i : dv) ydv.push_back(y[i]);
                        KernelSvm m(o, k);
                        m.fit(take_rows(x, tr), ytr, balanced_class_weights(ytr, k));
                        score += macro_f1(confusion_matrix(ydv, m.predict(take_rows(x, dv)), k));
                    }
                    score /= cfg.cv_folds;
                    fit.svm_grid.push_back({c, kernel, score});
                    if (score > best_score) {
                        best_score = score;
                        best_opts = o;
                    }
                }
            }
            if (fit.svm_grid.empty()) throw DataError("SVM grid is empty");
            auto m = std::make_unique<KernelSvm>(best_opts, k);
            m->fit(x, y, weights);
            fit.model = std::move(m);
            break;
        }
    }
    return fit;
}

// ---------------------------------------------------------------------------
// Plain transformer fine-tuning
// ---------------------------------------------------------------------------

TransformerBaselineConfig transformer_baseline_config(TransformerKind kind) {
    TransformerBaselineConfig cfg;
    cfg.encoder_identifier = kind == TransformerKind::Distil ? "tiny-encoder-small" : "tiny-encoder";
    auto& t = cfg.training;
    t.base_lr = 2e-5;
    t.llrd_alpha = 1.0;
    t.gamma = 0.0;
    t.micro_batch = kind == TransformerKind::Distil ? 16 : 8;
    t.accumulation_steps = 1;
    t.warmup_fraction = 0.10;
    t.max_epochs = 4;
    t.patience = 4;
    t.weight_decay = 0.01;
    t.clip_norm = 1.0;
    t.class_weighting = true;
    t.schedule = ScheduleKind::WarmupLinear;
    return cfg;
}

TrainResult simple_transformer_baseline(const TransformerBaselineConfig& cfg, const Dataset& train,
                                        const Dataset& dev, int max_sequence_length) {
    const EncoderSpec spec = resolve_encoder(cfg.encoder_identifier);
    ModelConfig mc;
    mc.encoder_identifier = cfg.encoder_identifier;
    mc.max_sequence_length = std::min(max_sequence_length, spec.max_positions);
    mc.use_features = false;
    mc.init_seed = cfg.training.seed;
    return train_loop(Classifier(mc), train, dev, cfg.training);
}

// ---------------------------------------------------------------------------
// Comparison table
// ---------------------------------------------------------------------------

const std::vector<ReferenceScore>& reference_baseline_scores() {
    static const std::vector<ReferenceScore> scores{
        {"Majority class (Ambivalent)", 0.2700}, {"TF-IDF + Logistic Regression", 0.4476},
        {"SVM (linear)", 0.4270},                {"Random Forest", 0.4256},
        {"DistilBERT", 0.5158},                  {"BERT-base", 0.5628},
        {"DeBERTa-V3-base (Gemini)", 0.66},
    };
    return scores;
}

std::string render_comparison(const std::vector<std::pair<std::string, double>>& local) {
    std::ostringstream out;
    out << "| Model | Local macro F1 | Full-scale target |\n| --- | ---: | ---: |\n";
    std::set<std::string> listed;
    for (const auto& ref : reference_baseline_scores()) {
        std::string local_value = "-";
        for (const auto& [name, score] : local)
            if (name == ref.model) local_value = text::format_fixed(score, 4);
        listed.insert(ref.model);
        out << "| " << ref.model << " | " << local_value << " | " << text::format_fixed(ref.test_macro_f1, 4)
            << " |\n";
    }
    for (const auto& [name, score] : local)
        if (!listed.count(name)) out << "| " << name << " | " << text::format_fixed(score, 4) << " | - |\n";
    return out.str();
}

}  // namespace clarity
