#include "clarity/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "clarity/error.hpp"
#include "clarity/eval.hpp"
#include "clarity/log.hpp"
#include "clarity/text.hpp"

namespace clarity {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr std::uint64_t kDropoutStream = 0x64726f70;

}  // namespace

// ---------------------------------------------------------------------------
// Loss
// ---------------------------------------------------------------------------

FocalLossResult focal_loss(const Matrix& logits, const std::vector<int>& targets, const FocalLossConfig& cfg,
                           const std::vector<double>& sample_weights) {
    const auto rows = logits.rows();
    const auto k = logits.cols();
    if (static_cast<std::size_t>(rows) != targets.size())
        throw TrainingError("focal loss: " + std::to_string(targets.size()) + " targets for " +
                            std::to_string(rows) + " rows");
    if (!sample_weights.empty() && sample_weights.size() != targets.size())
        throw TrainingError("focal loss: sample weight count does not match batch size");
    if (!logits.allFinite()) throw TrainingError("focal loss: non-finite logits");
    if (!(cfg.gamma >= 0.0) || !std::isfinite(cfg.gamma)) throw TrainingError("focal loss: gamma must be >= 0");
    if (!cfg.class_weights.empty() && static_cast<Eigen::Index>(cfg.class_weights.size()) != k)
        throw TrainingError("focal loss: expected " + std::to_string(k) + " class weights");
    for (double a : cfg.class_weights)
        if (!(a > 0.0) || !std::isfinite(a)) throw TrainingError("focal loss: class weights must be positive");

    FocalLossResult out;
    out.grad_sum = Matrix::Zero(rows, k);
    const double g = cfg.gamma;
    for (Eigen::Index i = 0; i < rows; ++i) {
        const int t = targets[static_cast<std::size_t>(i)];
        if (t < 0 || t >= k) throw TrainingError("focal loss: target " + std::to_string(t) + " out of range");
        const double w = sample_weights.empty() ? 1.0 : sample_weights[static_cast<std::size_t>(i)];
        if (!(w > 0.0) || !std::isfinite(w)) throw TrainingError("focal loss: sample weights must be positive");
        const double alpha = cfg.class_weights.empty() ? 1.0 : cfg.class_weights[static_cast<std::size_t>(t)];

        const double m = logits.row(i).maxCoeff();
        RowVector e = (logits.row(i).array() - m).exp().matrix();
        const double z = e.sum();
        const RowVector p = e / z;
        const double log_p = logits(i, t) - m - std::log(z);
        const double pt = p(t);
        // 1 - p_t summed from the other classes keeps precision near p_t = 1.
        double others = 0.0;
        for (Eigen::Index j = 0; j < k; ++j)
            if (j != t) others += e(j);
        const double q = others / z;

        const double mod = g == 0.0 ? 1.0 : std::pow(q, g);
        const double loss = alpha * mod * (-log_p);
        double slope = 0.0;
        if (g != 0.0 && q > 0.0) slope = g * std::pow(q, g - 1.0) * pt * log_p;
        const double coeff = alpha * (slope - mod);

        for (Eigen::Index j = 0; j < k; ++j) {
            const double delta = j == t ? 1.0 : 0.0;
            out.grad_sum(i, j) = w * coeff * (delta - p(j));
        }
        out.weighted_sum += w * loss;
        out.weight_sum += w;
    }
    out.loss = out.weight_sum > 0.0 ? out.weighted_sum / out.weight_sum : 0.0;
    return out;
}

std::vector<double> inverse_frequency_weights(const std::vector<std::size_t>& counts) {
    if (counts.empty()) throw TrainingError("class weights need at least one class");
    double n = 0.0;
    for (std::size_t c = 0; c < counts.size(); ++c) {
        if (counts[c] == 0) throw TrainingError("class " + std::to_string(c) + " has no training examples");
        n += static_cast<double>(counts[c]);
    }
    const double k = static_cast<double>(counts.size());
    std::vector<double> out;
    out.reserve(counts.size());
    for (std::size_t c : counts) out.push_back(n / (k * static_cast<double>(c)));
    return out;
}

// ---------------------------------------------------------------------------
// Learning rates
// ---------------------------------------------------------------------------

std::vector<ParamGroup> llrd_param_groups(Classifier& model, double base_lr, double alpha) {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw TrainingError("llrd alpha must be in (0, 1]");
    if (!(base_lr > 0.0)) throw TrainingError("base learning rate must be positive");
    std::map<int, ParamGroup> by_depth;
    for (Param* p : model.parameters()) {
        if (p->depth < 0) throw TrainingError("parameter '" + p->name + "' has no depth assignment");
        auto& g = by_depth[p->depth];
        g.depth = p->depth;
        g.params.push_back(p);
    }
    std::vector<ParamGroup> out;
    for (auto& [depth, g] : by_depth) {
        g.lr = base_lr * std::pow(alpha, depth);
        out.push_back(std::move(g));
    }
    return out;
}

std::size_t warmup_steps(std::size_t total_steps, double warmup_fraction) {
    // The epsilon keeps 0.15 * 100 at 15 despite binary rounding.
    const double raw = warmup_fraction * static_cast<double>(total_steps) - 1e-9;
    return std::min(total_steps, static_cast<std::size_t>(std::max(0.0, std::ceil(raw))));
}

double lr_multiplier(std::size_t step, std::size_t total_steps, double warmup_fraction) {
    if (total_steps == 0) return 0.0;
    step = std::min(step, total_steps);
    const std::size_t w = warmup_steps(total_steps, warmup_fraction);
    if (step < w) return static_cast<double>(step) / static_cast<double>(w);
    if (total_steps == w) return 1.0;
    const double progress = static_cast<double>(step - w) / static_cast<double>(total_steps - w);
    return 0.5 * (1.0 + std::cos(kPi * progress));
}

double linear_lr_multiplier(std::size_t step, std::size_t total_steps, double warmup_fraction) {
    if (total_steps == 0) return 0.0;
    step = std::min(step, total_steps);
    const std::size_t w = warmup_steps(total_steps, warmup_fraction);
    if (step < w) return static_cast<double>(step) / static_cast<double>(w);
    if (total_steps == w) return 1.0;
    return static_cast<double>(total_steps - step) / static_cast<double>(total_steps - w);
}

void AdamW::step(const std::vector<ParamGroup>& groups, double multiplier) {
    ++t_;
    const double c1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
    for (const auto& g : groups) {
        const double lr = g.lr * multiplier;
        for (Param* p : g.params) {
            auto [it, fresh] = moments_.try_emplace(p);
            if (fresh) {
                it->second.first = Matrix::Zero(p->value.rows(), p->value.cols());
                it->second.second = Matrix::Zero(p->value.rows(), p->value.cols());
            }
            Matrix& m = it->second.first;
            Matrix& v = it->second.second;
            m = opts_.beta1 * m + (1.0 - opts_.beta1) * p->grad;
            v = opts_.beta2 * v + (1.0 - opts_.beta2) * p->grad.cwiseAbs2();
            if (p->decay && opts_.weight_decay > 0.0) p->value *= 1.0 - lr * opts_.weight_decay;
            p->value.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + opts_.eps);
        }
    }
}

double clip_grad_norm(const std::vector<Param*>& params, double max_norm) {
    double sq = 0.0;
    for (const Param* p : params) sq += p->grad.squaredNorm();
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
        const double scale = max_norm / (norm + 1e-12);
        for (Param* p : params) p->grad *= scale;
    }
    return norm;
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

void validate(const TrainingConfig& cfg) {
    if (!(cfg.base_lr > 0.0)) throw TrainingError("base_lr must be positive");
    if (!(cfg.llrd_alpha > 0.0 && cfg.llrd_alpha <= 1.0)) throw TrainingError("llrd_alpha must be in (0, 1]");
    if (!(cfg.gamma >= 0.0)) throw TrainingError("gamma must be >= 0");
    if (cfg.micro_batch < 1) throw TrainingError("micro_batch must be >= 1");
    if (cfg.accumulation_steps < 1) throw TrainingError("accumulation_steps must be >= 1");
    if (!(cfg.warmup_fraction >= 0.0 && cfg.warmup_fraction <= 1.0))
        throw TrainingError("warmup_fraction must be in [0, 1]");
    if (cfg.max_epochs < 1) throw TrainingError("max_epochs must be >= 1");
    if (cfg.patience < 1) throw TrainingError("patience must be >= 1");
    if (!(cfg.weight_decay >= 0.0)) throw TrainingError("weight_decay must be >= 0");
    if (!(cfg.clip_norm >= 0.0)) throw TrainingError("clip_norm must be >= 0");
}

bool EarlyStopping::update(double score) {
    ++epoch_;
    if (epoch_ == 1 || score > best_score_) {
        best_score_ = score;
        best_epoch_ = epoch_;
        bad_epochs_ = 0;
        improved_last_ = true;
    } else {
        ++bad_epochs_;
        improved_last_ = false;
    }
    return bad_epochs_ >= patience_;
}

void write_history(const TrainHistory& h, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw TrainingError("cannot write history to " + path.string());
    out << "epoch\ttrain_loss\tdev_macro_f1\tfinal_lr\tsteps\n";
    for (const auto& e : h.epochs) {
        out << e.epoch << '\t' << text::format_exact(e.train_loss) << '\t' << text::format_exact(e.dev_macro_f1)
            << '\t' << text::format_exact(e.lr_trace.empty() ? 0.0 : e.lr_trace.back()) << '\t' << e.lr_trace.size()
            << '\n';
    }
}

void check_validation_integrity(const Dataset& dev, Task task) {
    if (dev.empty()) throw IntegrityError("degenerate validation: the dev set is empty");
    std::optional<int> first;
    bool varied = false;
    for (std::size_t i = 0; i < dev.size(); ++i) {
        const auto l = label_of(dev.records[i], task);
        if (!l)
            throw IntegrityError("degenerate validation: dev record '" + dev.records[i].id + "' has no label");
        if (!first)
            first = *l;
        else if (*l != *first)
            varied = true;
    }
    if (!varied)
        throw IntegrityError("degenerate validation: every dev label is '" +
                             LabelTable::builtin().name(task, *first) +
                             "'; model selection against constant labels is meaningless");
}

std::pair<double, double> accumulate_gradients(Classifier& model, std::span<const QAPair> records,
                                               std::span<const std::size_t> sample_ids, int micro_batch,
                                               const FocalLossConfig& loss, std::uint64_t dropout_seed) {
    if (micro_batch < 1) throw TrainingError("micro_batch must be >= 1");
    if (sample_ids.size() != records.size()) throw TrainingError("sample id count does not match record count");
    model.zero_grad();
    const Task task = model.config().task;
    double weighted = 0.0;
    double weight = 0.0;
    const auto mb = static_cast<std::size_t>(micro_batch);
    for (std::size_t i = 0; i < records.size(); i += mb) {
        const std::size_t n = std::min(mb, records.size() - i);
        const auto part = records.subspan(i, n);
        const auto ids = sample_ids.subspan(i, n);
        std::vector<int> targets;
        std::vector<double> weights;
        for (const auto& r : part) {
            const auto l = label_of(r, task);
            if (!l) throw TrainingError("training record '" + r.id + "' is unlabeled");
            targets.push_back(*l);
            weights.push_back(r.sample_weight);
        }
        Classifier::Cache cache;
        const Matrix logits = model.forward(model.make_batch(part, ids), Mode::Train, dropout_seed, &cache);
        const FocalLossResult res = focal_loss(logits, targets, loss, weights);
        model.backward(cache, res.grad_sum);
        weighted += res.weighted_sum;
        weight += res.weight_sum;
    }
    if (weight > 0.0)
        for (Param* p : model.parameters()) p->grad /= weight;
    return {weighted, weight};
}

namespace {

double dev_macro_f1(const Classifier& model, const Dataset& dev) {
    const Task task = model.config().task;
    std::vector<int> truths;
    truths.reserve(dev.size());
    for (const auto& r : dev.records) truths.push_back(*label_of(r, task));
    return macro_f1(confusion_matrix(truths, model.predict(dev), label_count(task)));
}

}  // namespace

TrainResult train_loop(Classifier model, const Dataset& train, const Dataset& dev, const TrainingConfig& cfg,
                       const std::function<void(const EpochRecord&)>& on_epoch) {
    validate(cfg);
    const Task task = model.config().task;
    if (model.config().num_labels != label_count(task))
        throw TrainingError("model has " + std::to_string(model.config().num_labels) + " labels but the task needs " +
                            std::to_string(label_count(task)));
    if (train.empty()) throw TrainingError("training set is empty");
    check_validation_integrity(dev, task);

    FocalLossConfig loss{cfg.gamma, {}};
    if (cfg.class_weighting) loss.class_weights = inverse_frequency_weights(class_counts(train, task));

    const std::size_t n = train.size();
    const auto micro = static_cast<std::size_t>(cfg.micro_batch);
    const auto effective = static_cast<std::size_t>(cfg.effective_batch());
    const std::size_t micro_per_epoch = (n + micro - 1) / micro;
    const std::size_t steps_per_epoch =
        (micro_per_epoch + static_cast<std::size_t>(cfg.accumulation_steps) - 1) /
        static_cast<std::size_t>(cfg.accumulation_steps);
    const std::size_t total_steps = steps_per_epoch * static_cast<std::size_t>(cfg.max_epochs);

    auto groups = llrd_param_groups(model, cfg.base_lr, cfg.llrd_alpha);
    AdamW opt(AdamW::Options{0.9, 0.999, 1e-8, cfg.weight_decay});
    auto multiplier = [&](std::size_t s) {
        return cfg.schedule == ScheduleKind::WarmupCosine ? lr_multiplier(s, total_steps, cfg.warmup_fraction)
                                                          : linear_lr_multiplier(s, total_steps, cfg.warmup_fraction);
    };

    EarlyStopping stopper(cfg.patience);
    TrainHistory history;
    Classifier best = model;
    std::size_t step = 0;
    const std::uint64_t dropout_root = child_seed(cfg.seed, kDropoutStream);

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng(child_seed(cfg.seed, static_cast<std::uint64_t>(epoch))).shuffle(order);

        EpochRecord rec;
        rec.epoch = epoch;
        double weighted = 0.0;
        double weight = 0.0;
        for (std::size_t i = 0; i < n; i += effective) {
            const std::size_t m = std::min(effective, n - i);
            std::vector<QAPair> batch;
            batch.reserve(m);
            std::vector<std::size_t> ids(order.begin() + static_cast<std::ptrdiff_t>(i),
                                         order.begin() + static_cast<std::ptrdiff_t>(i + m));
            for (std::size_t id : ids) batch.push_back(train.records[id]);
            const auto [ws, w] =
                accumulate_gradients(model, batch, ids, cfg.micro_batch, loss, child_seed(dropout_root, step));
            weighted += ws;
            weight += w;
            clip_grad_norm(model.parameters(), cfg.clip_norm);
            ++step;
            const double mult = multiplier(step);
            opt.step(groups, mult);
            rec.lr_trace.push_back(cfg.base_lr * mult);
        }
        rec.train_loss = weight > 0.0 ? weighted / weight : 0.0;
        rec.dev_macro_f1 = dev_macro_f1(model, dev);
        const bool stop = stopper.update(rec.dev_macro_f1);
        if (stopper.improved_last()) best = model;
        history.epochs.push_back(rec);
        log::info("epoch " + std::to_string(epoch) + ": loss " + text::format_fixed(rec.train_loss, 4) +
                  ", dev macro F1 " + text::format_fixed(rec.dev_macro_f1, 4));
        if (on_epoch) on_epoch(rec);
        if (stop) {
            history.stopped_early = true;
            break;
        }
    }
    history.best_epoch = stopper.best_epoch();
    if (model.truncation_count() > 0)
        log::warn(std::to_string(model.truncation_count()) + " sequences were truncated to " +
                  std::to_string(model.config().max_sequence_length) + " tokens");
    best.zero_grad();
    return {std::move(best), std::move(history)};
}

std::vector<GridCell> grid_search(const Grid& grid, const ModelConfig& model_cfg, const Dataset& train,
                                  const Dataset& dev, const TrainingConfig& fixed) {
    if (grid.base_lrs.empty() || grid.alphas.empty()) throw TrainingError("grid is empty");
    std::vector<GridCell> cells;
    for (double lr : grid.base_lrs) {
        for (double alpha : grid.alphas) {
            GridCell cell;
            cell.base_lr = lr;
            cell.llrd_alpha = alpha;
            TrainingConfig cfg = fixed;
            cfg.base_lr = lr;
            cfg.llrd_alpha = alpha;
            try {
                auto result = train_loop(Classifier(model_cfg), train, dev, cfg);
                cell.best_epoch = result.history.best_epoch;
                cell.dev_macro_f1 = result.history.epochs[static_cast<std::size_t>(cell.best_epoch - 1)].dev_macro_f1;
            } catch (const std::exception& e) {
                cell.error = e.what();
                log::warn("grid cell lr=" + text::format_exact(lr) + " alpha=" + text::format_exact(alpha) +
                          " failed: " + e.what());
            }
            cells.push_back(std::move(cell));
        }
    }
    std::stable_sort(cells.begin(), cells.end(), [](const GridCell& a, const GridCell& b) {
        if (a.dev_macro_f1.has_value() != b.dev_macro_f1.has_value()) return a.dev_macro_f1.has_value();
        return a.dev_macro_f1 && *a.dev_macro_f1 > *b.dev_macro_f1;
    });
    return cells;
}

void write_grid_table(const std::vector<GridCell>& cells, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw TrainingError("cannot write grid table to " + path.string());
    out << "rank\tbase_lr\tllrd_alpha\tdev_macro_f1\tbest_epoch\terror\n";
    for (std::size_t i = 0; i < cells.size(); ++i) {
        const auto& c = cells[i];
        out << i + 1 << '\t' << text::format_exact(c.base_lr) << '\t' << text::format_exact(c.llrd_alpha) << '\t'
            << (c.dev_macro_f1 ? text::format_fixed(*c.dev_macro_f1, 4) : "-") << '\t' << c.best_epoch << '\t'
            << text::escape_field(c.error) << '\n';
    }
}

std::vector<std::pair<Dataset, Dataset>> stratified_kfold(const Dataset& d, int k, std::uint64_t seed, Task task) {
    if (k < 2) throw DataError("k-fold needs k >= 2");
    const int classes = label_count(task);
    std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(classes));
    for (std::size_t i = 0; i < d.size(); ++i) {
        const auto l = label_of(d.records[i], task);
        if (!l) throw DataError("record " + std::to_string(i) + " ('" + d.records[i].id + "') is unlabeled");
        members[static_cast<std::size_t>(*l)].push_back(i);
    }
    const auto& labels = LabelTable::builtin();
    for (int c = 0; c < classes; ++c) {
        if (members[static_cast<std::size_t>(c)].size() < static_cast<std::size_t>(k))
            throw DataError("class '" + labels.name(task, c) + "' has " +
                            std::to_string(members[static_cast<std::size_t>(c)].size()) + " records, fewer than k=" +
                            std::to_string(k));
    }
    std::vector<int> fold_of(d.size(), 0);
    std::size_t cursor = 0;
    for (int c = 0; c < classes; ++c) {
        auto& m = members[static_cast<std::size_t>(c)];
        Rng(child_seed(seed, static_cast<std::uint64_t>(c))).shuffle(m);
        for (std::size_t idx : m) fold_of[idx] = static_cast<int>(cursor++ % static_cast<std::size_t>(k));
    }
    std::vector<std::pair<Dataset, Dataset>> out;
    for (int f = 0; f < k; ++f) {
        Dataset tr{d.name + "-fold" + std::to_string(f + 1) + "-train", {}, d.held_out};
        Dataset dv{d.name + "-fold" + std::to_string(f + 1) + "-dev", {}, d.held_out};
        for (std::size_t i = 0; i < d.size(); ++i) (fold_of[i] == f ? dv : tr).records.push_back(d.records[i]);
        out.emplace_back(std::move(tr), std::move(dv));
    }
    return out;
}

}  // namespace clarity
