#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "clarity/data.hpp"
#include "clarity/model.hpp"

namespace clarity {

// ---------------------------------------------------------------------------
// Loss
// ---------------------------------------------------------------------------

struct FocalLossConfig {
    double gamma = 2.0;
    /// One positive weight per class; empty means all ones.
    std::vector<double> class_weights;
};

struct FocalLossResult {
    /// sum_i w_i * loss_i / sum_i w_i
    double loss = 0.0;
    /// sum_i w_i * loss_i, before normalization.
    double weighted_sum = 0.0;
    double weight_sum = 0.0;
    /// d(weighted_sum)/d(logits); divide by the normalizer in use.
    Matrix grad_sum;
};

/// Per-sample alpha_t * (1 - p_t)^gamma * (-log p_t), reduced as a weighted
/// mean over sample weights. Throws TrainingError on non-finite logits.
FocalLossResult focal_loss(const Matrix& logits, const std::vector<int>& targets, const FocalLossConfig& cfg,
                           const std::vector<double>& sample_weights = {});

/// alpha_c = N / (K * n_c). Throws on a zero-count class.
std::vector<double> inverse_frequency_weights(const std::vector<std::size_t>& counts);

// ---------------------------------------------------------------------------
// Learning rates
// ---------------------------------------------------------------------------

struct ParamGroup {
    int depth = 0;
    double lr = 0.0;
    std::vector<Param*> params;
};

/// One group per depth with lr = base_lr * alpha^depth, ordered by depth.
std::vector<ParamGroup> llrd_param_groups(Classifier& model, double base_lr, double alpha);

/// Optimizer steps spent in warmup: ceil(warmup_fraction * total_steps).
std::size_t warmup_steps(std::size_t total_steps, double warmup_fraction);

/// Linear warmup from 0 to 1, then half-cosine decay to 0 at total_steps.
double lr_multiplier(std::size_t step, std::size_t total_steps, double warmup_fraction);

/// Linear warmup, then linear decay to 0 at total_steps.
double linear_lr_multiplier(std::size_t step, std::size_t total_steps, double warmup_fraction);

enum class ScheduleKind { WarmupCosine, WarmupLinear };

/// Adam with decoupled weight decay.
class AdamW {
public:
    struct Options {
        double beta1 = 0.9;
        double beta2 = 0.999;
        double eps = 1e-8;
        double weight_decay = 0.01;
    };

    explicit AdamW(Options opts) : opts_(opts) {}
    AdamW() : AdamW(Options{}) {}

    /// Applies one update using each group's lr scaled by `multiplier`.
    void step(const std::vector<ParamGroup>& groups, double multiplier);

    std::size_t steps_taken() const noexcept { return t_; }

private:
    Options opts_;
    std::size_t t_ = 0;
    std::map<const Param*, std::pair<Matrix, Matrix>> moments_;
};

/// Scales gradients so their global L2 norm is at most max_norm. Returns
/// the norm before clipping.
double clip_grad_norm(const std::vector<Param*>& params, double max_norm);

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct TrainingConfig {
    double base_lr = 3e-5;
    double llrd_alpha = 0.9;
    double gamma = 2.0;
    int micro_batch = 8;
    int accumulation_steps = 4;
    double warmup_fraction = 0.15;
    int max_epochs = 6;
    int patience = 3;
    std::uint64_t seed = 42;
    double weight_decay = 0.01;
    double clip_norm = 1.0;
    bool class_weighting = true;
    ScheduleKind schedule = ScheduleKind::WarmupCosine;

    int effective_batch() const noexcept { return micro_batch * accumulation_steps; }
};

void validate(const TrainingConfig& cfg);

/// Tracks the best validation score; equal scores do not count as
/// improvement. Epochs are 1-based.
class EarlyStopping {
public:
    explicit EarlyStopping(int patience) : patience_(patience) {}

    /// Records an epoch score; returns true when training should stop.
    bool update(double score);

    int best_epoch() const noexcept { return best_epoch_; }
    double best_score() const noexcept { return best_score_; }
    bool improved_last() const noexcept { return improved_last_; }
    int epochs_seen() const noexcept { return epoch_; }

private:
    int patience_;
    int epoch_ = 0;
    int best_epoch_ = 0;
    double best_score_ = -1.0;
    int bad_epochs_ = 0;
    bool improved_last_ = false;
};

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double dev_macro_f1 = 0.0;
    /// Effective base learning rate (base_lr * multiplier) after every
    /// optimizer step of the epoch.
    std::vector<double> lr_trace;
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;
    int best_epoch = 0;
    bool stopped_early = false;
};

/// Writes one row per epoch: epoch, train_loss, dev_macro_f1, final_lr, steps.
void write_history(const TrainHistory& h, const std::filesystem::path& path);

struct TrainResult {
    Classifier model;
    TrainHistory history;
};

/// Throws IntegrityError when every dev label is identical: selecting a
/// checkpoint against a constant label vector is meaningless.
void check_validation_integrity(const Dataset& dev, Task task);

/// One optimizer step over `records`, split into micro-batches of
/// micro_batch. Gradients are accumulated as sum_i w_i * loss_i and
/// normalized by the total sample weight of the step, so the update equals
/// that of a single batch over the same records. Returns the weighted loss sum
/// and weight sum.
std::pair<double, double> accumulate_gradients(Classifier& model, std::span<const QAPair> records,
                                               std::span<const std::size_t> sample_ids, int micro_batch,
                                               const FocalLossConfig& loss, std::uint64_t dropout_seed);

/// Full fine-tuning run with early stopping on dev macro F1. Returns the
/// best-epoch model.
TrainResult train_loop(Classifier model, const Dataset& train, const Dataset& dev, const TrainingConfig& cfg,
                       const std::function<void(const EpochRecord&)>& on_epoch = {});

struct GridCell {
    double base_lr = 0.0;
    double llrd_alpha = 0.0;
    std::optional<double> dev_macro_f1;
    int best_epoch = 0;
    std::string error;
};

struct Grid {
    std::vector<double> base_lrs{2e-5, 3e-5, 5e-5};
    std::vector<double> alphas{0.8, 0.9, 0.95};
};

/// Trains one model per (lr, alpha) cell with the same seed. Failed cells
/// keep their error message and do not stop the others. Rows are ranked by
/// dev macro F1 descending; failures last.
std::vector<GridCell> grid_search(const Grid& grid, const ModelConfig& model_cfg, const Dataset& train,
                                  const Dataset& dev, const TrainingConfig& fixed);

void write_grid_table(const std::vector<GridCell>& cells, const std::filesystem::path& path);

/// k (train, dev) pairs; every record appears in exactly one dev fold and
/// per-class fold counts differ by at most one.
std::vector<std::pair<Dataset, Dataset>> stratified_kfold(const Dataset& d, int k, std::uint64_t seed,
                                                          Task task = Task::Clarity);

}  // namespace clarity
