#pragma once

#include <Eigen/Dense>

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "clarity/data.hpp"
#include "clarity/rng.hpp"

namespace clarity {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

/// A trainable tensor with its gradient accumulator. `depth` counts layers
/// down from the top of the network (classifier head and top encoder layer
/// are depth 0, embeddings are the deepest).
struct Param {
    std::string name;
    Matrix value;
    Matrix grad;
    int depth = 0;
    /// Biases and normalization gains are excluded from weight decay.
    bool decay = true;

    Param() = default;
    Param(std::string n, Matrix v, int d, bool wd)
        : name(std::move(n)), value(std::move(v)), grad(Matrix::Zero(value.rows(), value.cols())), depth(d),
          decay(wd) {}
};

// ---------------------------------------------------------------------------
// Tokenization
// ---------------------------------------------------------------------------

inline constexpr int kPadId = 0;
inline constexpr int kClsId = 1;
inline constexpr int kSepId = 2;
inline constexpr int kFirstWordId = 3;

/// Word-level tokenizer that hashes lowercased tokens into a fixed
/// vocabulary, so checkpoints need no vocabulary file.
class HashTokenizer {
public:
    explicit HashTokenizer(int vocab_size) : vocab_size_(vocab_size) {}

    int id(std::string_view token) const;
    std::vector<int> encode(std::string_view text) const;
    int vocab_size() const noexcept { return vocab_size_; }

private:
    int vocab_size_;
};

// ---------------------------------------------------------------------------
// Encoder
// ---------------------------------------------------------------------------

struct EncoderSpec {
    std::string identifier;
    int vocab_size = 2048;
    int hidden = 32;
    int layers = 2;
    int ffn = 64;
    int max_positions = 512;
};

/// Resolves an encoder identifier. Bundled tiny encoders resolve offline;
/// hub checkpoints (deberta, bert, ...) need external weights and throw.
EncoderSpec resolve_encoder(std::string_view identifier);

/// Identifiers the registry can build without external weights.
std::vector<std::string> bundled_encoders();

/// Padded token batch. mask(b, t) is 1 for real tokens; real tokens must
/// form a prefix of each row.
struct TokenBatch {
    Eigen::MatrixXi ids;
    Eigen::MatrixXi mask;

    int batch_size() const { return static_cast<int>(ids.rows()); }
};

/// Small post-norm transformer encoder: token + position embeddings with
/// layer norm, then `layers` blocks of single-head self-attention and a
/// ReLU feed-forward, each wrapped in residual + layer norm.
class TinyEncoder {
public:
    struct LayerCache;
    struct SequenceCache;

    TinyEncoder() = default;
    TinyEncoder(const EncoderSpec& spec, std::uint64_t seed);

    const EncoderSpec& spec() const noexcept { return spec_; }
    int hidden() const noexcept { return spec_.hidden; }
    int layer_count() const noexcept { return spec_.layers; }

    /// Hidden states (n x H) of one sequence of real tokens.
    Matrix encode_sequence(std::span<const int> ids, SequenceCache* cache) const;

    /// Per-sequence hidden states for a padded batch; padded rows are zero.
    std::vector<Matrix> encode(const TokenBatch& batch) const;

    /// Accumulates parameter gradients given dL/dhidden for one sequence.
    void backward(const SequenceCache& cache, const Matrix& grad_hidden);

    std::vector<Param*> parameters();
    std::vector<const Param*> parameters() const;

private:
    EncoderSpec spec_;
    Param tok_emb_, pos_emb_, emb_gain_, emb_bias_;
    struct Block {
        Param wq, bq, wk, bk, wv, bv, wo, bo;
        Param ln1_g, ln1_b;
        Param w1, b1, w2, b2;
        Param ln2_g, ln2_b;
    };
    std::vector<Block> blocks_;
};

struct TinyEncoder::LayerCache {
    Matrix x;
    Matrix q, k, v;
    Matrix attn;
    Matrix ctx;
    Matrix h1, h1_hat;
    Vector inv_std1;
    Matrix z1;
    Matrix y_hat;
    Vector inv_std2;
};

struct TinyEncoder::SequenceCache {
    std::vector<int> ids;
    Matrix emb_hat;
    Vector emb_inv_std;
    std::vector<LayerCache> layers;
};

// ---------------------------------------------------------------------------
// Classifier
// ---------------------------------------------------------------------------

enum class Pooling { FirstToken };

struct ModelConfig {
    std::string encoder_identifier = "tiny-encoder";
    int max_sequence_length = 256;
    int num_labels = kClarityCount;
    int feature_width = 32;
    double dropout = 0.1;
    Pooling pooling = Pooling::FirstToken;
    bool use_features = true;
    Task task = Task::Clarity;
    std::uint64_t init_seed = 0;
};

/// Throws TrainingError for configurations outside the model's contract.
void validate(const ModelConfig& cfg);

/// Encoder input plus the two boolean features (B x 2, values in {0, 1}).
struct ModelBatch {
    TokenBatch tokens;
    Matrix features;
    /// Dataset index of every row; keys the per-sample dropout stream.
    std::vector<std::size_t> sample_ids;
};

enum class Mode { Train, Eval };

/// First-token representation of an (n x H) state matrix.
RowVector pool(const Matrix& hidden_states);

/// Pooled vectors for a batch (B x H).
Matrix pool(const std::vector<Matrix>& hidden_states, const Eigen::MatrixXi& mask);

/// Encoder + fusion head. logits = W_c [pool(encode(x)); dropout(relu(W_f f + b_f))] + b_c.
class Classifier {
public:
    struct Cache;

    Classifier() = default;
    explicit Classifier(const ModelConfig& cfg);
    Classifier(const Classifier& other);
    Classifier& operator=(const Classifier& other);
    Classifier(Classifier&& other) noexcept;
    Classifier& operator=(Classifier&& other) noexcept;

    const ModelConfig& config() const noexcept { return cfg_; }
    const TinyEncoder& encoder() const noexcept { return encoder_; }
    const HashTokenizer& tokenizer() const noexcept { return tokenizer_; }

    /// [CLS] question [SEP] answer [SEP], truncated to max_sequence_length by
    /// dropping answer tokens from the tail first.
    std::vector<int> encode_pair(const QAPair& p) const;

    /// Padded batch for `records`; sample ids default to 0..n-1.
    ModelBatch make_batch(std::span<const QAPair> records, std::span<const std::size_t> sample_ids = {}) const;

    /// B x K logits. In Train mode head dropout masks are drawn from
    /// child_seed(dropout_seed, sample id). When `cache` is non-null the
    /// activations needed by backward() are recorded.
    Matrix forward(const ModelBatch& batch, Mode mode, std::uint64_t dropout_seed = 0, Cache* cache = nullptr) const;

    /// Accumulates gradients given dL/dlogits (B x K).
    void backward(const Cache& cache, const Matrix& grad_logits);

    std::vector<int> predict(const ModelBatch& batch) const;

    /// Predictions for a whole dataset, evaluated in chunks.
    std::vector<int> predict(const Dataset& d, std::size_t chunk = 32) const;
    /// Softmax confidence of the predicted class for each record.
    std::vector<double> confidence(const Dataset& d, std::size_t chunk = 32) const;

    std::vector<Param*> parameters();
    std::vector<const Param*> parameters() const;
    void zero_grad();

    /// Sequences truncated so far (shared across threads).
    std::size_t truncation_count() const noexcept { return truncated_.load(); }

    Param& feature_weight() { return feat_w_; }
    Param& classifier_weight() { return cls_w_; }
    Param& classifier_bias() { return cls_b_; }

private:
    ModelConfig cfg_;
    HashTokenizer tokenizer_{2048};
    TinyEncoder encoder_;
    Param feat_w_, feat_b_;
    Param cls_w_, cls_b_;
    mutable std::atomic<std::size_t> truncated_{0};
};

struct Classifier::Cache {
    std::vector<TinyEncoder::SequenceCache> sequences;
    Matrix pooled;
    Matrix features;
    Matrix feat_pre;
    Matrix feat_mask;
    Matrix fused;
};

/// Index of the largest logit; ties go to the smallest label code.
int argmax_label(const RowVector& logits);

/// Checkpoint directory: manifest.txt (key=value ModelConfig) and
/// weights.txt (name rows cols followed by values).
void save_checkpoint(const Classifier& model, const std::filesystem::path& dir,
                     const std::vector<std::pair<std::string, std::string>>& extra = {});
Classifier load_checkpoint(const std::filesystem::path& dir);

}  // namespace clarity
