#include "clarity/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "clarity/error.hpp"
#include "clarity/text.hpp"

namespace clarity {

namespace {

constexpr double kLayerNormEps = 1e-5;

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng) {
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal() * stddev;
    return m;
}

Param weight(std::string name, int in, int out, int depth, Rng& rng) {
    return Param(std::move(name), random_matrix(in, out, 1.0 / std::sqrt(static_cast<double>(in)), rng), depth, true);
}

Param bias(std::string name, int out, int depth) { return Param(std::move(name), Matrix::Zero(1, out), depth, false); }

Param gain(std::string name, int out, int depth) { return Param(std::move(name), Matrix::Ones(1, out), depth, false); }

/// Row-wise layer norm. Stores the normalized input and 1/sigma per row.
Matrix layer_norm(const Matrix& x, const Param& g, const Param& b, Matrix& x_hat, Vector& inv_std) {
    const Eigen::Index n = x.rows();
    const double h = static_cast<double>(x.cols());
    x_hat.resize(x.rows(), x.cols());
    inv_std.resize(n);
    for (Eigen::Index r = 0; r < n; ++r) {
        const double mean = x.row(r).sum() / h;
        const RowVector centered = x.row(r).array() - mean;
        const double var = centered.squaredNorm() / h;
        inv_std(r) = 1.0 / std::sqrt(var + kLayerNormEps);
        x_hat.row(r) = centered * inv_std(r);
    }
    Matrix y = x_hat.array().rowwise() * g.value.row(0).array();
    y.rowwise() += b.value.row(0);
    return y;
}

Matrix layer_norm_backward(const Matrix& dy, const Matrix& x_hat, const Vector& inv_std, Param& g, Param& b) {
    g.grad.row(0) += (dy.array() * x_hat.array()).colwise().sum().matrix();
    b.grad.row(0) += dy.colwise().sum();
    const Matrix dxhat = dy.array().rowwise() * g.value.row(0).array();
    const double h = static_cast<double>(dy.cols());
    Matrix dx(dy.rows(), dy.cols());
    for (Eigen::Index r = 0; r < dy.rows(); ++r) {
        const double mean_d = dxhat.row(r).sum() / h;
        const double mean_dx = dxhat.row(r).dot(x_hat.row(r)) / h;
        dx.row(r) = inv_std(r) * (dxhat.row(r).array() - mean_d - x_hat.row(r).array() * mean_dx).matrix();
    }
    return dx;
}

Matrix affine(const Matrix& x, const Param& w, const Param& b) {
    Matrix y = x * w.value;
    y.rowwise() += b.value.row(0);
    return y;
}

void affine_backward(const Matrix& x, const Matrix& dy, Param& w, Param& b) {
    w.grad.noalias() += x.transpose() * dy;
    b.grad.row(0) += dy.colwise().sum();
}

void softmax_rows(Matrix& s) {
    for (Eigen::Index r = 0; r < s.rows(); ++r) {
        const double m = s.row(r).maxCoeff();
        s.row(r) = (s.row(r).array() - m).exp();
        s.row(r) /= s.row(r).sum();
    }
}

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

int prefix_length(const Eigen::MatrixXi& mask, int row) {
    int n = 0;
    while (n < mask.cols() && mask(row, n) != 0) ++n;
    for (int t = n; t < mask.cols(); ++t) {
        if (mask(row, t) != 0) throw TrainingError("attention mask must be a prefix of ones");
    }
    return n;
}

}  // namespace

// ---------------------------------------------------------------------------
// Tokenizer
// ---------------------------------------------------------------------------

int HashTokenizer::id(std::string_view token) const {
    const auto span = static_cast<std::uint64_t>(vocab_size_ - kFirstWordId);
    return kFirstWordId + static_cast<int>(fnv1a(text::to_lower(token)) % span);
}

std::vector<int> HashTokenizer::encode(std::string_view s) const {
    std::vector<int> ids;
    for (const auto& t : text::word_tokens(s)) ids.push_back(id(t));
    return ids;
}

// ---------------------------------------------------------------------------
// Registry
// ---------------------------------------------------------------------------

namespace {

const std::map<std::string, EncoderSpec>& bundled() {
    static const std::map<std::string, EncoderSpec> specs{
        {"tiny-encoder", {"tiny-encoder", 2048, 32, 2, 64, 512}},
        {"tiny-encoder-small", {"tiny-encoder-small", 64, 8, 2, 16, 64}},
    };
    return specs;
}

}  // namespace

EncoderSpec resolve_encoder(std::string_view identifier) {
    const auto& specs = bundled();
    if (const auto it = specs.find(std::string(identifier)); it != specs.end()) return it->second;
    static const char* const kHub[] = {"microsoft/deberta-v3-base", "microsoft/deberta-v3-large",
                                       "bert-base-uncased", "distilbert-base-uncased",
                                       "mlburnham/Political_DEBATE_large_v1.0"};
    std::string bundled_list = text::join(bundled_encoders(), ", ");
    for (const char* hub : kHub) {
        if (identifier == hub)
            throw TrainingError("encoder '" + std::string(identifier) +
                                "' needs pretrained weights that are not bundled; available offline: " + bundled_list);
    }
    throw TrainingError("unknown encoder identifier '" + std::string(identifier) + "'; available: " + bundled_list);
}

std::vector<std::string> bundled_encoders() {
    std::vector<std::string> out;
    for (const auto& [k, v] : bundled()) out.push_back(k);
    return out;
}

// ---------------------------------------------------------------------------
// TinyEncoder
// ---------------------------------------------------------------------------

TinyEncoder::TinyEncoder(const EncoderSpec& spec, std::uint64_t seed) : spec_(spec) {
    if (spec.hidden < 1 || spec.layers < 1 || spec.ffn < 1 || spec.vocab_size <= kFirstWordId ||
        spec.max_positions < 1)
        throw TrainingError("invalid encoder spec for '" + spec.identifier + "'");
    Rng rng(child_seed(seed, 0x656e63));
    const int h = spec.hidden;
    const int emb_depth = spec.layers;
    tok_emb_ = Param("encoder.embeddings.token", random_matrix(spec.vocab_size, h, 1.0, rng), emb_depth, true);
    pos_emb_ = Param("encoder.embeddings.position", random_matrix(spec.max_positions, h, 0.1, rng), emb_depth, true);
    emb_gain_ = gain("encoder.embeddings.norm.gain", h, emb_depth);
    emb_bias_ = bias("encoder.embeddings.norm.bias", h, emb_depth);
    for (int l = 0; l < spec.layers; ++l) {
        const int depth = spec.layers - 1 - l;
        const std::string p = "encoder.layer." + std::to_string(l) + ".";
        Block b;
        b.wq = weight(p + "attention.query.weight", h, h, depth, rng);
        b.bq = bias(p + "attention.query.bias", h, depth);
        b.wk = weight(p + "attention.key.weight", h, h, depth, rng);
        b.bk = bias(p + "attention.key.bias", h, depth);
        b.wv = weight(p + "attention.value.weight", h, h, depth, rng);
        b.bv = bias(p + "attention.value.bias", h, depth);
        b.wo = weight(p + "attention.output.weight", h, h, depth, rng);
        b.bo = bias(p + "attention.output.bias", h, depth);
        b.ln1_g = gain(p + "attention.norm.gain", h, depth);
        b.ln1_b = bias(p + "attention.norm.bias", h, depth);
        b.w1 = weight(p + "ffn.in.weight", h, spec.ffn, depth, rng);
        b.b1 = bias(p + "ffn.in.bias", spec.ffn, depth);
        b.w2 = weight(p + "ffn.out.weight", spec.ffn, h, depth, rng);
        b.b2 = bias(p + "ffn.out.bias", h, depth);
        b.ln2_g = gain(p + "ffn.norm.gain", h, depth);
        b.ln2_b = bias(p + "ffn.norm.bias", h, depth);
        blocks_.push_back(std::move(b));
    }
}

Matrix TinyEncoder::encode_sequence(std::span<const int> ids, SequenceCache* cache) const {
    const auto n = static_cast<Eigen::Index>(ids.size());
    if (n == 0) throw TrainingError("cannot encode an empty sequence");
    if (n > spec_.max_positions) throw TrainingError("sequence longer than the encoder's position table");
    Matrix x(n, spec_.hidden);
    for (Eigen::Index t = 0; t < n; ++t) {
        const int id = ids[static_cast<std::size_t>(t)];
        if (id < 0 || id >= spec_.vocab_size) throw TrainingError("token id out of vocabulary: " + std::to_string(id));
        x.row(t) = tok_emb_.value.row(id) + pos_emb_.value.row(t);
    }
    Matrix emb_hat;
    Vector emb_inv;
    x = layer_norm(x, emb_gain_, emb_bias_, emb_hat, emb_inv);
    if (cache) {
        cache->ids.assign(ids.begin(), ids.end());
        cache->emb_hat = emb_hat;
        cache->emb_inv_std = emb_inv;
        cache->layers.clear();
        cache->layers.reserve(blocks_.size());
    }
    const double scale = 1.0 / std::sqrt(static_cast<double>(spec_.hidden));
    for (const auto& b : blocks_) {
        LayerCache lc;
        lc.x = x;
        lc.q = affine(x, b.wq, b.bq);
        lc.k = affine(x, b.wk, b.bk);
        lc.v = affine(x, b.wv, b.bv);
        lc.attn = lc.q * lc.k.transpose() * scale;
        softmax_rows(lc.attn);
        lc.ctx = lc.attn * lc.v;
        const Matrix a1 = x + affine(lc.ctx, b.wo, b.bo);
        lc.h1 = layer_norm(a1, b.ln1_g, b.ln1_b, lc.h1_hat, lc.inv_std1);
        lc.z1 = affine(lc.h1, b.w1, b.b1);
        const Matrix r = lc.z1.cwiseMax(0.0);
        const Matrix a2 = lc.h1 + affine(r, b.w2, b.b2);
        x = layer_norm(a2, b.ln2_g, b.ln2_b, lc.y_hat, lc.inv_std2);
        if (cache) cache->layers.push_back(std::move(lc));
    }
    return x;
}

std::vector<Matrix> TinyEncoder::encode(const TokenBatch& batch) const {
    std::vector<Matrix> out;
    out.reserve(static_cast<std::size_t>(batch.batch_size()));
    for (int b = 0; b < batch.batch_size(); ++b) {
        const int n = prefix_length(batch.mask, b);
        std::vector<int> ids(static_cast<std::size_t>(n));
        for (int t = 0; t < n; ++t) ids[static_cast<std::size_t>(t)] = batch.ids(b, t);
        Matrix h = Matrix::Zero(batch.ids.cols(), spec_.hidden);
        if (n > 0) h.topRows(n) = encode_sequence(ids, nullptr);
        out.push_back(std::move(h));
    }
    return out;
}

void TinyEncoder::backward(const SequenceCache& cache, const Matrix& grad_hidden) {
    Matrix dx = grad_hidden;
    const double scale = 1.0 / std::sqrt(static_cast<double>(spec_.hidden));
    for (std::size_t li = blocks_.size(); li-- > 0;) {
        auto& b = blocks_[li];
        const auto& lc = cache.layers[li];
        // Feed-forward sublayer.
        const Matrix da2 = layer_norm_backward(dx, lc.y_hat, lc.inv_std2, b.ln2_g, b.ln2_b);
        const Matrix r = lc.z1.cwiseMax(0.0);
        affine_backward(r, da2, b.w2, b.b2);
        const Matrix dz1 = (da2 * b.w2.value.transpose()).array() * (lc.z1.array() > 0.0).cast<double>();
        affine_backward(lc.h1, dz1, b.w1, b.b1);
        const Matrix dh1 = da2 + dz1 * b.w1.value.transpose();
        // Attention sublayer.
        const Matrix da1 = layer_norm_backward(dh1, lc.h1_hat, lc.inv_std1, b.ln1_g, b.ln1_b);
        affine_backward(lc.ctx, da1, b.wo, b.bo);
        const Matrix dctx = da1 * b.wo.value.transpose();
        const Matrix dattn = dctx * lc.v.transpose();
        const Matrix dv = lc.attn.transpose() * dctx;
        const Vector row_dot = (dattn.array() * lc.attn.array()).rowwise().sum();
        const Matrix ds = (lc.attn.array() * (dattn.colwise() - row_dot).array()) * scale;
        const Matrix dq = ds * lc.k;
        const Matrix dk = ds.transpose() * lc.q;
        affine_backward(lc.x, dq, b.wq, b.bq);
        affine_backward(lc.x, dk, b.wk, b.bk);
        affine_backward(lc.x, dv, b.wv, b.bv);
        dx = da1 + dq * b.wq.value.transpose() + dk * b.wk.value.transpose() + dv * b.wv.value.transpose();
    }
    const Matrix demb = layer_norm_backward(dx, cache.emb_hat, cache.emb_inv_std, emb_gain_, emb_bias_);
    for (std::size_t t = 0; t < cache.ids.size(); ++t) {
        const auto row = static_cast<Eigen::Index>(t);
        tok_emb_.grad.row(cache.ids[t]) += demb.row(row);
        pos_emb_.grad.row(row) += demb.row(row);
    }
}

std::vector<Param*> TinyEncoder::parameters() {
    std::vector<Param*> out{&tok_emb_, &pos_emb_, &emb_gain_, &emb_bias_};
    for (auto& b : blocks_) {
        for (Param* p : {&b.wq, &b.bq, &b.wk, &b.bk, &b.wv, &b.bv, &b.wo, &b.bo, &b.ln1_g, &b.ln1_b, &b.w1, &b.b1,
                         &b.w2, &b.b2, &b.ln2_g, &b.ln2_b})
            out.push_back(p);
    }
    return out;
}

std::vector<const Param*> TinyEncoder::parameters() const {
    auto mut = const_cast<TinyEncoder*>(this)->parameters();
    return {mut.begin(), mut.end()};
}

// ---------------------------------------------------------------------------
// Classifier
// ---------------------------------------------------------------------------

void validate(const ModelConfig& cfg) {
    if (cfg.max_sequence_length < 16) throw TrainingError("max_sequence_length must be at least 16");
    if (cfg.num_labels != kClarityCount && cfg.num_labels != kEvasionCount)
        throw TrainingError("num_labels must be 3 or 9");
    if (cfg.num_labels != label_count(cfg.task)) throw TrainingError("num_labels does not match the task");
    if (cfg.use_features && cfg.feature_width < 1) throw TrainingError("feature_width must be positive");
    if (!(cfg.dropout >= 0.0 && cfg.dropout < 1.0)) throw TrainingError("dropout must lie in [0, 1)");
}

RowVector pool(const Matrix& hidden_states) {
    if (hidden_states.rows() == 0) throw TrainingError("cannot pool an empty sequence");
    return hidden_states.row(0);
}

Matrix pool(const std::vector<Matrix>& hidden_states, const Eigen::MatrixXi& mask) {
    if (hidden_states.empty()) return Matrix(0, 0);
    Matrix out(static_cast<Eigen::Index>(hidden_states.size()), hidden_states.front().cols());
    for (std::size_t b = 0; b < hidden_states.size(); ++b) {
        if (prefix_length(mask, static_cast<int>(b)) == 0) throw TrainingError("cannot pool an empty sequence");
        out.row(static_cast<Eigen::Index>(b)) = pool(hidden_states[b]);
    }
    return out;
}

Classifier::Classifier(const ModelConfig& cfg) : cfg_(cfg) {
    validate(cfg);
    const EncoderSpec spec = resolve_encoder(cfg.encoder_identifier);
    if (cfg.max_sequence_length > spec.max_positions)
        throw TrainingError("max_sequence_length exceeds the encoder's " + std::to_string(spec.max_positions) +
                            " positions");
    tokenizer_ = HashTokenizer(spec.vocab_size);
    encoder_ = TinyEncoder(spec, cfg.init_seed);
    Rng rng(child_seed(cfg.init_seed, 0x68656164));
    const int fused = spec.hidden + (cfg.use_features ? cfg.feature_width : 0);
    if (cfg.use_features) {
        feat_w_ = weight("head.features.weight", 2, cfg.feature_width, 0, rng);
        feat_b_ = bias("head.features.bias", cfg.feature_width, 0);
    }
    cls_w_ = Param("head.classifier.weight", random_matrix(fused, cfg.num_labels, 0.02, rng), 0, true);
    cls_b_ = bias("head.classifier.bias", cfg.num_labels, 0);
}

Classifier::Classifier(const Classifier& other)
    : cfg_(other.cfg_), tokenizer_(other.tokenizer_), encoder_(other.encoder_), feat_w_(other.feat_w_),
      feat_b_(other.feat_b_), cls_w_(other.cls_w_), cls_b_(other.cls_b_), truncated_(other.truncated_.load()) {}

Classifier& Classifier::operator=(const Classifier& other) {
    if (this != &other) {
        cfg_ = other.cfg_;
        tokenizer_ = other.tokenizer_;
        encoder_ = other.encoder_;
        feat_w_ = other.feat_w_;
        feat_b_ = other.feat_b_;
        cls_w_ = other.cls_w_;
        cls_b_ = other.cls_b_;
        truncated_.store(other.truncated_.load());
    }
    return *this;
}

Classifier::Classifier(Classifier&& other) noexcept
    : cfg_(std::move(other.cfg_)), tokenizer_(other.tokenizer_), encoder_(std::move(other.encoder_)),
      feat_w_(std::move(other.feat_w_)), feat_b_(std::move(other.feat_b_)), cls_w_(std::move(other.cls_w_)),
      cls_b_(std::move(other.cls_b_)), truncated_(other.truncated_.load()) {}

Classifier& Classifier::operator=(Classifier&& other) noexcept {
    if (this != &other) {
        cfg_ = std::move(other.cfg_);
        tokenizer_ = other.tokenizer_;
        encoder_ = std::move(other.encoder_);
        feat_w_ = std::move(other.feat_w_);
        feat_b_ = std::move(other.feat_b_);
        cls_w_ = std::move(other.cls_w_);
        cls_b_ = std::move(other.cls_b_);
        truncated_.store(other.truncated_.load());
    }
    return *this;
}

std::vector<int> Classifier::encode_pair(const QAPair& p) const {
    std::vector<int> q = tokenizer_.encode("Question: " + text::normalize_space(p.question));
    std::vector<int> a = tokenizer_.encode("Answer: " + text::normalize_space(p.answer));
    const auto limit = static_cast<std::size_t>(cfg_.max_sequence_length);
    if (3 + q.size() + a.size() > limit) {
        truncated_.fetch_add(1);
        const std::size_t room = limit - 3;
        if (q.size() >= room) {
            q.resize(room);
            a.clear();
        } else {
            a.resize(room - q.size());
        }
    }
    std::vector<int> ids;
    ids.reserve(3 + q.size() + a.size());
    ids.push_back(kClsId);
    ids.insert(ids.end(), q.begin(), q.end());
    ids.push_back(kSepId);
    ids.insert(ids.end(), a.begin(), a.end());
    ids.push_back(kSepId);
    return ids;
}

ModelBatch Classifier::make_batch(std::span<const QAPair> records, std::span<const std::size_t> sample_ids) const {
    if (!sample_ids.empty() && sample_ids.size() != records.size())
        throw TrainingError("sample id count does not match batch size");
    std::vector<std::vector<int>> seqs;
    seqs.reserve(records.size());
    std::size_t longest = 1;
    for (const auto& r : records) {
        seqs.push_back(encode_pair(r));
        longest = std::max(longest, seqs.back().size());
    }
    ModelBatch batch;
    const auto rows = static_cast<Eigen::Index>(records.size());
    const auto cols = static_cast<Eigen::Index>(longest);
    batch.tokens.ids = Eigen::MatrixXi::Constant(rows, cols, kPadId);
    batch.tokens.mask = Eigen::MatrixXi::Zero(rows, cols);
    batch.features = Matrix::Zero(rows, 2);
    batch.sample_ids.resize(records.size());
    for (std::size_t b = 0; b < records.size(); ++b) {
        const auto r = static_cast<Eigen::Index>(b);
        for (std::size_t t = 0; t < seqs[b].size(); ++t) {
            batch.tokens.ids(r, static_cast<Eigen::Index>(t)) = seqs[b][t];
            batch.tokens.mask(r, static_cast<Eigen::Index>(t)) = 1;
        }
        batch.features(r, 0) = records[b].affirmative_question ? 1.0 : 0.0;
        batch.features(r, 1) = records[b].multiple_questions ? 1.0 : 0.0;
        batch.sample_ids[b] = sample_ids.empty() ? b : sample_ids[b];
    }
    return batch;
}

Matrix Classifier::forward(const ModelBatch& batch, Mode mode, std::uint64_t dropout_seed, Cache* cache) const {
    const int rows = batch.tokens.batch_size();
    if (batch.features.rows() != rows || batch.features.cols() != 2)
        throw TrainingError("feature matrix must be B x 2");
    for (Eigen::Index i = 0; i < batch.features.size(); ++i) {
        const double v = batch.features.data()[i];
        if (v != 0.0 && v != 1.0) throw TrainingError("boolean features must be 0 or 1");
    }
    const int h = encoder_.hidden();
    Matrix pooled(rows, h);
    if (cache) cache->sequences.resize(static_cast<std::size_t>(rows));
    for (int b = 0; b < rows; ++b) {
        int n = prefix_length(batch.tokens.mask, b);
        if (n == 0) throw TrainingError("cannot encode an empty sequence");
        if (n > cfg_.max_sequence_length) {
            truncated_.fetch_add(1);
            n = cfg_.max_sequence_length;
        }
        std::vector<int> ids(static_cast<std::size_t>(n));
        for (int t = 0; t < n; ++t) ids[static_cast<std::size_t>(t)] = batch.tokens.ids(b, t);
        const Matrix states =
            encoder_.encode_sequence(ids, cache ? &cache->sequences[static_cast<std::size_t>(b)] : nullptr);
        pooled.row(b) = pool(states);
    }

    Matrix fused = pooled;
    if (cfg_.use_features) {
        const Matrix pre = affine(batch.features, feat_w_, feat_b_);
        Matrix mask = Matrix::Ones(rows, cfg_.feature_width);
        if (mode == Mode::Train && cfg_.dropout > 0.0) {
            const double keep = 1.0 - cfg_.dropout;
            for (int b = 0; b < rows; ++b) {
                const std::size_t id = batch.sample_ids.empty() ? static_cast<std::size_t>(b)
                                                                : batch.sample_ids[static_cast<std::size_t>(b)];
                Rng rng(child_seed(dropout_seed, id));
                for (int j = 0; j < cfg_.feature_width; ++j) mask(b, j) = rng.bernoulli(keep) ? 1.0 / keep : 0.0;
            }
        }
        const Matrix projected = pre.cwiseMax(0.0).cwiseProduct(mask);
        fused.resize(rows, h + cfg_.feature_width);
        fused << pooled, projected;
        if (cache) {
            cache->feat_pre = pre;
            cache->feat_mask = mask;
        }
    }
    if (cache) {
        cache->pooled = pooled;
        cache->features = batch.features;
        cache->fused = fused;
    }
    return affine(fused, cls_w_, cls_b_);
}

void Classifier::backward(const Cache& cache, const Matrix& grad_logits) {
    affine_backward(cache.fused, grad_logits, cls_w_, cls_b_);
    const Matrix dfused = grad_logits * cls_w_.value.transpose();
    const int h = encoder_.hidden();
    if (cfg_.use_features) {
        const Matrix dproj = dfused.rightCols(cfg_.feature_width);
        const Matrix dpre =
            dproj.cwiseProduct(cache.feat_mask).array() * (cache.feat_pre.array() > 0.0).cast<double>();
        affine_backward(cache.features, dpre, feat_w_, feat_b_);
    }
    for (std::size_t b = 0; b < cache.sequences.size(); ++b) {
        const auto& seq = cache.sequences[b];
        Matrix grad_hidden = Matrix::Zero(static_cast<Eigen::Index>(seq.ids.size()), h);
        grad_hidden.row(0) = dfused.row(static_cast<Eigen::Index>(b)).leftCols(h);
        encoder_.backward(seq, grad_hidden);
    }
}

int argmax_label(const RowVector& logits) {
    int best = 0;
    for (int j = 1; j < logits.size(); ++j) {
        if (logits(j) > logits(best)) best = j;
    }
    return best;
}

std::vector<int> Classifier::predict(const ModelBatch& batch) const {
    const Matrix logits = forward(batch, Mode::Eval);
    std::vector<int> out(static_cast<std::size_t>(logits.rows()));
    for (Eigen::Index r = 0; r < logits.rows(); ++r) out[static_cast<std::size_t>(r)] = argmax_label(logits.row(r));
    return out;
}

std::vector<int> Classifier::predict(const Dataset& d, std::size_t chunk) const {
    std::vector<int> out;
    out.reserve(d.size());
    const std::span<const QAPair> all(d.records);
    for (std::size_t i = 0; i < all.size(); i += chunk) {
        const auto part = predict(make_batch(all.subspan(i, std::min(chunk, all.size() - i))));
        out.insert(out.end(), part.begin(), part.end());
    }
    return out;
}

std::vector<double> Classifier::confidence(const Dataset& d, std::size_t chunk) const {
    std::vector<double> out;
    out.reserve(d.size());
    const std::span<const QAPair> all(d.records);
    for (std::size_t i = 0; i < all.size(); i += chunk) {
        Matrix logits = forward(make_batch(all.subspan(i, std::min(chunk, all.size() - i))), Mode::Eval);
        softmax_rows(logits);
        for (Eigen::Index r = 0; r < logits.rows(); ++r) out.push_back(logits.row(r).maxCoeff());
    }
    return out;
}

std::vector<Param*> Classifier::parameters() {
    auto out = encoder_.parameters();
    if (cfg_.use_features) {
        out.push_back(&feat_w_);
        out.push_back(&feat_b_);
    }
    out.push_back(&cls_w_);
    out.push_back(&cls_b_);
    return out;
}

std::vector<const Param*> Classifier::parameters() const {
    auto mut = const_cast<Classifier*>(this)->parameters();
    return {mut.begin(), mut.end()};
}

void Classifier::zero_grad() {
    for (Param* p : parameters()) p->grad.setZero();
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {

std::string task_name(Task t) { return t == Task::Clarity ? "clarity" : "evasion"; }

}  // namespace

void save_checkpoint(const Classifier& model, const std::filesystem::path& dir,
                     const std::vector<std::pair<std::string, std::string>>& extra) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    const auto& cfg = model.config();
    const auto& spec = model.encoder().spec();
    {
        std::ofstream m(dir / "manifest.txt", std::ios::trunc);
        if (!m) throw TrainingError("cannot write checkpoint manifest in " + dir.string());
        m << "format_version=1\n"
          << "encoder_identifier=" << cfg.encoder_identifier << '\n'
          << "encoder.vocab_size=" << spec.vocab_size << '\n'
          << "encoder.hidden=" << spec.hidden << '\n'
          << "encoder.layers=" << spec.layers << '\n'
          << "encoder.ffn=" << spec.ffn << '\n'
          << "max_sequence_length=" << cfg.max_sequence_length << '\n'
          << "num_labels=" << cfg.num_labels << '\n'
          << "feature_width=" << cfg.feature_width << '\n'
          << "dropout=" << text::format_exact(cfg.dropout) << '\n'
          << "pooling=first_token\n"
          << "use_features=" << (cfg.use_features ? 1 : 0) << '\n'
          << "task=" << task_name(cfg.task) << '\n'
          << "init_seed=" << cfg.init_seed << '\n';
        for (const auto& [k, v] : extra) m << k << '=' << v << '\n';
    }
    std::ofstream w(dir / "weights.txt", std::ios::trunc);
    if (!w) throw TrainingError("cannot write checkpoint weights in " + dir.string());
    for (const Param* p : model.parameters()) {
        w << p->name << ' ' << p->value.rows() << ' ' << p->value.cols() << '\n';
        for (Eigen::Index i = 0; i < p->value.size(); ++i) {
            if (i) w << ' ';
            w << text::format_exact(p->value.data()[i]);
        }
        w << '\n';
    }
    if (!w) throw TrainingError("failed writing checkpoint weights");
}

Classifier load_checkpoint(const std::filesystem::path& dir) {
    std::ifstream m(dir / "manifest.txt");
    if (!m) throw TrainingError("no checkpoint manifest in " + dir.string());
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(m, line)) {
        const auto eq = line.find('=');
        if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    auto get = [&](const std::string& k) -> const std::string& {
        const auto it = kv.find(k);
        if (it == kv.end()) throw TrainingError("checkpoint manifest lacks '" + k + "'");
        return it->second;
    };
    ModelConfig cfg;
    try {
        cfg.encoder_identifier = get("encoder_identifier");
        cfg.max_sequence_length = std::stoi(get("max_sequence_length"));
        cfg.num_labels = std::stoi(get("num_labels"));
        cfg.feature_width = std::stoi(get("feature_width"));
        cfg.dropout = std::stod(get("dropout"));
        cfg.use_features = get("use_features") == "1";
        cfg.task = get("task") == "evasion" ? Task::Evasion : Task::Clarity;
        cfg.init_seed = std::stoull(get("init_seed"));
    } catch (const std::invalid_argument&) {
        throw TrainingError("malformed checkpoint manifest in " + dir.string());
    }
    if (get("pooling") != "first_token") throw TrainingError("unsupported pooling '" + get("pooling") + "'");
    Classifier model(cfg);
    const auto& spec = model.encoder().spec();
    if (std::stoi(get("encoder.hidden")) != spec.hidden || std::stoi(get("encoder.layers")) != spec.layers ||
        std::stoi(get("encoder.vocab_size")) != spec.vocab_size || std::stoi(get("encoder.ffn")) != spec.ffn)
        throw TrainingError("checkpoint encoder shape does not match registry entry '" + cfg.encoder_identifier + "'");

    std::map<std::string, Param*> by_name;
    for (Param* p : model.parameters()) by_name[p->name] = p;
    std::ifstream w(dir / "weights.txt");
    if (!w) throw TrainingError("no checkpoint weights in " + dir.string());
    std::size_t loaded = 0;
    std::string name;
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
    while (w >> name >> rows >> cols) {
        const auto it = by_name.find(name);
        if (it == by_name.end()) throw TrainingError("unexpected tensor '" + name + "' in checkpoint");
        Param& p = *it->second;
        if (p.value.rows() != rows || p.value.cols() != cols)
            throw TrainingError("shape mismatch for tensor '" + name + "'");
        for (Eigen::Index i = 0; i < p.value.size(); ++i) {
            std::string tok;
            if (!(w >> tok)) throw TrainingError("truncated tensor '" + name + "'");
            p.value.data()[i] = std::stod(tok);
        }
        ++loaded;
    }
    if (loaded != by_name.size()) throw TrainingError("checkpoint is missing tensors");
    return model;
}

}  // namespace clarity
