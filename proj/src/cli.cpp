#include "clarity/cli.hpp"

#include <openssl/evp.h>

#include <CLI11.hpp>
#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <optional>
#include <sstream>

#include "clarity/augment.hpp"
#include "clarity/baselines.hpp"
#include "clarity/data.hpp"
#include "clarity/error.hpp"
#include "clarity/eval.hpp"
#include "clarity/generator.hpp"
#include "clarity/log.hpp"
#include "clarity/model.hpp"
#include "clarity/text.hpp"
#include "clarity/train.hpp"

namespace clarity::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

Config Config::load(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open config file " + path.string());
    Config cfg;
    std::string line;
    int row = 0;
    while (std::getline(in, line)) {
        ++row;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        if (text::trim(line).empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw UsageError(path.string() + ":" + std::to_string(row) + ": expected key=value");
        const std::string key = text::trim(line.substr(0, eq));
        if (key.empty()) throw UsageError(path.string() + ":" + std::to_string(row) + ": empty key");
        cfg.set(key, text::trim(line.substr(eq + 1)), "file");
    }
    return cfg;
}

void Config::set(const std::string& key, const std::string& value, const std::string& origin) {
    values_[key] = {value, origin};
}

std::string Config::get(const std::string& key, const std::string& fallback) const {
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second.first;
}

double Config::get_double(const std::string& key, double fallback) const {
    if (!has(key)) return fallback;
    const std::string v = get(key, "");
    std::size_t used = 0;
    double d = 0.0;
    try {
        d = std::stod(v, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (v.empty() || used != v.size()) throw UsageError("config key '" + key + "': '" + v + "' is not a number");
    return d;
}

long Config::get_int(const std::string& key, long fallback) const {
    if (!has(key)) return fallback;
    const std::string v = get(key, "");
    std::size_t used = 0;
    long n = 0;
    try {
        n = std::stol(v, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (v.empty() || used != v.size()) throw UsageError("config key '" + key + "': '" + v + "' is not an integer");
    return n;
}

bool Config::get_bool(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const std::string v = text::to_lower(get(key, ""));
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw UsageError("config key '" + key + "': '" + v + "' is not a boolean");
}

std::map<std::string, std::string> Config::values() const {
    std::map<std::string, std::string> out;
    for (const auto& [k, v] : values_) out[k] = v.first;
    return out;
}

std::string sha256_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read " + path.string());
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
    char buf[1 << 15];
    while (in) {
        in.read(buf, sizeof buf);
        if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
    }
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx, digest, &len);
    EVP_MD_CTX_free(ctx);
    std::ostringstream hex;
    for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
    return hex.str();
}

bool is_held_out_path(const fs::path& path, const Config& cfg) {
    const std::string stem = text::to_lower(path.filename().string());
    if (stem.rfind("test", 0) == 0 || stem.rfind("eval", 0) == 0) return true;
    std::error_code ec;
    const fs::path canon = fs::weakly_canonical(path, ec);
    for (const auto& listed : text::split(cfg.get("heldout", ""), ',')) {
        const std::string p = text::trim(listed);
        if (p.empty()) continue;
        std::error_code ec2;
        if (fs::weakly_canonical(p, ec2) == canon) return true;
    }
    return false;
}

// ---------------------------------------------------------------------------
// Run context
// ---------------------------------------------------------------------------

namespace {

std::string utc_now() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream s;
    s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return s.str();
}

struct Flags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string train, dev, test, out, model_id, mode, kind;
    std::string model, gold, pred, matrix, format;
    std::vector<std::string> overrides;
    bool verbose = false;
};

class Run {
public:
    Run(std::string command, std::vector<std::string> args) : command_(std::move(command)), args_(std::move(args)) {
        started_ = utc_now();
    }

    Config cfg;
    ordered_json results = ordered_json::object();

    /// Value of `key`, recording the default when neither file nor flag set it.
    std::string str(const std::string& key, const std::string& def) {
        if (!cfg.has(key)) cfg.set(key, def, "default");
        return cfg.get(key, def);
    }
    double real(const std::string& key, double def) {
        if (!cfg.has(key)) cfg.set(key, text::format_exact(def), "default");
        return cfg.get_double(key, def);
    }
    long integer(const std::string& key, long def) {
        if (!cfg.has(key)) cfg.set(key, std::to_string(def), "default");
        return cfg.get_int(key, def);
    }
    bool boolean(const std::string& key, bool def) {
        if (!cfg.has(key)) cfg.set(key, def ? "true" : "false", "default");
        return cfg.get_bool(key, def);
    }
    std::uint64_t seed() { return static_cast<std::uint64_t>(integer("seed", 42)); }

    void input(const fs::path& p) {
        if (!fs::exists(p)) throw DataError("input file not found: " + p.string());
        inputs_.push_back({{"path", p.string()}, {"sha256", sha256_file(p)}, {"bytes", fs::file_size(p)}});
    }
    void output(const fs::path& p) {
        outputs_.push_back({{"path", p.string()}, {"sha256", fs::is_regular_file(p) ? sha256_file(p) : ""}});
    }

    void set_out_dir(const fs::path& dir) { out_dir_ = dir; }
    const std::optional<fs::path>& out_dir() const { return out_dir_; }

    void write_manifest(const std::string& status, const std::string& error) {
        if (!out_dir_) return;
        fs::create_directories(*out_dir_);
        ordered_json m;
        m["command"] = command_;
        m["arguments"] = args_;
        m["status"] = status;
        if (!error.empty()) m["error"] = error;
        m["seed"] = cfg.has("seed") ? cfg.get("seed", "") : "";
        ordered_json c = ordered_json::object();
        for (const auto& [k, v] : cfg.entries()) c[k] = {{"value", v.first}, {"origin", v.second}};
        m["config"] = c;
        m["inputs"] = inputs_;
        m["outputs"] = outputs_;
        m["results"] = results;
        m["started_at"] = started_;
        m["finished_at"] = utc_now();
        std::ofstream(*out_dir_ / "manifest.json") << m.dump(2) << '\n';
    }

private:
    std::string command_;
    std::vector<std::string> args_;
    std::string started_;
    ordered_json inputs_ = ordered_json::array();
    ordered_json outputs_ = ordered_json::array();
    std::optional<fs::path> out_dir_;
};

Task task_of(Run& r) {
    const std::string t = text::to_lower(r.str("task", "clarity"));
    if (t == "clarity") return Task::Clarity;
    if (t == "evasion") return Task::Evasion;
    throw UsageError("task must be 'clarity' or 'evasion', got '" + t + "'");
}

std::vector<std::string> display_names(Task task) {
    if (task == Task::Evasion) return LabelTable::builtin().names(task);
    std::vector<std::string> out;
    for (auto c : kAllClarity) out.push_back(short_name(c));
    return out;
}

fs::path require_out(Run& r, const Flags& f) {
    if (f.out.empty()) throw UsageError("--out is required");
    r.set_out_dir(f.out);
    fs::create_directories(f.out);
    return f.out;
}

Dataset load_input(Run& r, const std::string& path, const char* flag, bool held_out = false) {
    if (path.empty()) throw UsageError(std::string(flag) + " is required");
    r.input(path);
    Dataset d = load_dataset(path, Schema::from_config(r.cfg.values()));
    d.held_out = held_out;
    return d;
}

/// Training-side commands never touch evaluation data.
void guard_training_inputs(Run& r, const Flags& f, std::initializer_list<std::string> paths) {
    if (!f.test.empty()) throw UsageError("this command does not read test data; drop --test");
    for (const auto& p : paths)
        if (!p.empty() && is_held_out_path(p, r.cfg))
            throw DataError("refusing to read held-out file '" + p + "' in a training command");
}

ModelConfig model_config(Run& r, const Flags& f) {
    ModelConfig mc;
    if (!f.model_id.empty()) r.cfg.set("model_id", f.model_id, "flag");
    mc.encoder_identifier = r.str("model_id", mc.encoder_identifier);
    mc.max_sequence_length = static_cast<int>(r.integer("max_sequence_length", mc.max_sequence_length));
    mc.feature_width = static_cast<int>(r.integer("feature_width", mc.feature_width));
    mc.dropout = r.real("dropout", mc.dropout);
    mc.use_features = r.boolean("use_features", mc.use_features);
    mc.task = task_of(r);
    mc.num_labels = label_count(mc.task);
    mc.init_seed = r.seed();
    return mc;
}

TrainingConfig training_config(Run& r) {
    TrainingConfig t;
    t.base_lr = r.real("base_lr", t.base_lr);
    t.llrd_alpha = r.real("llrd_alpha", t.llrd_alpha);
    t.gamma = r.real("gamma", t.gamma);
    t.micro_batch = static_cast<int>(r.integer("micro_batch", t.micro_batch));
    t.accumulation_steps = static_cast<int>(r.integer("accumulation_steps", t.accumulation_steps));
    t.warmup_fraction = r.real("warmup_fraction", t.warmup_fraction);
    t.max_epochs = static_cast<int>(r.integer("max_epochs", t.max_epochs));
    t.patience = static_cast<int>(r.integer("patience", t.patience));
    t.weight_decay = r.real("weight_decay", t.weight_decay);
    t.clip_norm = r.real("clip_norm", t.clip_norm);
    t.class_weighting = r.boolean("class_weighting", t.class_weighting);
    t.seed = r.seed();
    validate(t);
    return t;
}

ordered_json counts_json(const Dataset& d) {
    ordered_json j = ordered_json::object();
    for (const auto& [c, share] : class_distribution(d)) j[LabelTable::builtin().name(c)] = share.count;
    return j;
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

void cmd_prepare(Run& r, const Flags& f, std::ostream& out) {
    const fs::path dir = require_out(r, f);
    const double fraction = r.real("dev_fraction", 0.2);
    const Task task = task_of(r);
    Dataset all = load_input(r, f.train, "--train");
    auto [train, dev] = stratified_split(all, fraction, r.seed(), task, true);
    save_dataset(train, dir / "train.tsv");
    save_dataset(dev, dir / "dev.tsv");
    r.output(dir / "train.tsv");
    r.output(dir / "dev.tsv");
    if (!f.test.empty()) {
        Dataset test = load_input(r, f.test, "--test", true);
        save_dataset(test, dir / "test.tsv");
        r.output(dir / "test.tsv");
        r.results["test"] = test.size();
    }
    r.results["train"] = train.size();
    r.results["dev"] = dev.size();
    r.results["train_distribution"] = counts_json(train);
    r.results["dev_distribution"] = counts_json(dev);
    out << "train: " << train.size() << " records, dev: " << dev.size() << " records\n";
}

void cmd_augment(Run& r, const Flags& f, std::ostream& out) {
    guard_training_inputs(r, f, {f.train});
    const fs::path dir = require_out(r, f);
    if (!f.mode.empty()) r.cfg.set("mode", f.mode, "flag");
    if (!f.kind.empty()) r.cfg.set("kind", f.kind, "flag");
    const std::string mode = r.str("mode", "full-balance");
    const std::string kind = r.str("kind", "casa");
    Dataset train = load_input(r, f.train, "--train");
    require_augmentable(train);

    BalanceMode bm;
    std::map<ClarityLabel, std::size_t> targets;
    if (mode == "full-balance") {
        bm = BalanceMode::FullBalance;
    } else if (mode == "partial") {
        bm = BalanceMode::Partial;
        targets[ClarityLabel::ClearReply] = static_cast<std::size_t>(r.integer("partial.clear_reply", 1498));
        targets[ClarityLabel::ClearNonReply] = static_cast<std::size_t>(r.integer("partial.clear_non_reply", 996));
        if (r.cfg.has("partial.ambivalent"))
            targets[ClarityLabel::Ambivalent] = static_cast<std::size_t>(r.cfg.get_int("partial.ambivalent", 0));
    } else {
        throw UsageError("--mode must be 'full-balance' or 'partial', got '" + mode + "'");
    }
    const auto plan_counts = balance_plan(class_distribution(train), bm, targets);
    const std::uint64_t seed = r.seed();

    std::vector<QAPair> synthetic;
    ordered_json per_class = ordered_json::object();
    if (kind == "casa") {
        const auto min_support = static_cast<std::size_t>(r.integer("frames.min_support", 2));
        const std::string contexts_path = r.str("contexts", "");
        std::vector<std::string> contexts;
        if (contexts_path.empty()) {
            contexts = builtin_contexts();
        } else {
            r.input(contexts_path);
            contexts = load_contexts(contexts_path);
        }
        std::unique_ptr<GeneratorClient> client;
        const std::string generator = r.str("generator", "offline");
        if (generator == "http") {
            auto opts = HttpGeneratorClient::options_from_env(r.str("generator.model", "default"));
            if (!opts) throw UsageError("generator=http needs GENERATOR_ENDPOINT in the environment");
            client = std::make_unique<HttpGeneratorClient>(*opts);
        } else if (generator != "offline") {
            throw UsageError("generator must be 'offline' or 'http'");
        }
        for (const auto& [label, count] : plan_counts) {
            per_class[LabelTable::builtin().name(label)] = count;
            if (count == 0) continue;
            auto frames = extract_frames(train, label, min_support);
            if (frames.empty()) frames = whole_answer_frames(train, label);
            CasaOptions opts;
            opts.seed = child_seed(seed, static_cast<std::uint64_t>(code(label)));
            opts.id_prefix = "casa-" + std::to_string(code(label));
            opts.concurrency = static_cast<int>(r.integer("generator.concurrency", 1));
            auto recs = casa_generate(frames, contexts, count, client.get(), opts);
            synthetic.insert(synthetic.end(), std::make_move_iterator(recs.begin()),
                             std::make_move_iterator(recs.end()));
        }
    } else if (kind == "eda") {
        AugmentationPlan plan;
        plan.op_probability = r.real("op_probability", plan.op_probability);
        plan.seed = seed;
        for (const auto& [label, count] : plan_counts) {
            per_class[LabelTable::builtin().name(label)] = count;
            if (count == 0) continue;
            AugmentationPlan p = plan;
            p.seed = child_seed(seed, static_cast<std::uint64_t>(code(label)));
            auto recs = eda_generate(train, label, count, p);
            synthetic.insert(synthetic.end(), std::make_move_iterator(recs.begin()),
                             std::make_move_iterator(recs.end()));
        }
    } else {
        throw UsageError("--kind must be 'casa' or 'eda' for augment, got '" + kind + "'");
    }

    const LintReport lint = lint_synthetic(synthetic, train);
    Dataset synth{"synthetic", synthetic, false};
    Dataset merged = train;
    merged.name = train.name + "-augmented";
    merged.records.insert(merged.records.end(), synthetic.begin(), synthetic.end());
    save_dataset(synth, dir / "synthetic.tsv");
    save_dataset(merged, dir / "augmented.tsv");
    r.output(dir / "synthetic.tsv");
    r.output(dir / "augmented.tsv");

    r.results["generated"] = synthetic.size();
    r.results["generated_per_class"] = per_class;
    r.results["total_after"] = merged.size();
    r.results["distribution_after"] = counts_json(merged);
    r.results["lint"] = {{"clean", lint.clean},
                         {"too_short", lint.too_short},
                         {"too_long", lint.too_long},
                         {"hierarchy", lint.hierarchy},
                         {"duplicates", lint.duplicates}};
    out << "generated " << synthetic.size() << " records; " << merged.size() << " total\n";
}

void cmd_train(Run& r, const Flags& f, std::ostream& out) {
    guard_training_inputs(r, f, {f.train, f.dev});
    const fs::path dir = require_out(r, f);
    const ModelConfig mc = model_config(r, f);
    const TrainingConfig tc = training_config(r);
    const Dataset train = load_input(r, f.train, "--train");
    const Dataset dev = load_input(r, f.dev, "--dev");
    auto result = train_loop(Classifier(mc), train, dev, tc, [&](const EpochRecord& e) {
        out << "epoch " << e.epoch << "  loss " << text::format_fixed(e.train_loss, 4) << "  dev macro F1 "
            << text::format_fixed(e.dev_macro_f1, 4) << '\n';
    });
    const auto& h = result.history;
    save_checkpoint(result.model, dir / "checkpoint",
                    {{"best_epoch", std::to_string(h.best_epoch)}, {"seed", std::to_string(tc.seed)}});
    write_history(h, dir / "history.tsv");
    r.output(dir / "checkpoint" / "manifest.txt");
    r.output(dir / "checkpoint" / "weights.txt");
    r.output(dir / "history.tsv");
    r.results["best_epoch"] = h.best_epoch;
    r.results["best_dev_macro_f1"] = h.epochs[static_cast<std::size_t>(h.best_epoch - 1)].dev_macro_f1;
    r.results["epochs_run"] = h.epochs.size();
    r.results["stopped_early"] = h.stopped_early;
    out << "best epoch " << h.best_epoch << '\n';
}

fs::path checkpoint_dir(const std::string& model) {
    if (model.empty()) throw UsageError("--model is required");
    fs::path p = model;
    if (!fs::exists(p / "manifest.txt") && fs::exists(p / "checkpoint" / "manifest.txt")) p /= "checkpoint";
    return p;
}

void cmd_predict(Run& r, const Flags& f, std::ostream& out) {
    const fs::path dir = require_out(r, f);
    const fs::path ckpt = checkpoint_dir(f.model);
    r.input(ckpt / "manifest.txt");
    r.input(ckpt / "weights.txt");
    const Classifier model = load_checkpoint(ckpt);
    const std::string input = !f.test.empty() ? f.test : f.dev;
    const Dataset d = load_input(r, input, "--test", true);
    const auto labels = model.predict(d);
    std::vector<Prediction> preds;
    for (std::size_t i = 0; i < d.size(); ++i) preds.push_back({d.records[i].id, labels[i]});
    write_predictions(preds, model.config().task, dir / "predictions.tsv");
    r.output(dir / "predictions.tsv");
    r.results["predictions"] = preds.size();
    out << "wrote " << preds.size() << " predictions\n";
}

ReportFormat report_format(Run& r, const Flags& f) {
    if (!f.format.empty()) r.cfg.set("format", f.format, "flag");
    const std::string fmt = r.str("format", "plain");
    if (fmt == "plain") return ReportFormat::PlainText;
    if (fmt == "markdown") return ReportFormat::Markdown;
    throw UsageError("--format must be 'plain' or 'markdown'");
}

void write_reports(Run& r, const ConfusionMatrix& m, const fs::path& dir) {
    std::ofstream(dir / "report.txt") << render_report(m, per_class_prf(m), ReportFormat::PlainText);
    std::ofstream(dir / "report.md") << render_report(m, per_class_prf(m), ReportFormat::Markdown);
    std::ofstream(dir / "metrics.txt") << metrics_text(m);
    save_matrix(m, dir / "matrix.tsv");
    for (const char* name : {"report.txt", "report.md", "metrics.txt", "matrix.tsv"}) r.output(dir / name);
}

void cmd_evaluate(Run& r, const Flags& f, std::ostream& out) {
    const Task task = task_of(r);
    const ReportFormat fmt = report_format(r, f);
    if (f.gold.empty()) throw UsageError("--gold is required");
    if (f.pred.empty()) throw UsageError("--pred is required");
    const Dataset gold = load_input(r, f.gold, "--gold", true);
    r.input(f.pred);
    const auto preds = read_predictions(f.pred, task);
    const auto [truths, labels] = align_predictions(gold, preds, task);
    const ConfusionMatrix m = confusion_matrix(truths, labels, label_count(task), display_names(task));
    out << render_report(m, per_class_prf(m), fmt);
    if (!f.out.empty()) {
        const fs::path dir = require_out(r, f);
        write_reports(r, m, dir);
        std::vector<ScoredPrediction> scored;
        for (std::size_t i = 0; i < gold.size(); ++i) scored.push_back({gold.records[i], labels[i], std::nullopt});
        std::ofstream errs(dir / "errors.tsv");
        errs << "true\tpredicted\tid\n";
        for (const auto& [key, bucket] : error_buckets(scored, task))
            for (const auto& sp : bucket)
                errs << m.label_names()[key.first] << '\t' << m.label_names()[key.second] << '\t'
                     << text::escape_field(sp.pair.id) << '\n';
        errs.close();
        r.output(dir / "errors.tsv");
    }
    r.results["macro_f1"] = macro_f1(m);
    r.results["accuracy"] = accuracy(m);
    r.results["total"] = m.total();
}

void cmd_report(Run& r, const Flags& f, std::ostream& out) {
    const ReportFormat fmt = report_format(r, f);
    if (f.matrix.empty()) throw UsageError("--matrix is required");
    r.input(f.matrix);
    const ConfusionMatrix m = load_matrix(f.matrix);
    const std::string text = render_report(m, per_class_prf(m), fmt);
    out << text;
    if (!f.out.empty()) {
        const fs::path dir = require_out(r, f);
        const fs::path file = dir / (fmt == ReportFormat::Markdown ? "report.md" : "report.txt");
        std::ofstream(file) << text;
        r.output(file);
    }
    r.results["macro_f1"] = macro_f1(m);
}

std::vector<std::string> corpus(const Dataset& d) {
    std::vector<std::string> out;
    for (const auto& p : d.records) out.push_back(format_input(p));
    return out;
}

std::vector<int> labels_of(const Dataset& d, Task task) {
    std::vector<int> out;
    for (const auto& p : d.records) {
        const auto l = label_of(p, task);
        if (!l) throw DataError("record '" + p.id + "' is unlabeled");
        out.push_back(*l);
    }
    return out;
}

void cmd_baseline(Run& r, const Flags& f, std::ostream& out) {
    const fs::path dir = require_out(r, f);
    if (!f.kind.empty()) r.cfg.set("kind", f.kind, "flag");
    const std::string kind = r.str("kind", "majority");
    const Task task = task_of(r);
    const int k = label_count(task);
    const Dataset train = load_input(r, f.train, "--train");
    const Dataset test = load_input(r, f.test, "--test", true);

    std::vector<int> preds;
    std::string name;
    if (kind == "majority") {
        preds = majority_baseline(train, test, task);
        name = "Majority class (" + LabelTable::builtin().name(task, preds.empty() ? 0 : preds.front()) + ")";
    } else if (kind == "logreg" || kind == "svm" || kind == "rf") {
        TfidfConfig tc;
        tc.max_features = static_cast<int>(r.integer("tfidf.max_features", tc.max_features));
        tc.min_df = static_cast<int>(r.integer("tfidf.min_df", tc.min_df));
        tc.max_df = r.real("tfidf.max_df", tc.max_df);
        tc.sublinear_tf = r.boolean("tfidf.sublinear_tf", kind == "svm");
        TfidfVectorizer vec(tc);
        const SparseMatrix xtr = vec.fit_transform(corpus(train));
        const SparseMatrix xte = vec.transform(corpus(test));
        ClassicalConfig cc;
        cc.seed = r.seed();
        const ClassicalKind ck = kind == "logreg" ? ClassicalKind::LogReg
                                 : kind == "svm"  ? ClassicalKind::Svm
                                                  : ClassicalKind::RandomForest;
        auto fit = train_classical(ck, xtr, labels_of(train, task), k, cc);
        preds = fit.model->predict(xte);
        if (!fit.svm_grid.empty()) {
            ordered_json grid = ordered_json::array();
            for (const auto& g : fit.svm_grid)
                grid.push_back({{"C", g.c},
                                {"kernel", g.kernel == SvmKernel::Linear ? "linear" : "rbf"},
                                {"cv_macro_f1", g.cv_macro_f1}});
            r.results["svm_grid"] = grid;
        }
        r.results["model"] = fit.model->describe();
        name = kind == "logreg" ? "TF-IDF + Logistic Regression" : kind == "rf" ? "Random Forest" : "SVM";
    } else if (kind == "distil" || kind == "base") {
        if (task != Task::Clarity) throw UsageError("transformer baselines support the clarity task only");
        guard_training_inputs(r, Flags{}, {f.train, f.dev});
        auto tb = transformer_baseline_config(kind == "distil" ? TransformerKind::Distil : TransformerKind::Base);
        if (!f.model_id.empty()) tb.encoder_identifier = f.model_id;
        tb.training.seed = r.seed();
        tb.training.base_lr = r.real("base_lr", tb.training.base_lr);
        tb.training.max_epochs = static_cast<int>(r.integer("max_epochs", tb.training.max_epochs));
        const Dataset dev = load_input(r, f.dev, "--dev");
        auto result = simple_transformer_baseline(tb, train, dev);
        preds = result.model.predict(test);
        name = kind == "distil" ? "DistilBERT" : "BERT-base";
    } else {
        throw UsageError("unknown baseline kind '" + kind + "' (majority, logreg, svm, rf, distil, base)");
    }

    std::vector<Prediction> out_preds;
    for (std::size_t i = 0; i < test.size(); ++i) out_preds.push_back({test.records[i].id, preds[i]});
    write_predictions(out_preds, task, dir / "predictions.tsv");
    r.output(dir / "predictions.tsv");
    const ConfusionMatrix m = confusion_matrix(labels_of(test, task), preds, k, display_names(task));
    write_reports(r, m, dir);
    const double score = macro_f1(m);
    std::ofstream(dir / "comparison.md") << render_comparison({{name, score}});
    r.output(dir / "comparison.md");
    r.results["baseline"] = name;
    r.results["macro_f1"] = score;
    out << name << ": macro F1 " << text::format_fixed(score, 4) << '\n';
}

std::vector<double> number_list(const std::string& s, const std::string& key) {
    std::vector<double> out;
    for (const auto& part : text::split(s, ',')) {
        const std::string v = text::trim(part);
        if (v.empty()) continue;
        std::size_t used = 0;
        double d = 0.0;
        try {
            d = std::stod(v, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != v.size()) throw UsageError("config key '" + key + "': '" + v + "' is not a number");
        out.push_back(d);
    }
    return out;
}

void cmd_grid(Run& r, const Flags& f, std::ostream& out) {
    guard_training_inputs(r, f, {f.train, f.dev});
    const fs::path dir = require_out(r, f);
    const ModelConfig mc = model_config(r, f);
    const TrainingConfig tc = training_config(r);
    Grid grid;
    grid.base_lrs = number_list(r.str("grid.base_lrs", "2e-5,3e-5,5e-5"), "grid.base_lrs");
    grid.alphas = number_list(r.str("grid.alphas", "0.8,0.9,0.95"), "grid.alphas");
    const Dataset train = load_input(r, f.train, "--train");
    const Dataset dev = load_input(r, f.dev, "--dev");
    const auto cells = grid_search(grid, mc, train, dev, tc);
    write_grid_table(cells, dir / "grid.tsv");
    r.output(dir / "grid.tsv");
    r.results["cells"] = cells.size();
    for (const auto& c : cells)
        out << "lr " << text::format_exact(c.base_lr) << "  alpha " << text::format_exact(c.llrd_alpha) << "  "
            << (c.dev_macro_f1 ? text::format_fixed(*c.dev_macro_f1, 4) : "failed: " + c.error) << '\n';
}

}  // namespace

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Clarity and evasion classification toolkit", "clarity"};
    app.require_subcommand(1);
    Flags f;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", f.config, "key=value config file");
        sub->add_option("--seed", f.seed, "random seed");
        sub->add_option("--out", f.out, "output directory");
        sub->add_option("--set", f.overrides, "extra key=value setting")->take_all();
        sub->add_flag("--verbose", f.verbose, "log progress to stderr");
    };
    std::map<std::string, CLI::App*> subs;
    auto add = [&](const std::string& name, const std::string& help) {
        CLI::App* s = app.add_subcommand(name, help);
        common(s);
        subs[name] = s;
        return s;
    };

    auto* prepare = add("prepare", "ingest a labeled file and split it into train/dev");
    prepare->add_option("--train", f.train, "labeled input file");
    prepare->add_option("--test", f.test, "held-out test file to normalize");

    auto* augment = add("augment", "generate synthetic minority-class records");
    augment->add_option("--train", f.train, "training file");
    augment->add_option("--test", f.test)->group("");
    augment->add_option("--mode", f.mode, "full-balance or partial");
    augment->add_option("--kind", f.kind, "casa or eda");

    auto* train = add("train", "fine-tune the classifier");
    train->add_option("--train", f.train, "training file");
    train->add_option("--dev", f.dev, "development file");
    train->add_option("--test", f.test)->group("");
    train->add_option("--model-id", f.model_id, "encoder identifier");

    auto* predict = add("predict", "label a file with a trained checkpoint");
    predict->add_option("--model", f.model, "checkpoint directory");
    predict->add_option("--test", f.test, "file to label");
    predict->add_option("--dev", f.dev, "file to label (alternative to --test)");

    auto* evaluate = add("evaluate", "score predictions against gold labels");
    evaluate->add_option("--gold", f.gold, "gold file");
    evaluate->add_option("--pred", f.pred, "prediction file");
    evaluate->add_option("--format", f.format, "plain or markdown");

    auto* baseline = add("baseline", "run a reference baseline end to end");
    baseline->add_option("--kind", f.kind, "majority, logreg, svm, rf, distil or base");
    baseline->add_option("--train", f.train, "training file");
    baseline->add_option("--dev", f.dev, "development file (transformer baselines)");
    baseline->add_option("--test", f.test, "evaluation file");
    baseline->add_option("--model-id", f.model_id, "encoder identifier (transformer baselines)");

    auto* report = add("report", "render a report from a stored confusion matrix");
    report->add_option("--matrix", f.matrix, "matrix file written by evaluate");
    report->add_option("--format", f.format, "plain or markdown");

    auto* grid = add("grid", "train over the learning-rate x decay grid");
    grid->add_option("--train", f.train, "training file");
    grid->add_option("--dev", f.dev, "development file");
    grid->add_option("--test", f.test)->group("");
    grid->add_option("--model-id", f.model_id, "encoder identifier");

    try {
        std::vector<std::string> rev(args.rbegin(), args.rend());
        app.parse(rev);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return kUsage;
    }

    std::string command;
    for (const auto& [name, s] : subs)
        if (s->parsed()) command = name;

    Run r(command, args);
    int code = kOk;
    std::string message;
    log::set_verbose(f.verbose);
    try {
        if (!f.config.empty()) r.cfg = Config::load(f.config);
        for (const auto& kv : f.overrides) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
            r.cfg.set(text::trim(kv.substr(0, eq)), text::trim(kv.substr(eq + 1)), "flag");
        }
        if (f.seed) r.cfg.set("seed", std::to_string(*f.seed), "flag");
        if (!f.out.empty()) r.set_out_dir(f.out);
        if (command == "prepare") cmd_prepare(r, f, out);
        else if (command == "augment") cmd_augment(r, f, out);
        else if (command == "train") cmd_train(r, f, out);
        else if (command == "predict") cmd_predict(r, f, out);
        else if (command == "evaluate") cmd_evaluate(r, f, out);
        else if (command == "baseline") cmd_baseline(r, f, out);
        else if (command == "report") cmd_report(r, f, out);
        else if (command == "grid") cmd_grid(r, f, out);
    } catch (const UsageError& e) {
        code = kUsage;
        message = e.what();
        err << "error: " << message << "\n\n" << subs[command]->help();
    } catch (const TrainingError& e) {
        code = kTrainingError;
        message = e.what();
        err << "training error: " << message << '\n';
    } catch (const std::exception& e) {
        code = kDataError;
        message = e.what();
        err << "data error: " << message << '\n';
    }
    try {
        r.write_manifest(code == kOk ? "ok" : "error", message);
    } catch (const std::exception& e) {
        err << "could not write manifest: " << e.what() << '\n';
        if (code == kOk) code = kDataError;
    }
    return code;
}

int main_entry(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run(args, std::cout, std::cerr);
}

}  // namespace clarity::cli
