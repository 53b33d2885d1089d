#include "clarity/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "clarity/error.hpp"
#include "clarity/features.hpp"
#include "clarity/log.hpp"
#include "clarity/rng.hpp"
#include "clarity/text.hpp"

namespace clarity {

namespace {

// Mirrors resources/labels.tsv.
constexpr const char* kBuiltinLabels =
    "clarity\t0\tClear Reply\tClearReply|Clear-Reply|Clear_Reply|Clear\n"
    "clarity\t1\tAmbivalent\tAmb|Ambivalent Reply\n"
    "clarity\t2\tClear Non-Reply\tClearNonReply|Clear Non Reply|Clear-Non-Reply|Clear_Non_Reply|Clear-N\n"
    "evasion\t0\tExplicit\t\n"
    "evasion\t1\tImplicit\t\n"
    "evasion\t2\tGeneral\t\n"
    "evasion\t3\tPartial/half-answer\tPartial|Partial half-answer|Half-answer\n"
    "evasion\t4\tDodging\t\n"
    "evasion\t5\tDeflection\t\n"
    "evasion\t6\tDeclining to answer\tDeclining|Declining-to-answer\n"
    "evasion\t7\tClaims ignorance\tClaimsIgnorance|Claims-ignorance\n"
    "evasion\t8\tClarification\t\n";

std::string lookup_key(std::string_view s) { return text::to_lower(text::normalize_space(s)); }

std::optional<bool> parse_bool(std::string_view raw) {
    const std::string s = text::to_lower(text::trim(raw));
    if (s == "1" || s == "true" || s == "yes" || s == "1.0") return true;
    if (s == "0" || s == "false" || s == "no" || s == "0.0") return false;
    return std::nullopt;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::string> lines_of(const std::string& content) {
    std::vector<std::string> lines = text::split(content, '\n');
    for (auto& l : lines) {
        if (!l.empty() && l.back() == '\r') l.pop_back();
    }
    if (!lines.empty() && lines.back().empty()) lines.pop_back();
    return lines;
}

std::ofstream open_for_write(const std::filesystem::path& path) {
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    return out;
}

}  // namespace

ClarityLabel clarity_from_code(int c) {
    if (c < 0 || c >= kClarityCount) throw DataError("clarity code out of range: " + std::to_string(c));
    return static_cast<ClarityLabel>(c);
}

EvasionLabel evasion_from_code(int c) {
    if (c < 0 || c >= kEvasionCount) throw DataError("evasion code out of range: " + std::to_string(c));
    return static_cast<EvasionLabel>(c);
}

// ---------------------------------------------------------------------------
// LabelTable
// ---------------------------------------------------------------------------

LabelTable LabelTable::parse(const std::string& content, const std::string& origin) {
    LabelTable t;
    std::size_t line_no = 0;
    auto fail = [&](const std::string& what) {
        throw DataError(origin + ":" + std::to_string(line_no) + ": " + what);
    };
    for (const auto& line : lines_of(content)) {
        ++line_no;
        if (text::trim(line).empty() || line.front() == '#') continue;
        const auto f = text::split(line, '\t');
        if (f.size() < 3) fail("expected kind, code and name");
        const bool is_clarity = f[0] == "clarity";
        if (!is_clarity && f[0] != "evasion") fail("unknown kind '" + f[0] + "'");
        int c = -1;
        try {
            c = std::stoi(f[1]);
        } catch (const std::exception&) {
            fail("bad code '" + f[1] + "'");
        }
        if (c < 0 || c >= (is_clarity ? kClarityCount : kEvasionCount)) fail("code out of range");
        auto& lookup = is_clarity ? t.clarity_lookup_ : t.evasion_lookup_;
        (is_clarity ? t.clarity_names_[c] : t.evasion_names_[c]) = f[2];
        lookup[lookup_key(f[2])] = c;
        if (f.size() > 3) {
            for (const auto& alias : text::split(f[3], '|')) {
                if (!text::trim(alias).empty()) lookup[lookup_key(alias)] = c;
            }
        }
    }
    for (const auto& n : t.clarity_names_)
        if (n.empty()) throw DataError(origin + ": incomplete clarity labels");
    for (const auto& n : t.evasion_names_)
        if (n.empty()) throw DataError(origin + ": incomplete evasion labels");
    return t;
}

const LabelTable& LabelTable::builtin() {
    static const LabelTable table = parse(kBuiltinLabels, "<builtin labels>");
    return table;
}

LabelTable LabelTable::load(const std::filesystem::path& path) { return parse(read_file(path), path.string()); }

std::optional<ClarityLabel> LabelTable::parse_clarity(std::string_view s) const {
    const auto it = clarity_lookup_.find(lookup_key(s));
    if (it == clarity_lookup_.end()) return std::nullopt;
    return static_cast<ClarityLabel>(it->second);
}

std::optional<EvasionLabel> LabelTable::parse_evasion(std::string_view s) const {
    const auto it = evasion_lookup_.find(lookup_key(s));
    if (it == evasion_lookup_.end()) return std::nullopt;
    return static_cast<EvasionLabel>(it->second);
}

std::optional<int> LabelTable::parse(Task task, std::string_view s) const {
    if (task == Task::Clarity) {
        if (auto c = parse_clarity(s)) return code(*c);
    } else {
        if (auto e = parse_evasion(s)) return code(*e);
    }
    return std::nullopt;
}

const std::string& LabelTable::name(Task task, int label_code) const {
    return task == Task::Clarity ? name(clarity_from_code(label_code)) : name(evasion_from_code(label_code));
}

std::vector<std::string> LabelTable::names(Task task) const {
    if (task == Task::Clarity) return {clarity_names_.begin(), clarity_names_.end()};
    return {evasion_names_.begin(), evasion_names_.end()};
}

std::string short_name(ClarityLabel c) {
    switch (c) {
        case ClarityLabel::ClearReply: return "Clear";
        case ClarityLabel::Ambivalent: return "Amb";
        case ClarityLabel::ClearNonReply: return "Clear-N";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// Records
// ---------------------------------------------------------------------------

std::string_view to_string(Source s) {
    switch (s) {
        case Source::Original: return "original";
        case Source::GeminiSynthetic: return "gemini_synthetic";
        case Source::ClaudeSynthetic: return "claude_synthetic";
    }
    return "original";
}

std::optional<Source> parse_source(std::string_view raw) {
    const std::string s = text::to_lower(text::trim(raw));
    if (s.empty() || s == "original") return Source::Original;
    if (s == "gemini_synthetic" || s == "gemini" || s == "casa") return Source::GeminiSynthetic;
    if (s == "claude_synthetic" || s == "claude" || s == "eda") return Source::ClaudeSynthetic;
    return std::nullopt;
}

double assign_sample_weights(Source s) noexcept {
    switch (s) {
        case Source::Original: return 1.0;
        case Source::GeminiSynthetic: return 0.7;
        case Source::ClaudeSynthetic: return 0.5;
    }
    return 1.0;
}

void validate(const QAPair& p) {
    if (text::trim(p.question).empty()) throw DataError("record '" + p.id + "': empty question");
    if (text::trim(p.answer).empty()) throw DataError("record '" + p.id + "': empty answer");
    if (p.clarity && p.evasion && *p.clarity != map_evasion_to_clarity(*p.evasion)) {
        const auto& t = LabelTable::builtin();
        throw DataError("record '" + p.id + "': evasion label '" + t.name(*p.evasion) + "' belongs to '" +
                        t.name(map_evasion_to_clarity(*p.evasion)) + "', not '" + t.name(*p.clarity) + "'");
    }
    if (!(p.sample_weight > 0.0 && p.sample_weight <= 1.0))
        throw DataError("record '" + p.id + "': sample weight outside (0, 1]");
}

std::optional<int> label_of(const QAPair& p, Task task) {
    if (task == Task::Clarity) {
        if (p.clarity) return code(*p.clarity);
        return std::nullopt;
    }
    if (p.evasion) return code(*p.evasion);
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// File I/O
// ---------------------------------------------------------------------------

Schema Schema::from_config(const std::map<std::string, std::string>& kv) {
    Schema s;
    auto take = [&](const char* key, std::string& field) {
        if (auto it = kv.find(std::string("schema.") + key); it != kv.end()) field = it->second;
    };
    take("id", s.id);
    take("question", s.question);
    take("answer", s.answer);
    take("clarity", s.clarity);
    take("evasion", s.evasion);
    take("affirmative", s.affirmative);
    take("multiple", s.multiple);
    take("source", s.source);
    take("weight", s.weight);
    if (auto it = kv.find("schema.delimiter"); it != kv.end()) {
        const std::string& d = it->second;
        if (d == "tab" || d == "\\t") {
            s.delimiter = '\t';
        } else if (d == "comma") {
            s.delimiter = ',';
        } else if (d.size() == 1) {
            s.delimiter = d[0];
        } else {
            throw DataError("schema.delimiter must be a single character, 'tab' or 'comma'");
        }
    }
    return s;
}

Schema canonical_schema() { return Schema{}; }

Dataset load_dataset(const std::filesystem::path& path, const Schema& schema, const LabelTable& labels) {
    Dataset d;
    d.name = path.stem().string();
    const std::string content = read_file(path);
    const auto lines = lines_of(content);
    if (text::trim(content).empty()) {
        log::warn(path.string() + ": empty file, dataset has no records");
        return d;
    }

    const auto header = text::split(lines.front(), schema.delimiter);
    std::map<std::string, std::size_t> col;
    for (std::size_t i = 0; i < header.size(); ++i) col[text::trim(header[i])] = i;
    auto column = [&](const std::string& name) -> std::optional<std::size_t> {
        if (name.empty()) return std::nullopt;
        const auto it = col.find(name);
        if (it == col.end()) return std::nullopt;
        return it->second;
    };
    const auto q_col = column(schema.question);
    const auto a_col = column(schema.answer);
    if (!q_col) throw DataError(path.string() + ": missing question column '" + schema.question + "'");
    if (!a_col) throw DataError(path.string() + ": missing answer column '" + schema.answer + "'");
    const auto id_col = column(schema.id);
    const auto c_col = column(schema.clarity);
    const auto e_col = column(schema.evasion);
    const auto aff_col = column(schema.affirmative);
    const auto mul_col = column(schema.multiple);
    const auto src_col = column(schema.source);
    const auto w_col = column(schema.weight);
    std::set<std::size_t> known;
    for (const auto& c : {q_col, a_col, id_col, c_col, e_col, aff_col, mul_col, src_col, w_col})
        if (c) known.insert(*c);

    std::size_t data_row = 0;
    for (std::size_t li = 1; li < lines.size(); ++li) {
        const std::size_t row_no = li + 1;  // 1-based file line
        if (text::trim(lines[li]).empty()) continue;
        const auto raw = text::split(lines[li], schema.delimiter);
        const std::string where = path.string() + ": row " + std::to_string(row_no);
        if (raw.size() != header.size())
            throw DataError(where + ": expected " + std::to_string(header.size()) + " fields, got " +
                            std::to_string(raw.size()));
        std::vector<std::string> f(raw.size());
        std::transform(raw.begin(), raw.end(), f.begin(), [](const std::string& s) { return text::unescape_field(s); });

        QAPair p;
        p.id = id_col && !text::trim(f[*id_col]).empty() ? text::trim(f[*id_col]) : std::to_string(data_row);
        p.question = f[*q_col];
        p.answer = f[*a_col];
        if (c_col && !text::trim(f[*c_col]).empty()) {
            p.clarity = labels.parse_clarity(f[*c_col]);
            if (!p.clarity) throw DataError(where + ": unknown clarity label '" + f[*c_col] + "'");
        }
        if (e_col && !text::trim(f[*e_col]).empty()) {
            p.evasion = labels.parse_evasion(f[*e_col]);
            if (!p.evasion) throw DataError(where + ": unknown evasion label '" + f[*e_col] + "'");
            // An evasion label alone determines the clarity label.
            if (!p.clarity) p.clarity = map_evasion_to_clarity(*p.evasion);
        }
        if (aff_col && mul_col) {
            const auto aff = parse_bool(f[*aff_col]);
            const auto mul = parse_bool(f[*mul_col]);
            if (text::trim(f[*aff_col]).empty() != text::trim(f[*mul_col]).empty() ||
                (!text::trim(f[*aff_col]).empty() && (!aff || !mul)))
                throw DataError(where + ": malformed boolean feature values");
            if (aff && mul) {
                p.affirmative_question = *aff;
                p.multiple_questions = *mul;
                p.feature_provenance = FeatureProvenance::DatasetColumn;
            }
        }
        if (src_col) {
            const auto s = parse_source(f[*src_col]);
            if (!s) throw DataError(where + ": unknown source '" + f[*src_col] + "'");
            p.source = *s;
        }
        p.sample_weight = assign_sample_weights(p.source);
        if (w_col && !text::trim(f[*w_col]).empty()) {
            const std::string w = text::trim(f[*w_col]);
            std::size_t used = 0;
            try {
                p.sample_weight = std::stod(w, &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used != w.size()) throw DataError(where + ": bad weight '" + w + "'");
        }
        for (std::size_t i = 0; i < f.size(); ++i) {
            if (!known.count(i)) p.meta[text::trim(header[i])] = f[i];
        }
        try {
            validate(p);
        } catch (const DataError& e) {
            throw DataError(where + ": " + e.what());
        }
        d.records.push_back(std::move(p));
        ++data_row;
    }
    if (d.records.empty()) log::warn(path.string() + ": no records");
    apply_feature_fallback(d);
    return d;
}

void save_dataset(const Dataset& d, const std::filesystem::path& path, const LabelTable& labels) {
    std::set<std::string> meta_keys;
    for (const auto& r : d.records)
        for (const auto& [k, v] : r.meta) meta_keys.insert(k);
    const Schema s = canonical_schema();
    auto out = open_for_write(path);
    out << s.id << '\t' << s.question << '\t' << s.answer << '\t' << s.clarity << '\t' << s.evasion << '\t'
        << s.affirmative << '\t' << s.multiple << '\t' << s.source << '\t' << s.weight;
    for (const auto& k : meta_keys) out << '\t' << text::escape_field(k);
    out << '\n';
    for (const auto& r : d.records) {
        out << text::escape_field(r.id) << '\t' << text::escape_field(r.question) << '\t'
            << text::escape_field(r.answer) << '\t' << (r.clarity ? labels.name(*r.clarity) : "") << '\t'
            << (r.evasion ? labels.name(*r.evasion) : "") << '\t' << (r.affirmative_question ? 1 : 0) << '\t'
            << (r.multiple_questions ? 1 : 0) << '\t' << to_string(r.source) << '\t'
            << text::format_exact(r.sample_weight);
        for (const auto& k : meta_keys) {
            const auto it = r.meta.find(k);
            out << '\t' << (it == r.meta.end() ? "" : text::escape_field(it->second));
        }
        out << '\n';
    }
    if (!out) throw DataError("failed writing " + path.string());
}

std::string format_input(const QAPair& p, std::string_view separator) {
    std::string out = "Question: ";
    out += text::normalize_space(p.question);
    out += ' ';
    out += separator;
    out += " Answer: ";
    out += text::normalize_space(p.answer);
    return out;
}

// ---------------------------------------------------------------------------
// Splits and distributions
// ---------------------------------------------------------------------------

namespace {

std::vector<std::vector<std::size_t>> indices_by_class(const Dataset& d, Task task) {
    std::vector<std::vector<std::size_t>> by_class(label_count(task));
    for (std::size_t i = 0; i < d.records.size(); ++i) {
        const auto l = label_of(d.records[i], task);
        if (!l) throw DataError("record " + std::to_string(i) + " ('" + d.records[i].id + "') is unlabeled");
        by_class[*l].push_back(i);
    }
    return by_class;
}

Dataset subset(const Dataset& d, std::vector<std::size_t> idx, const std::string& suffix) {
    std::sort(idx.begin(), idx.end());
    Dataset out;
    out.name = d.name + suffix;
    out.held_out = d.held_out;
    out.records.reserve(idx.size());
    for (auto i : idx) out.records.push_back(d.records[i]);
    return out;
}

}  // namespace

std::pair<Dataset, Dataset> stratified_split(const Dataset& d, double dev_fraction, std::uint64_t seed, Task task,
                                             bool require_all_classes) {
    if (!(dev_fraction > 0.0 && dev_fraction < 1.0)) throw DataError("dev_fraction must lie in (0, 1)");
    const auto by_class = indices_by_class(d, task);
    const auto& names = LabelTable::builtin();
    std::string missing;
    for (int c = 0; c < label_count(task); ++c) {
        if (by_class[c].empty()) missing += (missing.empty() ? "" : ", ") + names.name(task, c);
    }
    if (!missing.empty() && (require_all_classes || d.records.empty()))
        throw DataError("stratified split: no records for class(es) " + missing);

    const int k = label_count(task);
    std::vector<std::size_t> quota(k);
    std::vector<double> remainder(k);
    std::size_t assigned = 0;
    for (int c = 0; c < k; ++c) {
        const double exact = static_cast<double>(by_class[c].size()) * dev_fraction;
        quota[c] = static_cast<std::size_t>(std::floor(exact));
        remainder[c] = exact - static_cast<double>(quota[c]);
        assigned += quota[c];
    }
    const auto target = static_cast<std::size_t>(std::llround(static_cast<double>(d.size()) * dev_fraction));
    std::vector<int> order(k);
    for (int c = 0; c < k; ++c) order[c] = c;
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return remainder[a] > remainder[b]; });
    for (int i = 0; assigned < target && i < k; ++i) {
        const int c = order[i];
        if (quota[c] < by_class[c].size() && remainder[c] > 0.0) {
            ++quota[c];
            ++assigned;
        }
    }

    std::vector<std::size_t> train_idx;
    std::vector<std::size_t> dev_idx;
    for (int c = 0; c < k; ++c) {
        auto members = by_class[c];
        Rng rng(child_seed(seed, static_cast<std::uint64_t>(c)));
        rng.shuffle(members);
        dev_idx.insert(dev_idx.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(quota[c]));
        train_idx.insert(train_idx.end(), members.begin() + static_cast<std::ptrdiff_t>(quota[c]), members.end());
    }
    return {subset(d, std::move(train_idx), "-train"), subset(d, std::move(dev_idx), "-dev")};
}

std::vector<std::size_t> class_counts(const Dataset& d, Task task) {
    std::vector<std::size_t> counts(label_count(task), 0);
    for (std::size_t i = 0; i < d.records.size(); ++i) {
        const auto l = label_of(d.records[i], task);
        if (!l) throw DataError("record " + std::to_string(i) + " ('" + d.records[i].id + "') is unlabeled");
        ++counts[*l];
    }
    return counts;
}

std::map<ClarityLabel, ClassShare> class_distribution(const Dataset& d) {
    const auto counts = class_counts(d, Task::Clarity);
    std::map<ClarityLabel, ClassShare> dist;
    for (auto c : kAllClarity) {
        ClassShare s;
        s.count = counts[code(c)];
        s.fraction = d.empty() ? 0.0 : static_cast<double>(s.count) / static_cast<double>(d.size());
        dist[c] = s;
    }
    return dist;
}

// ---------------------------------------------------------------------------
// Predictions
// ---------------------------------------------------------------------------

void write_predictions(const std::vector<std::pair<QAPair, ClarityLabel>>& pairs, const std::filesystem::path& path,
                       const LabelTable& labels) {
    std::vector<Prediction> preds;
    preds.reserve(pairs.size());
    for (const auto& [p, l] : pairs) preds.push_back({p.id, code(l)});
    write_predictions(preds, Task::Clarity, path, labels);
}

void write_predictions(const std::vector<Prediction>& preds, Task task, const std::filesystem::path& path,
                       const LabelTable& labels) {
    auto out = open_for_write(path);
    for (const auto& p : preds) {
        if (p.id.empty()) throw DataError("prediction without record id");
        out << text::escape_field(p.id) << '\t' << labels.name(task, p.label) << '\n';
    }
    if (!out) throw DataError("failed writing " + path.string());
}

std::vector<Prediction> read_predictions(const std::filesystem::path& path, Task task, const LabelTable& labels) {
    std::vector<Prediction> preds;
    std::size_t line_no = 0;
    for (const auto& line : lines_of(read_file(path))) {
        ++line_no;
        if (text::trim(line).empty()) continue;
        const auto f = text::split(line, '\t');
        const std::string where = path.string() + ": line " + std::to_string(line_no);
        if (f.size() != 2) throw DataError(where + ": expected 'id<TAB>label'");
        const auto l = labels.parse(task, f[1]);
        if (!l) throw DataError(where + ": unknown label '" + f[1] + "'");
        preds.push_back({text::unescape_field(f[0]), *l});
    }
    return preds;
}

}  // namespace clarity
