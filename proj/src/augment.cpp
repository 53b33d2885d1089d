#include "clarity/augment.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>

#include "clarity/error.hpp"
#include "clarity/features.hpp"
#include "clarity/log.hpp"
#include "clarity/parallel.hpp"
#include "clarity/resources.hpp"
#include "clarity/text.hpp"

namespace clarity {

namespace {

void check_probability(double p) {
    if (!(p >= 0.0 && p < 1.0)) throw std::invalid_argument("EDA probability must lie in [0, 1)");
}

std::size_t firing_budget(double p, std::size_t n) {
    return static_cast<std::size_t>(std::ceil(p * static_cast<double>(n)));
}

/// Splits a token into leading punctuation, core word and trailing punctuation.
struct TokenParts {
    std::string lead, core, trail;
};

TokenParts parts_of(std::string_view token) {
    auto is_word = [](char c) {
        const auto u = static_cast<unsigned char>(c);
        return std::isalnum(u) || c == '\'' || c == '-' || u >= 0x80;
    };
    std::size_t b = 0;
    std::size_t e = token.size();
    while (b < e && !is_word(token[b])) ++b;
    while (e > b && !is_word(token[e - 1])) --e;
    return {std::string(token.substr(0, b)), std::string(token.substr(b, e - b)), std::string(token.substr(e))};
}

std::string match_case(const std::string& like, std::string word) {
    if (!like.empty() && std::isupper(static_cast<unsigned char>(like.front())) && !word.empty())
        word.front() = static_cast<char>(std::toupper(static_cast<unsigned char>(word.front())));
    return word;
}

std::vector<std::string> read_lines(const std::filesystem::path& path, const char* what) {
    std::ifstream in(path);
    if (!in) throw DataError(std::string("cannot open ") + what + " " + path.string());
    std::vector<std::string> out;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (text::trim(line).empty() || text::trim(line).front() == '#') continue;
        out.push_back(line);
    }
    return out;
}

std::string_view op_name(EdaOp op) {
    switch (op) {
        case EdaOp::SynonymReplace: return "synonym_replace";
        case EdaOp::RandomInsert: return "random_insert";
        case EdaOp::RandomSwap: return "random_swap";
        case EdaOp::RandomDelete: return "random_delete";
    }
    return "";
}

}  // namespace

// ---------------------------------------------------------------------------
// Thesaurus
// ---------------------------------------------------------------------------

Thesaurus::Thesaurus(std::map<std::string, std::vector<std::string>> entries) {
    for (auto& [word, syns] : entries) {
        std::vector<std::string> single;
        for (auto& s : syns) {
            const std::string t = text::trim(s);
            if (!t.empty() && t.find(' ') == std::string::npos) single.push_back(t);
        }
        if (!single.empty()) entries_[text::to_lower(text::trim(word))] = std::move(single);
    }
}

const Thesaurus& Thesaurus::builtin() {
    static const Thesaurus t = load(resource_path("thesaurus.tsv"));
    return t;
}

Thesaurus Thesaurus::load(const std::filesystem::path& path) {
    std::map<std::string, std::vector<std::string>> entries;
    for (const auto& line : read_lines(path, "thesaurus")) {
        const auto f = text::split(line, '\t');
        if (f.size() != 2) throw DataError(path.string() + ": expected 'word<TAB>syn,syn,...' in line: " + line);
        auto& syns = entries[f[0]];
        for (auto& s : text::split(f[1], ',')) syns.push_back(s);
    }
    return Thesaurus(std::move(entries));
}

const std::vector<std::string>* Thesaurus::synonyms(std::string_view token) const {
    const auto it = entries_.find(text::to_lower(parts_of(token).core));
    return it == entries_.end() ? nullptr : &it->second;
}

// ---------------------------------------------------------------------------
// EDA operations
// ---------------------------------------------------------------------------

Tokens synonym_replace(const Tokens& tokens, double p, Rng& rng, const Thesaurus& thesaurus) {
    check_probability(p);
    Tokens out = tokens;
    const std::size_t budget = firing_budget(p, tokens.size());
    std::size_t fired = 0;
    for (auto& tok : out) {
        const auto* syns = thesaurus.synonyms(tok);
        if (!syns || !rng.bernoulli(p) || fired >= budget) continue;
        const auto parts = parts_of(tok);
        tok = parts.lead + match_case(parts.core, (*syns)[rng.index(syns->size())]) + parts.trail;
        ++fired;
    }
    return out;
}

Tokens random_insert(const Tokens& tokens, double p, Rng& rng, const Thesaurus& thesaurus) {
    check_probability(p);
    Tokens out = tokens;
    const std::size_t budget = firing_budget(p, tokens.size());
    std::size_t fired = 0;
    for (const auto& tok : tokens) {
        const auto* syns = thesaurus.synonyms(tok);
        if (!syns || !rng.bernoulli(p) || fired >= budget) continue;
        const std::string& word = (*syns)[rng.index(syns->size())];
        out.insert(out.begin() + static_cast<std::ptrdiff_t>(rng.index(out.size() + 1)), word);
        ++fired;
    }
    return out;
}

Tokens random_swap(const Tokens& tokens, double p, Rng& rng) {
    check_probability(p);
    Tokens out = tokens;
    const std::size_t n = out.size();
    if (n < 2) return out;
    const auto swaps = static_cast<std::size_t>(std::floor(p * static_cast<double>(n)));
    for (std::size_t s = 0; s < swaps; ++s) {
        const std::size_t i = rng.index(n);
        std::size_t j = rng.index(n - 1);
        if (j >= i) ++j;
        std::swap(out[i], out[j]);
    }
    return out;
}

Tokens random_delete(const Tokens& tokens, double p, Rng& rng) {
    check_probability(p);
    if (tokens.size() <= 1) return tokens;
    const std::size_t budget = firing_budget(p, tokens.size());
    std::size_t fired = 0;
    Tokens out;
    out.reserve(tokens.size());
    for (const auto& tok : tokens) {
        if (rng.bernoulli(p) && fired < budget) {
            ++fired;
            continue;
        }
        out.push_back(tok);
    }
    if (out.empty()) out.push_back(tokens[rng.index(tokens.size())]);
    return out;
}

QAPair eda_augment(const QAPair& p, const AugmentationPlan& plan, Rng& rng, const Thesaurus& thesaurus) {
    if (!p.clarity && !p.evasion) throw DataError("record '" + p.id + "' is unlabeled; cannot augment");
    QAPair out = p;
    out.source = plan.source;
    out.sample_weight = assign_sample_weights(plan.source);
    out.meta["origin_id"] = p.id;

    const Tokens tokens = text::split_whitespace(p.answer);
    if (tokens.empty()) {
        log::warn("record '" + p.id + "': answer has no tokens, passed through unchanged");
        return out;
    }
    const auto op = static_cast<EdaOp>(rng.index(4));
    Tokens result;
    switch (op) {
        case EdaOp::SynonymReplace: result = synonym_replace(tokens, plan.op_probability, rng, thesaurus); break;
        case EdaOp::RandomInsert: result = random_insert(tokens, plan.op_probability, rng, thesaurus); break;
        case EdaOp::RandomSwap: result = random_swap(tokens, plan.op_probability, rng); break;
        case EdaOp::RandomDelete: result = random_delete(tokens, plan.op_probability, rng); break;
    }
    out.meta["eda_op"] = std::string(op_name(op));
    if (result != tokens) out.answer = text::join(result, " ");
    return out;
}

std::vector<QAPair> eda_generate(const Dataset& train, ClarityLabel label, std::size_t count,
                                 const AugmentationPlan& plan, const Thesaurus& thesaurus) {
    require_augmentable(train);
    std::vector<const QAPair*> sources;
    for (const auto& r : train.records)
        if (r.source == Source::Original && r.clarity == label) sources.push_back(&r);
    if (count > 0 && sources.empty())
        throw DataError("no original records of class '" + LabelTable::builtin().name(label) + "' to paraphrase");

    std::vector<QAPair> out(count);
    parallel_for(count, plan.threads, [&](std::size_t i) {
        Rng rng(child_seed(plan.seed, i));
        out[i] = eda_augment(*sources[i % sources.size()], plan, rng, thesaurus);
        out[i].id = "eda-" + std::to_string(code(label)) + "-" + std::to_string(i);
    });
    return out;
}

// ---------------------------------------------------------------------------
// Rhetorical frames
// ---------------------------------------------------------------------------

bool well_formed(const RhetoricalFrame& f) {
    if (text::trim(f.template_text).empty()) return false;
    std::size_t slots = 0;
    const std::string& t = f.template_text;
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (t[i] == '}') return false;
        if (t[i] != '{') continue;
        const std::size_t close = t.find('}', i);
        if (close == std::string::npos || close == i + 1) return false;
        for (std::size_t j = i + 1; j < close; ++j) {
            if (!(std::isupper(static_cast<unsigned char>(t[j])) || t[j] == '_')) return false;
        }
        ++slots;
        i = close;
    }
    return slots > 0;
}

std::string fill_frame(const RhetoricalFrame& f, std::string_view context) {
    std::string out;
    const std::string& t = f.template_text;
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (t[i] == '{') {
            const std::size_t close = t.find('}', i);
            if (close != std::string::npos) {
                out += context;
                i = close;
                continue;
            }
        }
        out.push_back(t[i]);
    }
    return out;
}

FrameLexicon::FrameLexicon(std::vector<std::string> words) : words_(std::move(words)) {
    for (auto& w : words_) w = text::to_lower(text::trim(w));
    std::sort(words_.begin(), words_.end());
    words_.erase(std::unique(words_.begin(), words_.end()), words_.end());
}

const FrameLexicon& FrameLexicon::builtin() {
    static const FrameLexicon lex = load(resource_path("frame_words.txt"));
    return lex;
}

FrameLexicon FrameLexicon::load(const std::filesystem::path& path) {
    return FrameLexicon(read_lines(path, "frame lexicon"));
}

bool FrameLexicon::contains(std::string_view lowered) const {
    return std::binary_search(words_.begin(), words_.end(), lowered);
}

namespace {

std::vector<std::string> sentences_of(std::string_view s) {
    std::vector<std::string> out;
    std::string cur;
    for (std::size_t i = 0; i < s.size(); ++i) {
        cur.push_back(s[i]);
        const bool end = s[i] == '.' || s[i] == '!' || s[i] == '?';
        if (end && (i + 1 == s.size() || std::isspace(static_cast<unsigned char>(s[i + 1])))) {
            if (!text::trim(cur).empty()) out.push_back(text::trim(cur));
            cur.clear();
        }
    }
    if (!text::trim(cur).empty()) out.push_back(text::trim(cur));
    return out;
}

}  // namespace

std::optional<std::string> sentence_skeleton(std::string_view sentence, const FrameLexicon& lexicon) {
    const auto tokens = text::split_whitespace(sentence);
    std::size_t prefix = 0;
    while (prefix < tokens.size()) {
        const auto parts = parts_of(tokens[prefix]);
        if (parts.core.empty() || !lexicon.contains(text::to_lower(parts.core))) break;
        ++prefix;
        // A clause break inside the prefix ends the fixed part.
        if (!parts.trail.empty() && parts.trail.find_first_of(",;:") != std::string::npos) break;
    }
    if (prefix < 2 || prefix == tokens.size()) return std::nullopt;
    std::vector<std::string> fixed(tokens.begin(), tokens.begin() + static_cast<std::ptrdiff_t>(prefix));
    return text::join(fixed, " ") + " {TOPIC}";
}

std::vector<RhetoricalFrame> extract_frames(const Dataset& d, ClarityLabel label, std::size_t min_support,
                                            const FrameLexicon& lexicon) {
    require_augmentable(d);
    struct Entry {
        std::string template_text;
        std::size_t support = 0;
    };
    std::map<std::string, Entry> by_key;
    for (std::size_t i = 0; i < d.records.size(); ++i) {
        const auto& r = d.records[i];
        if (!r.clarity) throw DataError("record " + std::to_string(i) + " ('" + r.id + "') is unlabeled");
        if (r.source != Source::Original || *r.clarity != label) continue;
        std::set<std::string> seen;
        for (const auto& s : sentences_of(r.answer)) {
            const auto sk = sentence_skeleton(s, lexicon);
            if (!sk) continue;
            const std::string key = text::to_lower(*sk);
            if (!seen.insert(key).second) continue;
            auto& e = by_key[key];
            if (e.template_text.empty()) e.template_text = *sk;
            ++e.support;
        }
    }
    std::vector<RhetoricalFrame> frames;
    for (const auto& [key, e] : by_key) {
        if (e.support >= min_support) frames.push_back({e.template_text, label, e.support});
    }
    std::sort(frames.begin(), frames.end(), [](const RhetoricalFrame& a, const RhetoricalFrame& b) {
        if (a.origin_count != b.origin_count) return a.origin_count > b.origin_count;
        return a.template_text < b.template_text;
    });
    return frames;
}

std::vector<RhetoricalFrame> whole_answer_frames(const Dataset& d, ClarityLabel label) {
    require_augmentable(d);
    std::set<std::string> seen;
    std::vector<RhetoricalFrame> frames;
    for (const auto& r : d.records) {
        if (r.source != Source::Original || r.clarity != label) continue;
        const auto sentences = sentences_of(r.answer);
        if (sentences.empty()) continue;
        std::string t;
        for (char c : sentences.front())
            if (c != '{' && c != '}') t.push_back(c);
        t += " The same applies to {TOPIC}.";
        if (seen.insert(t).second) frames.push_back({t, label, 1});
    }
    return frames;
}

// ---------------------------------------------------------------------------
// Planning and synthesis
// ---------------------------------------------------------------------------

std::map<ClarityLabel, std::size_t> balance_plan(const std::map<ClarityLabel, ClassShare>& dist, BalanceMode mode,
                                                 const std::map<ClarityLabel, std::size_t>& partial_targets) {
    std::map<ClarityLabel, std::size_t> generate;
    auto count_of = [&](ClarityLabel c) {
        const auto it = dist.find(c);
        return it == dist.end() ? std::size_t{0} : it->second.count;
    };
    if (mode == BalanceMode::FullBalance) {
        std::size_t top = 0;
        for (auto c : kAllClarity) top = std::max(top, count_of(c));
        for (auto c : kAllClarity) generate[c] = top - count_of(c);
        return generate;
    }
    for (auto c : kAllClarity) generate[c] = 0;
    for (const auto& [c, target] : partial_targets) {
        if (target < count_of(c))
            throw DataError("target " + std::to_string(target) + " for '" + LabelTable::builtin().name(c) +
                            "' is below its current count " + std::to_string(count_of(c)));
        generate[c] = target - count_of(c);
    }
    return generate;
}

std::string casa_prompt(const RhetoricalFrame& frame, std::string_view context, const LabelTable& labels) {
    std::string p;
    p += "Write one answer a politician might give in a press interview.\n";
    p += "Frame: " + frame.template_text + "\n";
    p += "Context: " + std::string(context) + "\n";
    p += "Label: " + labels.name(frame.label) + "\n";
    p += "Follow the frame's rhetorical move, fill it with the context, and keep the answer a ";
    p += labels.name(frame.label) + " response. Return only the answer text.\n";
    return p;
}

std::string synthesize_question(std::string_view context, Rng& rng) {
    static const char* const kTemplates[] = {
        "What is your position on {}?",
        "Will you address {}?",
        "Can you tell us where things stand on {}?",
        "Do you have an update on {}?",
        "How do you respond to criticism over {}?",
        "Are you prepared to act on {}?",
    };
    const std::string t = kTemplates[rng.index(std::size(kTemplates))];
    const auto at = t.find("{}");
    return t.substr(0, at) + std::string(context) + t.substr(at + 2);
}

std::vector<QAPair> casa_generate(const std::vector<RhetoricalFrame>& frames, const std::vector<std::string>& contexts,
                                  std::size_t n, GeneratorClient* client, const CasaOptions& options) {
    if (n == 0) return {};
    if (frames.empty()) {
        throw DataError(client ? "synthesis needs at least one frame to label generated records"
                               : "no frames and no generator client: nothing to synthesize from");
    }
    if (contexts.empty()) throw DataError("synthesis needs at least one context");
    for (const auto& f : frames)
        if (!well_formed(f)) throw DataError("malformed frame template: '" + f.template_text + "'");

    std::vector<QAPair> out(n);
    const int workers = client ? std::max(1, options.concurrency) : 1;
    parallel_for(n, workers, [&](std::size_t i) {
        Rng rng(child_seed(options.seed, i));
        const RhetoricalFrame& frame = frames[rng.index(frames.size())];
        const std::string& context = contexts[rng.index(contexts.size())];
        QAPair p;
        p.id = options.id_prefix + "-" + std::to_string(i);
        p.question = synthesize_question(context, rng);
        if (!client) {
            p.answer = fill_frame(frame, context);
        } else {
            const std::string prompt = casa_prompt(frame, context);
            std::string last_error = "empty response";
            for (int attempt = 0; attempt <= options.max_retries; ++attempt) {
                try {
                    p.answer = text::trim(client->generate(prompt));
                    if (!p.answer.empty()) break;
                    last_error = "empty response";
                } catch (const std::exception& e) {
                    last_error = e.what();
                }
            }
            if (p.answer.empty())
                throw DataError("generator '" + client->name() + "' failed for record " + std::to_string(i) +
                                " after " + std::to_string(options.max_retries + 1) + " attempts: " + last_error);
        }
        p.clarity = frame.label;
        p.source = Source::GeminiSynthetic;
        p.sample_weight = assign_sample_weights(Source::GeminiSynthetic);
        const auto feats = extract_boolean_features(p.question);
        p.affirmative_question = feats.affirmative_question;
        p.multiple_questions = feats.multiple_questions;
        p.feature_provenance = FeatureProvenance::Heuristic;
        p.meta["frame"] = frame.template_text;
        p.meta["context"] = context;
        out[i] = std::move(p);
    });
    return out;
}

std::vector<std::string> load_contexts(const std::filesystem::path& path) {
    auto lines = read_lines(path, "contexts file");
    for (auto& l : lines) l = text::normalize_space(l);
    return lines;
}

const std::vector<std::string>& builtin_contexts() {
    static const std::vector<std::string> c = load_contexts(resource_path("contexts.txt"));
    return c;
}

LintReport lint_synthetic(const std::vector<QAPair>& synthetic, const Dataset& train, const LintOptions& options) {
    LintReport r;
    auto key = [](const QAPair& p) {
        return text::to_lower(text::normalize_space(p.question)) + "\x1f" +
               text::to_lower(text::normalize_space(p.answer));
    };
    std::set<std::string> seen;
    for (const auto& p : train.records) seen.insert(key(p));
    for (const auto& p : synthetic) {
        const std::size_t words = text::split_whitespace(p.answer).size();
        if (words < options.min_answer_words) {
            ++r.too_short;
        } else if (words > options.max_answer_words) {
            ++r.too_long;
        } else if (p.clarity && p.evasion && *p.clarity != map_evasion_to_clarity(*p.evasion)) {
            ++r.hierarchy;
        } else if (!seen.insert(key(p)).second) {
            ++r.duplicates;
        } else {
            ++r.clean;
        }
    }
    return r;
}

void require_augmentable(const Dataset& d) {
    if (d.held_out) throw DataError("refusing to augment from held-out dataset '" + d.name + "'");
}

}  // namespace clarity
