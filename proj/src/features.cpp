#include "clarity/features.hpp"

#include <fstream>

#include "clarity/error.hpp"
#include "clarity/text.hpp"

namespace clarity {

namespace {

// Mirrors resources/auxiliary_words.txt.
const std::set<std::string> kBuiltinAuxiliaries{"will", "would", "do",  "does", "did", "is",  "are", "was",
                                                "were", "can",   "could", "should", "have", "has", "had"};

// Clause-opening words that mark an interrogative without a '?'.
const std::set<std::string> kWhWords{"what", "why", "how", "when", "where", "who", "whom", "whose", "which"};

struct Clause {
    std::string text;
    bool question_mark = false;
};

/// Splits on sentence-final punctuation, keeping whether each clause ended
/// with '?'.
std::vector<Clause> split_clauses(std::string_view s) {
    std::vector<Clause> out;
    std::string cur;
    for (char c : s) {
        if (c == '?' || c == '.' || c == '!' || c == ';') {
            std::string t = text::trim(cur);
            if (!t.empty() || c == '?') out.push_back({std::move(t), c == '?'});
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    std::string t = text::trim(cur);
    if (!t.empty()) out.push_back({std::move(t), false});
    return out;
}

std::string first_word(std::string_view clause) {
    const auto words = text::alpha_words(clause);
    return words.empty() ? std::string{} : words.front();
}

}  // namespace

const AuxiliaryLexicon& AuxiliaryLexicon::builtin() {
    static const AuxiliaryLexicon lex{kBuiltinAuxiliaries};
    return lex;
}

AuxiliaryLexicon AuxiliaryLexicon::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open auxiliary word list " + path.string());
    std::set<std::string> words;
    std::string line;
    while (std::getline(in, line)) {
        const std::string w = text::to_lower(text::trim(line));
        if (w.empty() || w.front() == '#') continue;
        words.insert(w);
    }
    return AuxiliaryLexicon{std::move(words)};
}

AuxiliaryLexicon::AuxiliaryLexicon(std::set<std::string> words) : words_(std::move(words)) {}

bool AuxiliaryLexicon::contains(std::string_view word) const { return words_.count(text::to_lower(word)) > 0; }

BooleanFeatures extract_boolean_features(std::string_view question, const AuxiliaryLexicon& lexicon) {
    BooleanFeatures f;
    f.provenance = FeatureProvenance::Heuristic;
    const auto clauses = split_clauses(question);

    std::size_t marks = 0;
    for (char c : question) marks += c == '?';

    std::size_t interrogative = 0;
    const Clause* first_interrogative = nullptr;
    for (const auto& cl : clauses) {
        const std::string w = first_word(cl.text);
        const bool is_q = cl.question_mark || lexicon.contains(w) || kWhWords.count(w) > 0;
        if (!is_q) continue;
        ++interrogative;
        if (!first_interrogative) first_interrogative = &cl;
    }
    if (!first_interrogative && !clauses.empty()) first_interrogative = &clauses.front();

    if (first_interrogative) f.affirmative_question = lexicon.contains(first_word(first_interrogative->text));
    f.multiple_questions = marks >= 2 || interrogative >= 2;
    return f;
}

void apply_feature_fallback(Dataset& d, const AuxiliaryLexicon& lexicon) {
    for (auto& r : d.records) {
        if (r.feature_provenance == FeatureProvenance::DatasetColumn) continue;
        const auto f = extract_boolean_features(r.question, lexicon);
        r.affirmative_question = f.affirmative_question;
        r.multiple_questions = f.multiple_questions;
        r.feature_provenance = FeatureProvenance::Heuristic;
    }
}

FeatureAgreement measure_feature_agreement(const Dataset& d, const AuxiliaryLexicon& lexicon) {
    FeatureAgreement a;
    std::size_t aff = 0;
    std::size_t mul = 0;
    for (const auto& r : d.records) {
        if (r.feature_provenance != FeatureProvenance::DatasetColumn) continue;
        const auto f = extract_boolean_features(r.question, lexicon);
        ++a.compared;
        aff += f.affirmative_question == r.affirmative_question;
        mul += f.multiple_questions == r.multiple_questions;
    }
    if (a.compared) {
        a.affirmative = static_cast<double>(aff) / static_cast<double>(a.compared);
        a.multiple = static_cast<double>(mul) / static_cast<double>(a.compared);
    }
    return a;
}

}  // namespace clarity
