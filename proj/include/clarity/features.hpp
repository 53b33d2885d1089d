#pragma once

#include <filesystem>
#include <set>
#include <string>
#include <string_view>

#include "clarity/data.hpp"

namespace clarity {

struct BooleanFeatures {
    bool affirmative_question = false;
    bool multiple_questions = false;
    FeatureProvenance provenance = FeatureProvenance::Heuristic;

    bool operator==(const BooleanFeatures&) const = default;
};

/// Auxiliary and modal verbs that open a yes/no question. Loaded from a
/// plain-text resource, one word per line; '#' starts a comment.
class AuxiliaryLexicon {
public:
    static const AuxiliaryLexicon& builtin();
    static AuxiliaryLexicon load(const std::filesystem::path& path);

    explicit AuxiliaryLexicon(std::set<std::string> words);

    bool contains(std::string_view word) const;
    const std::set<std::string>& words() const noexcept { return words_; }

private:
    std::set<std::string> words_;
};

/// Heuristic used when a dataset lacks the two feature columns.
///
/// affirmative: the first interrogative clause opens with a word from the
/// auxiliary lexicon. multiple: at least two '?' characters, or at least
/// two interrogative clauses after sentence splitting.
BooleanFeatures extract_boolean_features(std::string_view question,
                                         const AuxiliaryLexicon& lexicon = AuxiliaryLexicon::builtin());

/// Fills the features of every record whose provenance is Heuristic.
/// Records carrying dataset columns are left untouched.
void apply_feature_fallback(Dataset& d, const AuxiliaryLexicon& lexicon = AuxiliaryLexicon::builtin());

struct FeatureAgreement {
    std::size_t compared = 0;
    double affirmative = 0.0;
    double multiple = 0.0;
};

/// Agreement of the heuristic with dataset-supplied columns, measured over
/// records whose provenance is DatasetColumn.
FeatureAgreement measure_feature_agreement(const Dataset& d,
                                           const AuxiliaryLexicon& lexicon = AuxiliaryLexicon::builtin());

}  // namespace clarity
