#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace clarity {

// ---------------------------------------------------------------------------
// Taxonomy
// ---------------------------------------------------------------------------

/// Upper level of the taxonomy. The integer codes are stable: they index
/// confusion matrices, logits and prediction files.
enum class ClarityLabel : int { ClearReply = 0, Ambivalent = 1, ClearNonReply = 2 };

/// Lower level of the taxonomy: nine evasion techniques.
enum class EvasionLabel : int {
    Explicit = 0,
    Implicit = 1,
    General = 2,
    Partial = 3,
    Dodging = 4,
    Deflection = 5,
    Declining = 6,
    ClaimsIgnorance = 7,
    Clarification = 8,
};

inline constexpr int kClarityCount = 3;
inline constexpr int kEvasionCount = 9;

inline constexpr std::array<ClarityLabel, kClarityCount> kAllClarity{
    ClarityLabel::ClearReply, ClarityLabel::Ambivalent, ClarityLabel::ClearNonReply};

inline constexpr std::array<EvasionLabel, kEvasionCount> kAllEvasion{
    EvasionLabel::Explicit,   EvasionLabel::Implicit,  EvasionLabel::General,
    EvasionLabel::Partial,    EvasionLabel::Dodging,   EvasionLabel::Deflection,
    EvasionLabel::Declining,  EvasionLabel::ClaimsIgnorance,
    EvasionLabel::Clarification};

constexpr int code(ClarityLabel c) noexcept { return static_cast<int>(c); }
constexpr int code(EvasionLabel e) noexcept { return static_cast<int>(e); }

ClarityLabel clarity_from_code(int c);
EvasionLabel evasion_from_code(int c);

/// Total map from the fine-grained technique to its clarity group.
constexpr ClarityLabel map_evasion_to_clarity(EvasionLabel e) noexcept {
    switch (e) {
        case EvasionLabel::Explicit:
            return ClarityLabel::ClearReply;
        case EvasionLabel::Implicit:
        case EvasionLabel::General:
        case EvasionLabel::Partial:
        case EvasionLabel::Dodging:
        case EvasionLabel::Deflection:
            return ClarityLabel::Ambivalent;
        case EvasionLabel::Declining:
        case EvasionLabel::ClaimsIgnorance:
        case EvasionLabel::Clarification:
            return ClarityLabel::ClearNonReply;
    }
    return ClarityLabel::Ambivalent;
}

/// Which of the two classification problems a model or file addresses.
enum class Task { Clarity, Evasion };

constexpr int label_count(Task t) noexcept { return t == Task::Clarity ? kClarityCount : kEvasionCount; }

/// String <-> code table for both label levels. The canonical names are
/// what prediction files and reports print; aliases are accepted on input.
class LabelTable {
public:
    /// Table equal to resources/labels.tsv, compiled in.
    static const LabelTable& builtin();

    /// Reads "kind<TAB>code<TAB>canonical<TAB>alias|alias..." lines.
    static LabelTable load(const std::filesystem::path& path);
    static LabelTable parse(const std::string& content, const std::string& origin);

    std::optional<ClarityLabel> parse_clarity(std::string_view s) const;
    std::optional<EvasionLabel> parse_evasion(std::string_view s) const;

    /// Parses a label string for the given task, returning its code.
    std::optional<int> parse(Task task, std::string_view s) const;

    const std::string& name(ClarityLabel c) const { return clarity_names_[code(c)]; }
    const std::string& name(EvasionLabel e) const { return evasion_names_[code(e)]; }
    const std::string& name(Task task, int label_code) const;

    std::vector<std::string> names(Task task) const;

    bool operator==(const LabelTable&) const = default;

private:
    std::array<std::string, kClarityCount> clarity_names_;
    std::array<std::string, kEvasionCount> evasion_names_;
    std::map<std::string, int> clarity_lookup_;  // lowercased key
    std::map<std::string, int> evasion_lookup_;
};

/// Short display names used in confusion-matrix headers.
std::string short_name(ClarityLabel c);

// ---------------------------------------------------------------------------
// Records
// ---------------------------------------------------------------------------

enum class Source { Original, GeminiSynthetic, ClaudeSynthetic };

std::string_view to_string(Source s);
std::optional<Source> parse_source(std::string_view s);

/// Loss multiplier for a record's provenance: original 1.0, frame
/// generated 0.7, paraphrased 0.5.
double assign_sample_weights(Source s) noexcept;

enum class FeatureProvenance { DatasetColumn, Heuristic };

struct QAPair {
    std::string id;
    std::string question;
    std::string answer;
    std::optional<ClarityLabel> clarity;
    std::optional<EvasionLabel> evasion;
    bool affirmative_question = false;
    bool multiple_questions = false;
    FeatureProvenance feature_provenance = FeatureProvenance::Heuristic;
    Source source = Source::Original;
    double sample_weight = 1.0;
    std::map<std::string, std::string> meta;
};

/// Throws DataError when a record violates the QAPair invariants.
void validate(const QAPair& p);

/// Label code for the task, or nullopt when the record is unlabeled.
std::optional<int> label_of(const QAPair& p, Task task);

struct Dataset {
    std::string name;
    std::vector<QAPair> records;
    /// Set for test/evaluation files. Augmentation refuses held-out data.
    bool held_out = false;

    std::size_t size() const noexcept { return records.size(); }
    bool empty() const noexcept { return records.empty(); }
};

// ---------------------------------------------------------------------------
// File I/O
// ---------------------------------------------------------------------------

/// Maps logical fields to column names in a delimiter-separated file.
/// Optional columns that are empty or absent from the header are not read.
struct Schema {
    std::string id = "id";
    std::string question = "question";
    std::string answer = "answer";
    std::string clarity = "clarity_label";
    std::string evasion = "evasion_label";
    std::string affirmative = "affirmative_questions";
    std::string multiple = "multiple_questions";
    std::string source = "source";
    std::string weight = "weight";
    char delimiter = '\t';

    /// Applies "schema.<field>=<column>" overrides from a key/value map.
    static Schema from_config(const std::map<std::string, std::string>& kv);
};

/// One record per row. Rows without both feature columns fall back to the
/// heuristic extractor.
Dataset load_dataset(const std::filesystem::path& path, const Schema& schema = {},
                     const LabelTable& labels = LabelTable::builtin());

/// Writes the dataset in the same columnar format with the default schema
/// column names.
void save_dataset(const Dataset& d, const std::filesystem::path& path,
                  const LabelTable& labels = LabelTable::builtin());

/// Schema matching the files written by save_dataset.
Schema canonical_schema();

/// "Question: {q} {separator} Answer: {a}" after whitespace normalization.
std::string format_input(const QAPair& p, std::string_view separator = "[SEP]");

/// Per-class stratified split into (train, dev). Per-class dev quotas are
/// floor(n_c * f) plus largest-remainder top-up so the dev total equals
/// round(N * f); ties go to the lower label code. With require_all_classes
/// every label of the task must occur at least once.
std::pair<Dataset, Dataset> stratified_split(const Dataset& d, double dev_fraction,
                                             std::uint64_t seed, Task task = Task::Clarity,
                                             bool require_all_classes = false);

struct ClassShare {
    std::size_t count = 0;
    double fraction = 0.0;
};

/// Counts and fractions of every clarity class (zero-count classes included).
std::map<ClarityLabel, ClassShare> class_distribution(const Dataset& d);

/// Counts per label code for the given task.
std::vector<std::size_t> class_counts(const Dataset& d, Task task);

struct Prediction {
    std::string id;
    int label = 0;

    bool operator==(const Prediction&) const = default;
};

/// "id<TAB>label" lines with canonical label names.
void write_predictions(const std::vector<std::pair<QAPair, ClarityLabel>>& pairs,
                       const std::filesystem::path& path,
                       const LabelTable& labels = LabelTable::builtin());

void write_predictions(const std::vector<Prediction>& preds, Task task,
                       const std::filesystem::path& path,
                       const LabelTable& labels = LabelTable::builtin());

std::vector<Prediction> read_predictions(const std::filesystem::path& path, Task task,
                                         const LabelTable& labels = LabelTable::builtin());

}  // namespace clarity
