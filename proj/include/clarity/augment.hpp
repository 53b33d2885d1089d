#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "clarity/data.hpp"
#include "clarity/rng.hpp"

namespace clarity {

using Tokens = std::vector<std::string>;

/// Flat-file thesaurus: "word<TAB>syn1,syn2,..." per line. Lookups are
/// case-insensitive.
class Thesaurus {
public:
    static const Thesaurus& builtin();
    static Thesaurus load(const std::filesystem::path& path);

    Thesaurus() = default;
    explicit Thesaurus(std::map<std::string, std::vector<std::string>> entries);

    /// Synonyms for a token (surrounding punctuation ignored), or nullptr.
    const std::vector<std::string>* synonyms(std::string_view token) const;
    std::size_t size() const noexcept { return entries_.size(); }

private:
    std::map<std::string, std::vector<std::string>> entries_;
};

// EDA operations. Each eligible position fires independently with
// probability p; at most ceil(p * n) firings are applied so the output
// length stays within n +/- ceil(p * n). All are identities at p = 0.

Tokens synonym_replace(const Tokens& tokens, double p, Rng& rng,
                       const Thesaurus& thesaurus = Thesaurus::builtin());
Tokens random_insert(const Tokens& tokens, double p, Rng& rng,
                     const Thesaurus& thesaurus = Thesaurus::builtin());
/// floor(p * n) swaps of two distinct positions.
Tokens random_swap(const Tokens& tokens, double p, Rng& rng);
/// Never returns an empty list; the result is a subsequence of the input.
Tokens random_delete(const Tokens& tokens, double p, Rng& rng);

enum class EdaOp { SynonymReplace, RandomInsert, RandomSwap, RandomDelete };

struct AugmentationPlan {
    /// Post-augmentation count per class.
    std::map<ClarityLabel, std::size_t> targets;
    double op_probability = 0.1;
    Source source = Source::ClaudeSynthetic;
    std::uint64_t seed = 0;
    int threads = 1;
};

/// Paraphrases the answer with one uniformly chosen EDA operation. The
/// question and labels are copied; source and weight are stamped as
/// ClaudeSynthetic / 0.5.
QAPair eda_augment(const QAPair& p, const AugmentationPlan& plan, Rng& rng,
                   const Thesaurus& thesaurus = Thesaurus::builtin());

/// Generates `count` EDA records for `label` from Original records of that
/// class, cycling sources in order. Record i uses child_seed(plan.seed, i).
std::vector<QAPair> eda_generate(const Dataset& train, ClarityLabel label, std::size_t count,
                                 const AugmentationPlan& plan,
                                 const Thesaurus& thesaurus = Thesaurus::builtin());

/// Answer skeleton with one or more "{SLOT}" markers.
struct RhetoricalFrame {
    std::string template_text;
    ClarityLabel label = ClarityLabel::ClearNonReply;
    std::size_t origin_count = 0;

    bool operator==(const RhetoricalFrame&) const = default;
};

/// True when the template is non-empty and every '{' opens a well-formed
/// "{UPPERCASE}" slot (at least one present).
bool well_formed(const RhetoricalFrame& f);

/// Fills every slot marker with `context`.
std::string fill_frame(const RhetoricalFrame& f, std::string_view context);

/// Closed-class words that may appear in a frame's fixed part.
class FrameLexicon {
public:
    static const FrameLexicon& builtin();
    static FrameLexicon load(const std::filesystem::path& path);

    explicit FrameLexicon(std::vector<std::string> words);
    bool contains(std::string_view lowered) const;

private:
    std::vector<std::string> words_;  // sorted
};

/// The skeleton of one sentence: its longest prefix of frame-lexicon words
/// (at least two), followed by "{TOPIC}" in place of the remaining content.
std::optional<std::string> sentence_skeleton(std::string_view sentence,
                                             const FrameLexicon& lexicon = FrameLexicon::builtin());

/// Mines answer skeletons for one class. Each answer contributes each
/// distinct skeleton once. Sorted by support descending, then template.
std::vector<RhetoricalFrame> extract_frames(const Dataset& d, ClarityLabel label, std::size_t min_support,
                                            const FrameLexicon& lexicon = FrameLexicon::builtin());

/// Fallback when mining finds nothing: one frame per distinct answer,
/// "<answer> {TOPIC}" style.
std::vector<RhetoricalFrame> whole_answer_frames(const Dataset& d, ClarityLabel label);

enum class BalanceMode { FullBalance, Partial };

/// Number of records to generate per class. FullBalance lifts every class
/// to the largest count; Partial uses explicit targets (missing classes
/// generate nothing).
std::map<ClarityLabel, std::size_t> balance_plan(
    const std::map<ClarityLabel, ClassShare>& dist, BalanceMode mode,
    const std::map<ClarityLabel, std::size_t>& partial_targets = {});

/// Text generator used for online synthesis.
class GeneratorClient {
public:
    virtual ~GeneratorClient() = default;
    virtual std::string generate(const std::string& prompt) = 0;
    virtual std::string name() const = 0;
    /// False for remote models whose sampling cannot be pinned.
    virtual bool deterministic() const { return false; }
};

struct CasaOptions {
    std::uint64_t seed = 0;
    int max_retries = 2;
    /// Maximum number of concurrent client calls.
    int concurrency = 1;
    /// Record ids are "<id_prefix>-<index>".
    std::string id_prefix = "casa";
};

/// Builds the prompt sent to a generator client for one frame/context pair.
std::string casa_prompt(const RhetoricalFrame& frame, std::string_view context, const LabelTable& labels = LabelTable::builtin());

/// Question paired with a synthetic answer about `context`.
std::string synthesize_question(std::string_view context, Rng& rng);

/// Frame x context synthesis. Offline (client == nullptr) fills slots
/// directly; online sends casa_prompt() to the client. Records are stamped
/// GeminiSynthetic / 0.7 and labeled with the frame's class. Exactly n
/// records are returned, or an error is thrown and nothing is returned.
std::vector<QAPair> casa_generate(const std::vector<RhetoricalFrame>& frames,
                                  const std::vector<std::string>& contexts, std::size_t n,
                                  GeneratorClient* client, const CasaOptions& options);

/// One context per line; blank lines and '#' comments skipped.
std::vector<std::string> load_contexts(const std::filesystem::path& path);
const std::vector<std::string>& builtin_contexts();

struct LintOptions {
    std::size_t min_answer_words = 2;
    std::size_t max_answer_words = 400;
};

struct LintReport {
    std::size_t clean = 0;
    std::size_t too_short = 0;
    std::size_t too_long = 0;
    std::size_t hierarchy = 0;
    std::size_t duplicates = 0;
};

/// Automated quality check over synthetic records: length bounds, label
/// hierarchy, and duplicates of training or earlier synthetic pairs.
/// Reports counts only; the caller decides what to drop.
LintReport lint_synthetic(const std::vector<QAPair>& synthetic, const Dataset& train,
                          const LintOptions& options = {});

/// Refuses held-out data as an augmentation source.
void require_augmentable(const Dataset& d);

}  // namespace clarity
