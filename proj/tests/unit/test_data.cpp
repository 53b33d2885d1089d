#include <doctest.h>

#include <cmath>
#include <set>

#include "clarity/data.hpp"
#include "clarity/error.hpp"
#include "clarity/log.hpp"
#include "clarity/resources.hpp"
#include "fixtures.hpp"

using namespace clarity;
using fixtures::TempDir;
using fixtures::write_file;

namespace {

const std::string kHeader = "question\tanswer\tclarity_label\tevasion_label\n";

}  // namespace

TEST_CASE("every evasion technique maps to its clarity group") {
    // Written out independently of the library's switch.
    const std::vector<std::pair<EvasionLabel, ClarityLabel>> expected{
        {EvasionLabel::Explicit, ClarityLabel::ClearReply},
        {EvasionLabel::Implicit, ClarityLabel::Ambivalent},
        {EvasionLabel::General, ClarityLabel::Ambivalent},
        {EvasionLabel::Partial, ClarityLabel::Ambivalent},
        {EvasionLabel::Dodging, ClarityLabel::Ambivalent},
        {EvasionLabel::Deflection, ClarityLabel::Ambivalent},
        {EvasionLabel::Declining, ClarityLabel::ClearNonReply},
        {EvasionLabel::ClaimsIgnorance, ClarityLabel::ClearNonReply},
        {EvasionLabel::Clarification, ClarityLabel::ClearNonReply},
    };
    REQUIRE(expected.size() == kAllEvasion.size());
    std::set<ClarityLabel> images;
    for (const auto& [e, c] : expected) {
        CHECK(map_evasion_to_clarity(e) == c);
        images.insert(map_evasion_to_clarity(e));
    }
    CHECK(images.size() == 3);
}

TEST_CASE("label codes round-trip and reject out-of-range values") {
    for (auto c : kAllClarity) CHECK(clarity_from_code(code(c)) == c);
    for (auto e : kAllEvasion) CHECK(evasion_from_code(code(e)) == e);
    CHECK_THROWS_AS(clarity_from_code(3), DataError);
    CHECK_THROWS_AS(evasion_from_code(-1), DataError);
}

TEST_CASE("builtin label table matches the shipped resource") {
    const auto loaded = LabelTable::load(resource_path("labels.tsv"));
    CHECK(loaded == LabelTable::builtin());
    const auto& t = LabelTable::builtin();
    CHECK(t.name(ClarityLabel::ClearNonReply) == "Clear Non-Reply");
    CHECK(t.parse_clarity("clear-n") == ClarityLabel::ClearNonReply);
    CHECK(t.parse_clarity("AMB") == ClarityLabel::Ambivalent);
    CHECK(t.parse_evasion("claims ignorance") == EvasionLabel::ClaimsIgnorance);
    CHECK_FALSE(t.parse_clarity("Maybe").has_value());
    for (auto e : kAllEvasion) CHECK(t.parse_evasion(t.name(e)) == e);
}

TEST_CASE("sample weights follow provenance") {
    CHECK(assign_sample_weights(Source::Original) == 1.0);
    CHECK(assign_sample_weights(Source::GeminiSynthetic) == 0.7);
    CHECK(assign_sample_weights(Source::ClaudeSynthetic) == 0.5);
    for (auto s : {Source::Original, Source::GeminiSynthetic, Source::ClaudeSynthetic})
        CHECK(parse_source(to_string(s)) == s);
}

TEST_CASE("validate rejects broken records") {
    QAPair p;
    p.id = "x";
    p.question = "Will you?";
    p.answer = "No.";
    CHECK_NOTHROW(validate(p));
    p.clarity = ClarityLabel::ClearReply;
    p.evasion = EvasionLabel::Dodging;
    CHECK_THROWS_AS(validate(p), DataError);
    p.evasion = EvasionLabel::Explicit;
    p.sample_weight = 0.0;
    CHECK_THROWS_AS(validate(p), DataError);
    p.sample_weight = 1.0;
    p.answer = "   ";
    CHECK_THROWS_AS(validate(p), DataError);
}

TEST_CASE("format_input reproduces the worked example") {
    QAPair p;
    p.question = "Will you increase funding for education?";
    p.answer = "I cannot comment on budget discussions at this time.";
    CHECK(format_input(p) ==
          "Question: Will you increase funding for education? [SEP] Answer: I cannot comment on budget "
          "discussions at this time.");
    p.question = "  Will   you\tgo? ";
    p.answer = "No\n thanks";
    CHECK(format_input(p, "|") == "Question: Will you go? | Answer: No thanks");
}

TEST_CASE("load_dataset reads labels, features and extra columns") {
    TempDir dir;
    write_file(dir / "d.tsv",
               "question\tanswer\tclarity_label\tevasion_label\taffirmative_questions\tmultiple_questions\tspeaker\n"
               "Will you go?\tYes.\tClear Reply\tExplicit\t1\t0\tA\n"
               "What now?\tWe will see.\t\tDodging\t\t\tB\n");
    const Dataset d = load_dataset(dir / "d.tsv");
    REQUIRE(d.size() == 2);
    CHECK(d.name == "d");
    CHECK(d.records[0].id == "0");
    CHECK(d.records[0].clarity == ClarityLabel::ClearReply);
    CHECK(d.records[0].feature_provenance == FeatureProvenance::DatasetColumn);
    CHECK(d.records[0].affirmative_question);
    CHECK(d.records[0].meta.at("speaker") == "A");
    CHECK(d.records[1].evasion == EvasionLabel::Dodging);
    CHECK(d.records[1].clarity == ClarityLabel::Ambivalent);
    CHECK(d.records[1].feature_provenance == FeatureProvenance::Heuristic);
}

TEST_CASE("load_dataset reports malformed input precisely") {
    TempDir dir;
    SUBCASE("field count") {
        write_file(dir / "d.tsv", kHeader + "q?\ta\tClear Reply\t\n" + "q?\ta\n");
        try {
            load_dataset(dir / "d.tsv");
            FAIL("expected DataError");
        } catch (const DataError& e) {
            CHECK(std::string(e.what()).find("row 3") != std::string::npos);
        }
    }
    SUBCASE("unknown label") {
        write_file(dir / "d.tsv", kHeader + "q?\ta\tSomewhat\t\n");
        try {
            load_dataset(dir / "d.tsv");
            FAIL("expected DataError");
        } catch (const DataError& e) {
            CHECK(std::string(e.what()).find("Somewhat") != std::string::npos);
        }
    }
    SUBCASE("missing answer column") {
        write_file(dir / "d.tsv", "question\tlabel\nq?\tx\n");
        CHECK_THROWS_AS(load_dataset(dir / "d.tsv"), DataError);
    }
    SUBCASE("missing file") { CHECK_THROWS_AS(load_dataset(dir / "nope.tsv"), DataError); }
}

TEST_CASE("an empty file loads as an empty dataset with a warning") {
    TempDir dir;
    write_file(dir / "empty.tsv", "");
    std::vector<std::string> warnings;
    auto previous = log::set_warning_handler([&](const std::string& m) { warnings.push_back(m); });
    const Dataset d = load_dataset(dir / "empty.tsv");
    log::set_warning_handler(previous);
    CHECK(d.empty());
    CHECK(warnings.size() == 1);
}

TEST_CASE("schema overrides map custom column names") {
    TempDir dir;
    write_file(dir / "d.csv", "q,a,label\nWill you go?,Yes.,Clear\n");
    const Schema s = Schema::from_config(
        {{"schema.question", "q"}, {"schema.answer", "a"}, {"schema.clarity", "label"}, {"schema.delimiter", "comma"}});
    const Dataset d = load_dataset(dir / "d.csv", s);
    REQUIRE(d.size() == 1);
    CHECK(d.records[0].clarity == ClarityLabel::ClearReply);
}

TEST_CASE("save_dataset and load_dataset round-trip every field") {
    TempDir dir;
    Dataset d;
    d.name = "rt";
    QAPair p;
    p.id = "a1";
    p.question = "Will you\tsign?";
    p.answer = "Line one\nline two \\ end";
    p.clarity = ClarityLabel::Ambivalent;
    p.evasion = EvasionLabel::Partial;
    p.affirmative_question = true;
    p.multiple_questions = true;
    p.feature_provenance = FeatureProvenance::DatasetColumn;
    p.source = Source::GeminiSynthetic;
    p.sample_weight = 0.7;
    p.meta["frame"] = "I will {TOPIC}";
    d.records.push_back(p);
    save_dataset(d, dir / "rt.tsv");
    const Dataset back = load_dataset(dir / "rt.tsv");
    REQUIRE(back.size() == 1);
    const auto& q = back.records[0];
    CHECK(q.id == p.id);
    CHECK(q.question == p.question);
    CHECK(q.answer == p.answer);
    CHECK(q.clarity == p.clarity);
    CHECK(q.evasion == p.evasion);
    CHECK(q.affirmative_question);
    CHECK(q.multiple_questions);
    CHECK(q.source == Source::GeminiSynthetic);
    CHECK(q.sample_weight == 0.7);
    CHECK(q.meta == p.meta);
}

TEST_CASE("stratified split of the reference training set") {
    const Dataset d = fixtures::counted_dataset(1052, 2040, 356);
    const auto [train, dev] = stratified_split(d, 0.2, 42, Task::Clarity, true);
    CHECK(train.size() == 2758);
    CHECK(dev.size() == 690);
    const auto full = class_counts(d, Task::Clarity);
    const auto dv = class_counts(dev, Task::Clarity);
    const auto tr = class_counts(train, Task::Clarity);
    for (std::size_t c = 0; c < 3; ++c) {
        CHECK(std::abs(static_cast<double>(dv[c]) - 0.2 * static_cast<double>(full[c])) <= 1.0);
        CHECK(dv[c] + tr[c] == full[c]);
    }
    // floor quotas 210/408/71 leave one record for the largest remainder (Clear Reply, 0.4).
    CHECK(dv[0] == 211);
    CHECK(dv[1] == 408);
    CHECK(dv[2] == 71);

    std::set<std::string> ids;
    for (const auto& r : train.records) ids.insert(r.id);
    for (const auto& r : dev.records) CHECK(ids.insert(r.id).second);
    CHECK(ids.size() == d.size());
}

TEST_CASE("stratified split is seed-deterministic") {
    const Dataset d = fixtures::counted_dataset(30, 50, 20);
    const auto a = stratified_split(d, 0.25, 9);
    const auto b = stratified_split(d, 0.25, 9);
    const auto c = stratified_split(d, 0.25, 10);
    auto ids = [](const Dataset& x) {
        std::vector<std::string> out;
        for (const auto& r : x.records) out.push_back(r.id);
        return out;
    };
    CHECK(ids(a.second) == ids(b.second));
    CHECK(ids(a.second) != ids(c.second));
}

TEST_CASE("stratified split rejects degenerate input") {
    CHECK_THROWS_AS(stratified_split(Dataset{}, 0.2, 1), DataError);
    const Dataset two = fixtures::counted_dataset(10, 10, 0);
    CHECK_THROWS_AS(stratified_split(two, 0.2, 1, Task::Clarity, true), DataError);
    CHECK_NOTHROW(stratified_split(two, 0.2, 1));
    CHECK_THROWS_AS(stratified_split(two, 1.0, 1), DataError);
}

TEST_CASE("class distribution includes empty classes") {
    const auto dist = class_distribution(fixtures::counted_dataset(3, 1, 0));
    CHECK(dist.at(ClarityLabel::ClearReply).count == 3);
    CHECK(dist.at(ClarityLabel::ClearNonReply).count == 0);
    CHECK(dist.at(ClarityLabel::ClearReply).fraction == doctest::Approx(0.75));
}

TEST_CASE("prediction files round-trip with canonical names") {
    TempDir dir;
    const std::vector<Prediction> preds{{"a", 0}, {"b", 2}, {"c", 1}};
    write_predictions(preds, Task::Clarity, dir / "p.tsv");
    CHECK(fixtures::read_file(dir / "p.tsv") == "a\tClear Reply\nb\tClear Non-Reply\nc\tAmbivalent\n");
    CHECK(read_predictions(dir / "p.tsv", Task::Clarity) == preds);
    write_file(dir / "bad.tsv", "a\tUnsure\n");
    CHECK_THROWS_AS(read_predictions(dir / "bad.tsv", Task::Clarity), DataError);
}
