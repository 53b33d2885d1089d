#include <doctest.h>

#include <json.hpp>
#include <sstream>

#include "clarity/cli.hpp"
#include "clarity/data.hpp"
#include "clarity/error.hpp"
#include "fixtures.hpp"

using namespace clarity;
using fixtures::TempDir;
using nlohmann::json;

namespace {

struct Outcome {
    int code = 0;
    std::string out, err;
};

Outcome run(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

json manifest(const fixtures::fs::path& dir) { return json::parse(fixtures::read_file(dir / "manifest.json")); }

/// Gold file and prediction file realizing a report-order count matrix.
void write_matrix_pair(const std::vector<std::vector<long>>& table, const fixtures::fs::path& gold,
                       const fixtures::fs::path& pred) {
    const auto [t, p] = fixtures::expand(table);
    Dataset d;
    std::vector<Prediction> preds;
    for (std::size_t i = 0; i < t.size(); ++i) {
        QAPair q;
        q.id = "e" + std::to_string(i);
        q.question = "Will you?";
        q.answer = "Answer " + std::to_string(i);
        q.clarity = clarity_from_code(t[i]);
        d.records.push_back(q);
        preds.push_back({q.id, p[i]});
    }
    save_dataset(d, gold);
    write_predictions(preds, Task::Clarity, pred);
}

const std::vector<std::string> kFastTraining{"--set", "model_id=tiny-encoder-small", "max_sequence_length=48",
                                             "max_epochs=1", "micro_batch=4", "accumulation_steps=1"};

std::vector<std::string> with(std::vector<std::string> a, const std::vector<std::string>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

}  // namespace

TEST_CASE("usage errors exit with code 1") {
    CHECK(run({}).code == 1);
    CHECK(run({"frobnicate"}).code == 1);
    CHECK(run({"evaluate", "--gold"}).code == 1);
    TempDir dir;
    CHECK(run({"evaluate", "--gold", (dir / "g.tsv").string()}).code == 1);
}

TEST_CASE("evaluate prints the report for matching gold and predictions") {
    TempDir dir;
    write_matrix_pair(fixtures::kTestSetMatrix, dir / "gold.tsv", dir / "pred.tsv");
    const auto r = run({"evaluate", "--gold", (dir / "gold.tsv").string(), "--pred", (dir / "pred.tsv").string(),
                        "--out", (dir / "eval").string()});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("Macro F1: 0.6364") != std::string::npos);
    CHECK(fixtures::fs::exists(dir / "eval" / "matrix.tsv"));
    CHECK(fixtures::fs::exists(dir / "eval" / "report.md"));
    const json m = manifest(dir / "eval");
    CHECK(m["status"] == "ok");
    CHECK(m["inputs"].size() == 2);
    CHECK(m["inputs"][0]["sha256"].get<std::string>().size() == 64);

    const auto rep = run({"report", "--matrix", (dir / "eval" / "matrix.tsv").string(), "--format", "markdown"});
    REQUIRE(rep.code == 0);
    CHECK(rep.out.find("**Macro F1: 0.6364**") != std::string::npos);
}

TEST_CASE("mismatched prediction ids are a data error") {
    TempDir dir;
    write_matrix_pair({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}, dir / "gold.tsv", dir / "pred.tsv");
    fixtures::write_file(dir / "short.tsv", "e0\tAmbivalent\n");
    const auto r = run({"evaluate", "--gold", (dir / "gold.tsv").string(), "--pred", (dir / "short.tsv").string()});
    CHECK(r.code == 2);
    CHECK_FALSE(r.err.empty());
}

TEST_CASE("full-balance augmentation of the reference distribution") {
    TempDir dir;
    save_dataset(fixtures::counted_dataset(1052, 2040, 356), dir / "train.tsv");
    const auto r = run({"augment", "--train", (dir / "train.tsv").string(), "--mode", "full-balance", "--kind",
                        "casa", "--seed", "3", "--out", (dir / "aug").string()});
    REQUIRE(r.code == 0);
    const json m = manifest(dir / "aug");
    CHECK(m["results"]["generated"] == 2672);
    CHECK(m["results"]["total_after"] == 6120);
    CHECK(m["config"]["seed"]["value"] == "3");
    CHECK(m["config"]["seed"]["origin"] == "flag");
    const Dataset out = load_dataset(dir / "aug" / "augmented.tsv");
    CHECK(out.size() == 6120);
    const auto counts = class_counts(out, Task::Clarity);
    CHECK(counts[0] == 2040);
    CHECK(counts[1] == 2040);
    CHECK(counts[2] == 2040);
}

TEST_CASE("partial augmentation reaches the configured targets") {
    TempDir dir;
    save_dataset(fixtures::counted_dataset(1052, 2040, 356), dir / "train.tsv");
    const auto r = run({"augment", "--train", (dir / "train.tsv").string(), "--mode", "partial", "--kind", "eda",
                        "--out", (dir / "aug").string()});
    REQUIRE(r.code == 0);
    const json m = manifest(dir / "aug");
    CHECK(m["results"]["generated"] == 1086);
    const auto counts = class_counts(load_dataset(dir / "aug" / "augmented.tsv"), Task::Clarity);
    CHECK(counts[0] == 1498);
    CHECK(counts[2] == 996);
}

TEST_CASE("training commands refuse evaluation data") {
    TempDir dir;
    save_dataset(fixtures::toy_corpus(12), dir / "train.tsv");
    save_dataset(fixtures::toy_corpus(12), dir / "test.tsv");
    const auto with_flag = run({"train", "--train", (dir / "train.tsv").string(), "--dev",
                                (dir / "train.tsv").string(), "--test", (dir / "test.tsv").string(), "--out",
                                (dir / "t").string()});
    CHECK(with_flag.code == 1);
    const auto by_name = run({"augment", "--train", (dir / "test.tsv").string(), "--out", (dir / "a").string()});
    CHECK(by_name.code == 2);
    const json m = manifest(dir / "a");
    CHECK(m["status"] == "error");
    CHECK(m["error"].get<std::string>().find("held-out") != std::string::npos);

    fixtures::fs::copy_file(dir / "train.tsv", dir / "secret.tsv");
    const auto by_config = run({"augment", "--train", (dir / "secret.tsv").string(), "--set",
                                "heldout=" + (dir / "secret.tsv").string(), "--out", (dir / "b").string()});
    CHECK(by_config.code == 2);
}

TEST_CASE("a constant dev set stops training with code 3") {
    TempDir dir;
    save_dataset(fixtures::toy_corpus(12), dir / "train.tsv");
    save_dataset(fixtures::counted_dataset(0, 4, 0), dir / "dev.tsv");
    const auto r = run(with({"train", "--train", (dir / "train.tsv").string(), "--dev", (dir / "dev.tsv").string(),
                             "--out", (dir / "t").string()},
                            kFastTraining));
    CHECK(r.code == 3);
    CHECK(r.err.find("degenerate") != std::string::npos);
}

TEST_CASE("config file values yield to flags") {
    TempDir dir;
    fixtures::write_file(dir / "run.cfg", "# run settings\nseed = 11\ndev_fraction = 0.25\n");
    save_dataset(fixtures::counted_dataset(20, 20, 8), dir / "all.tsv");
    REQUIRE(run({"prepare", "--config", (dir / "run.cfg").string(), "--train", (dir / "all.tsv").string(), "--out",
                 (dir / "p1").string()})
                .code == 0);
    json m = manifest(dir / "p1");
    CHECK(m["config"]["seed"]["value"] == "11");
    CHECK(m["config"]["seed"]["origin"] == "file");
    CHECK(m["results"]["dev"] == 12);
    REQUIRE(run({"prepare", "--config", (dir / "run.cfg").string(), "--seed", "12", "--train",
                 (dir / "all.tsv").string(), "--out", (dir / "p2").string()})
                .code == 0);
    m = manifest(dir / "p2");
    CHECK(m["config"]["seed"]["value"] == "12");
    CHECK(m["config"]["seed"]["origin"] == "flag");
    fixtures::write_file(dir / "bad.cfg", "no equals sign\n");
    CHECK(run({"prepare", "--config", (dir / "bad.cfg").string(), "--train", (dir / "all.tsv").string(), "--out",
               (dir / "p3").string()})
              .code == 1);
}

TEST_CASE("prepare is deterministic for a fixed seed") {
    TempDir dir;
    save_dataset(fixtures::counted_dataset(20, 30, 10), dir / "all.tsv");
    for (const char* name : {"a", "b"})
        REQUIRE(run({"prepare", "--train", (dir / "all.tsv").string(), "--seed", "4", "--out", (dir / name).string()})
                    .code == 0);
    CHECK(fixtures::read_file(dir / "a" / "dev.tsv") == fixtures::read_file(dir / "b" / "dev.tsv"));
    CHECK(manifest(dir / "a")["outputs"][0]["sha256"] == manifest(dir / "b")["outputs"][0]["sha256"]);
}

TEST_CASE("train, predict and baseline write their artifacts") {
    TempDir dir;
    const auto [train, dev] = stratified_split(fixtures::toy_corpus(30, 5), 0.3, 1);
    save_dataset(train, dir / "train.tsv");
    save_dataset(dev, dir / "dev.tsv");
    REQUIRE(run(with({"train", "--train", (dir / "train.tsv").string(), "--dev", (dir / "dev.tsv").string(), "--out",
                      (dir / "t").string()},
                     kFastTraining))
                .code == 0);
    CHECK(fixtures::fs::exists(dir / "t" / "history.tsv"));
    CHECK(fixtures::fs::exists(dir / "t" / "checkpoint" / "weights.txt"));

    REQUIRE(run({"predict", "--model", (dir / "t").string(), "--dev", (dir / "dev.tsv").string(), "--out",
                 (dir / "p").string()})
                .code == 0);
    const auto preds = read_predictions(dir / "p" / "predictions.tsv", Task::Clarity);
    CHECK(preds.size() == dev.size());

    const auto b = run({"baseline", "--kind", "logreg", "--train", (dir / "train.tsv").string(), "--test",
                        (dir / "dev.tsv").string(), "--out", (dir / "b").string()});
    REQUIRE(b.code == 0);
    CHECK(fixtures::fs::exists(dir / "b" / "comparison.md"));
    CHECK(fixtures::fs::exists(dir / "b" / "predictions.tsv"));
}

TEST_CASE("config files parse key=value lines") {
    TempDir dir;
    fixtures::write_file(dir / "c.cfg", "a = 1\n# skip\n\nb=x y\nflag=true\n");
    cli::Config c = cli::Config::load(dir / "c.cfg");
    CHECK(c.get_int("a", 0) == 1);
    CHECK(c.get("b", "") == "x y");
    CHECK(c.get_bool("flag", false));
    CHECK(c.get_double("missing", 2.5) == 2.5);
    c.set("a", "2", "flag");
    CHECK(c.get_int("a", 0) == 2);
    CHECK(cli::sha256_file(dir / "c.cfg").size() == 64);
}
