#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <unistd.h>
#include <vector>

#include "clarity/data.hpp"
#include "clarity/eval.hpp"
#include "clarity/rng.hpp"

namespace fixtures {

namespace fs = std::filesystem;

/// Scratch directory removed on destruction.
class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = fs::temp_directory_path() /
                ("clarity-" + std::to_string(::getpid()) + "-" + std::to_string(counter.fetch_add(1)));
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& name) const { return path_ / name; }

private:
    fs::path path_;
};

inline void write_file(const fs::path& p, const std::string& content) { std::ofstream(p) << content; }

inline std::string read_file(const fs::path& p) {
    std::ifstream in(p);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Rows and columns in the order (Ambivalent, Clear Reply, Clear Non-Reply).
inline const std::vector<std::vector<long>> kTestSetMatrix{{136, 58, 12}, {23, 53, 3}, {6, 0, 17}};
inline const std::vector<std::vector<long>> kEvalSetMatrix{{91, 20, 6}, {16, 68, 1}, {12, 0, 23}};
inline const std::vector<std::string> kReportOrderNames{"Amb", "Clear", "Clear-N"};

/// Label codes for the report row/column order.
inline const std::vector<int> kReportOrderCodes{1, 0, 2};

/// Expands a count matrix in report order into (truth, prediction) code
/// vectors, one entry per evaluated pair.
inline std::pair<std::vector<int>, std::vector<int>> expand(const std::vector<std::vector<long>>& m) {
    std::vector<int> t, p;
    for (std::size_t r = 0; r < m.size(); ++r)
        for (std::size_t c = 0; c < m[r].size(); ++c)
            for (long n = 0; n < m[r][c]; ++n) {
                t.push_back(kReportOrderCodes[r]);
                p.push_back(kReportOrderCodes[c]);
            }
    return {t, p};
}

/// Small corpus whose classes are separable by answer wording. Every class
/// uses its own phrasing and topics rotate across classes.
inline clarity::Dataset toy_corpus(std::size_t n = 64, std::uint64_t seed = 7) {
    using namespace clarity;
    static const std::vector<std::string> topics{"tariffs", "the border", "health care", "the budget",
                                                 "energy prices", "the trade deal", "school funding",
                                                 "the pipeline"};
    static const std::vector<std::string> clear{"Yes. We will sign it on Monday.",
                                                "Yes, absolutely, we will sign it this week.",
                                                "Yes. The answer is yes and we will sign."};
    static const std::vector<std::string> amb{"Well, there are many factors and many views on all sides.",
                                              "Well, many people have many views and factors to weigh.",
                                              "Well, it is complicated, many factors, many views."};
    static const std::vector<std::string> nonreply{"I cannot comment on that at this time, sorry.",
                                                   "Sorry, I cannot comment on that right now.",
                                                   "I cannot comment, sorry, not at this time."};
    Rng rng(seed);
    Dataset d;
    d.name = "toy";
    for (std::size_t i = 0; i < n; ++i) {
        QAPair p;
        p.id = "toy-" + std::to_string(i);
        const std::string& topic = topics[rng.index(topics.size())];
        p.question = "What will you do about " + topic + "?";
        const int c = static_cast<int>(i % 3);
        const auto& pool = c == 0 ? clear : c == 1 ? amb : nonreply;
        p.answer = pool[rng.index(pool.size())];
        p.clarity = clarity_from_code(c);
        d.records.push_back(std::move(p));
    }
    return d;
}

/// Dataset with exact per-class counts (ClearReply, Ambivalent, ClearNonReply).
inline clarity::Dataset counted_dataset(std::size_t clear, std::size_t amb, std::size_t nonreply) {
    using namespace clarity;
    Dataset d;
    d.name = "counted";
    auto add = [&](ClarityLabel l, std::size_t n, const std::string& answer) {
        for (std::size_t i = 0; i < n; ++i) {
            QAPair p;
            p.id = "r" + std::to_string(d.records.size());
            p.question = "Will you act on issue number " + std::to_string(i) + "?";
            p.answer = answer + " " + std::to_string(i) + ".";
            p.clarity = l;
            d.records.push_back(std::move(p));
        }
    };
    add(ClarityLabel::ClearReply, clear, "Yes, we will act on item");
    add(ClarityLabel::Ambivalent, amb, "There are many views on item");
    add(ClarityLabel::ClearNonReply, nonreply, "I cannot comment on item");
    return d;
}

}  // namespace fixtures
