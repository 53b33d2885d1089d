#pragma once

#include <filesystem>
#include <map>
#include <ostream>
#include <string>
#include <vector>

namespace clarity::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kDataError = 2, kTrainingError = 3 };

/// key=value settings with the origin of every value.
class Config {
public:
    /// Reads "key=value" lines; '#' starts a comment.
    static Config load(const std::filesystem::path& path);

    void set(const std::string& key, const std::string& value, const std::string& origin);
    bool has(const std::string& key) const { return values_.count(key) > 0; }

    std::string get(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    long get_int(const std::string& key, long fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;

    /// Effective key -> value map, ignoring origins.
    std::map<std::string, std::string> values() const;
    const std::map<std::string, std::pair<std::string, std::string>>& entries() const noexcept { return values_; }

private:
    std::map<std::string, std::pair<std::string, std::string>> values_;  // key -> (value, origin)
};

/// Hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

/// True for files named like held-out splits ("test*", "eval*") or listed
/// under the "heldout" config key.
bool is_held_out_path(const std::filesystem::path& path, const Config& cfg);

/// Runs one subcommand; args exclude the program name. Never throws.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Process entry point: run() on argv with the standard streams.
int main_entry(int argc, char** argv);

}  // namespace clarity::cli
