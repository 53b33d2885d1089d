#pragma once

#include <chrono>
#include <optional>
#include <string>

#include "clarity/augment.hpp"

namespace clarity {

/// Offline stand-in for a remote model: reads the "Frame:" and "Context:"
/// lines of a CASA prompt and fills the frame's slot with the context.
class TemplateGeneratorClient : public GeneratorClient {
public:
    std::string generate(const std::string& prompt) override;
    std::string name() const override { return "template"; }
    bool deterministic() const override { return true; }
};

/// POSTs {"model": ..., "prompt": ...} as JSON and reads the "text" field of
/// the response. Throws DataError on transport or protocol failures.
class HttpGeneratorClient : public GeneratorClient {
public:
    struct Options {
        std::string endpoint;
        std::string model = "default";
        std::string api_key;
        std::chrono::seconds timeout{60};
    };

    explicit HttpGeneratorClient(Options opts);

    /// Reads GENERATOR_ENDPOINT and GENERATOR_API_KEY; nullopt when no
    /// endpoint is configured.
    static std::optional<Options> options_from_env(const std::string& model = "default");

    std::string generate(const std::string& prompt) override;
    std::string name() const override { return "http:" + opts_.model; }

private:
    Options opts_;
    std::string base_;
    std::string path_;
};

}  // namespace clarity
