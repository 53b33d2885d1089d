#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "clarity/generator.hpp"

#include <cstdlib>
#include <httplib.h>
#include <json.hpp>
#include <sstream>

#include "clarity/error.hpp"
#include "clarity/text.hpp"

namespace clarity {

std::string TemplateGeneratorClient::generate(const std::string& prompt) {
    std::optional<std::string> frame;
    std::optional<std::string> context;
    std::istringstream in(prompt);
    std::string line;
    while (std::getline(in, line)) {
        if (!frame && line.rfind("Frame: ", 0) == 0) frame = line.substr(7);
        if (!context && line.rfind("Context: ", 0) == 0) context = line.substr(9);
    }
    if (!frame || !context) throw DataError("template generator: prompt lacks Frame or Context line");
    RhetoricalFrame f;
    f.template_text = *frame;
    if (!well_formed(f)) throw DataError("template generator: frame has no single {TOPIC} slot");
    return fill_frame(f, *context);
}

HttpGeneratorClient::HttpGeneratorClient(Options opts) : opts_(std::move(opts)) {
    const auto scheme = opts_.endpoint.find("://");
    if (scheme == std::string::npos) throw UsageError("generator endpoint must be an http(s) URL");
    const auto slash = opts_.endpoint.find('/', scheme + 3);
    base_ = opts_.endpoint.substr(0, slash);
    path_ = slash == std::string::npos ? "/" : opts_.endpoint.substr(slash);
}

std::optional<HttpGeneratorClient::Options> HttpGeneratorClient::options_from_env(const std::string& model) {
    const char* endpoint = std::getenv("GENERATOR_ENDPOINT");
    if (!endpoint || !*endpoint) return std::nullopt;
    Options o;
    o.endpoint = endpoint;
    o.model = model;
    if (const char* key = std::getenv("GENERATOR_API_KEY")) o.api_key = key;
    return o;
}

std::string HttpGeneratorClient::generate(const std::string& prompt) {
    httplib::Client cli(base_);
    cli.set_connection_timeout(opts_.timeout);
    cli.set_read_timeout(opts_.timeout);
    httplib::Headers headers;
    if (!opts_.api_key.empty()) headers.emplace("Authorization", "Bearer " + opts_.api_key);
    const nlohmann::json body{{"model", opts_.model}, {"prompt", prompt}};
    auto res = cli.Post(path_, headers, body.dump(), "application/json");
    if (!res) throw DataError("generator request failed: " + httplib::to_string(res.error()));
    if (res->status != 200) throw DataError("generator returned HTTP " + std::to_string(res->status));
    const auto reply = nlohmann::json::parse(res->body, nullptr, false);
    if (reply.is_discarded() || !reply.contains("text") || !reply["text"].is_string())
        throw DataError("generator response has no \"text\" field");
    return text::trim(reply["text"].get<std::string>());
}

}  // namespace clarity
