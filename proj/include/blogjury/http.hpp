#pragma once

// Live network adapters. Only used with --live; tests never touch these.

#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include "httplib.h"

#include <cstdlib>
#include <regex>
#include <string>
#include <utility>

#include "blogjury/common.hpp"
#include "blogjury/corpus.hpp"
#include "blogjury/jury.hpp"

namespace blogjury::http {

struct SplitUrl {
    std::string origin; // scheme://host[:port]
    std::string path;   // starts with '/'
};

inline SplitUrl split_url(std::string const& url)
{
    auto const scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw InputError("not an absolute url: " + url);
    auto const path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

/// Crude main-text extraction: drops script/style/nav/header/footer blocks
/// and tags, decodes the common entities and collapses whitespace.
inline std::string extract_main_text(std::string const& html)
{
    static std::regex const blocks(R"(<(script|style|nav|header|footer|noscript)[^>]*>[\s\S]*?</\1\s*>)",
                                   std::regex::icase);
    static std::regex const tags(R"(<[^>]*>)");
    std::string text = std::regex_replace(html, blocks, " ");
    text = std::regex_replace(text, tags, " ");
    for (auto const& [entity, ch] : std::initializer_list<std::pair<char const*, char const*>>{
             {"&nbsp;", " "}, {"&amp;", "&"}, {"&lt;", "<"}, {"&gt;", ">"}, {"&quot;", "\""}, {"&#39;", "'"}}) {
        jury::detail::replace_all(text, entity, ch);
    }
    std::string out;
    bool space = false;
    for (unsigned char c : text) {
        if (std::isspace(c)) {
            space = !out.empty();
            continue;
        }
        if (space) out += ' ';
        space = false;
        out += static_cast<char>(c);
    }
    return out;
}

class HttpFetcher final : public corpus::ContentFetcher {
public:
    explicit HttpFetcher(int timeout_seconds = 20) : timeout_(timeout_seconds) {}

    corpus::FetchResult fetch(std::string const& url) override
    {
        auto const parts = split_url(url);
        httplib::Client client(parts.origin);
        client.set_follow_location(true);
        client.set_connection_timeout(timeout_);
        client.set_read_timeout(timeout_);
        auto res = client.Get(parts.path);
        if (!res) return {false, {}, httplib::to_string(res.error())};
        if (res->status != 200) return {false, {}, "HTTP " + std::to_string(res->status)};
        return {true, extract_main_text(res->body), {}};
    }

private:
    int timeout_;
};

/// Environment variable holding a juror's API key: upper-cased id with
/// non-alphanumerics replaced by '_', suffixed with _API_KEY.
inline std::string api_key_variable(std::string_view juror_id)
{
    std::string name;
    for (unsigned char c : juror_id) name += std::isalnum(c) ? static_cast<char>(std::toupper(c)) : '_';
    return name + "_API_KEY";
}

/// Chat-completions style endpoint (OpenAI and the many compatible gateways).
class ChatCompletionsProvider final : public jury::Provider {
public:
    ChatCompletionsProvider(std::string const& juror_id, std::string base_url, std::string model,
                            std::string path = "/v1/chat/completions", int timeout_seconds = 120)
        : base_url_(std::move(base_url)), model_(std::move(model)), path_(std::move(path)), timeout_(timeout_seconds)
    {
        auto const var = api_key_variable(juror_id);
        char const* key = std::getenv(var.c_str());
        if (key == nullptr || *key == '\0') throw InputError("missing environment variable " + var);
        api_key_ = key;
    }

private:
    std::string do_send(jury::ProviderRequest const& request) override
    {
        httplib::Client client(base_url_);
        client.set_connection_timeout(timeout_);
        client.set_read_timeout(timeout_);
        client.set_bearer_token_auth(api_key_);
        json body{{"model", model_},
                  {"temperature", 0},
                  {"messages", json::array({json{{"role", "user"}, {"content", request.prompt}}})}};
        auto res = client.Post(path_, body.dump(), "application/json");
        if (!res) throw jury::TransportError(httplib::to_string(res.error()));
        if (res->status != 200) throw jury::TransportError("HTTP " + std::to_string(res->status));
        auto doc = json::parse(res->body, nullptr, false);
        if (doc.is_discarded()) throw jury::TransportError("malformed provider response");
        try {
            return doc.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (json::exception const& e) {
            throw jury::TransportError(std::string("unexpected provider response: ") + e.what());
        }
    }

    std::string base_url_;
    std::string model_;
    std::string path_;
    std::string api_key_;
    int timeout_;
};

} // namespace blogjury::http
