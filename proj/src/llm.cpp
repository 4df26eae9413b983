#include "places/llm.hpp"

#include "places/error.hpp"
#include "places/hash.hpp"

#include <httplib.h>
#include <json.hpp>

#include <algorithm>
#include <cstdlib>
#include <random>
#include <thread>

namespace places {

namespace {

bool is_transient(int status)
{
    return status == 0 || status == 429 || status >= 500;
}

double jitter_draw()
{
    thread_local std::mt19937_64 engine{std::random_device{}()};
    return 0.5 + 0.5 * std::uniform_real_distribution<double>(0.0, 1.0)(engine);
}

FinishReason parse_finish(std::string_view s)
{
    if (s == "length") return FinishReason::length;
    return FinishReason::stop;
}

bool looks_like_hash(std::string_view s)
{
    return s.size() == 16 && std::all_of(s.begin(), s.end(), [](char c) {
        return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f');
    });
}

} // namespace

std::string_view to_string(FinishReason f) noexcept
{
    switch (f) {
    case FinishReason::stop: return "stop";
    case FinishReason::length: return "length";
    case FinishReason::error: return "error";
    }
    return "error";
}

void GenerationParams::check() const
{
    if (!(top_p > 0.0 && top_p <= 1.0)) {
        throw Error(ErrorKind::config, "top_p must lie in (0, 1]");
    }
    if (!(temperature >= 0.0)) {
        throw Error(ErrorKind::config, "temperature must be nonnegative");
    }
    if (max_tokens < 1) {
        throw Error(ErrorKind::config, "max_tokens must be at least 1");
    }
    if (stop_sequences.size() > 4) {
        throw Error(ErrorKind::config, "at most 4 stop sequences are supported");
    }
}

void BackendConfig::check() const
{
    if (max_parallel < 1) {
        throw Error(ErrorKind::config, "max_parallel must be at least 1");
    }
    if (backoff_base.count() < 0 || backoff_cap < backoff_base) {
        throw Error(ErrorKind::config, "backoff cap must be at least the base delay");
    }
}

void BackendConfig::apply_environment()
{
    if (char const * base = std::getenv("PLACES_API_BASE"); base && *base) {
        base_url = base;
    }
    if (char const * key = std::getenv("PLACES_API_KEY"); key && *key) {
        api_key = key;
    }
}

std::chrono::milliseconds BackendConfig::backoff(unsigned attempt, double jitter) const
{
    double delay = static_cast<double>(backoff_base.count());
    for (unsigned i = 1; i < attempt && delay < static_cast<double>(backoff_cap.count()); ++i) {
        delay *= 2.0;
    }
    delay = std::min(delay, static_cast<double>(backoff_cap.count()));
    return std::chrono::milliseconds(static_cast<long long>(delay * std::clamp(jitter, 0.5, 1.0)));
}

bool strip_stop_sequences(std::string & text, std::span<std::string const> stops)
{
    auto cut = std::string::npos;
    for (auto const & s : stops) {
        if (s.empty()) {
            continue;
        }
        cut = std::min(cut, text.find(s));
    }
    if (cut == std::string::npos) {
        return false;
    }
    text.resize(cut);
    return true;
}

bool glob_match(std::string_view pattern, std::string_view text)
{
    std::size_t p = 0;
    std::size_t t = 0;
    std::size_t star = std::string_view::npos;
    std::size_t mark = 0;
    while (t < text.size()) {
        if (p < pattern.size() && (pattern[p] == '?' || pattern[p] == text[t])) {
            ++p;
            ++t;
        } else if (p < pattern.size() && pattern[p] == '*') {
            star = p++;
            mark = t;
        } else if (star != std::string_view::npos) {
            p = star + 1;
            t = ++mark;
        } else {
            return false;
        }
    }
    while (p < pattern.size() && pattern[p] == '*') {
        ++p;
    }
    return p == pattern.size();
}

// -- HttpTransport -------------------------------------------------------------

HttpTransport::HttpTransport(BackendConfig config)
: config_(std::move(config))
{
    auto const & url = config_.base_url;
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
        throw Error(ErrorKind::config, "base_url must include a scheme (http:// or https://)");
    }
    auto path_start = url.find('/', scheme_end + 3);
    origin_ = url.substr(0, path_start);
    path_ = path_start == std::string::npos ? std::string() : url.substr(path_start);
    while (!path_.empty() && path_.back() == '/') {
        path_.pop_back();
    }
    path_ += "/completions";
}

std::string HttpTransport::request_body(std::string const & prompt, GenerationParams const & params)
{
    nlohmann::ordered_json body;
    body["model"] = params.model;
    body["prompt"] = prompt;
    body["max_tokens"] = params.max_tokens;
    body["temperature"] = params.temperature;
    body["top_p"] = params.top_p;
    body["stop"] = params.stop_sequences;
    return body.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

AttemptResult HttpTransport::send(std::string const & prompt, GenerationParams const & params)
{
    AttemptResult out;
    httplib::Client cli(origin_);
    cli.set_connection_timeout(config_.request_timeout);
    cli.set_read_timeout(config_.request_timeout);
    cli.set_write_timeout(config_.request_timeout);
    if (!config_.api_key.empty()) {
        cli.set_bearer_token_auth(config_.api_key);
    }
    auto res = cli.Post(path_, request_body(prompt, params), "application/json");
    if (!res) {
        out.status = 0;
        out.error = "transport failure: " + httplib::to_string(res.error());
        return out;
    }
    out.status = res->status;
    if (res->status != 200) {
        out.error = "HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200);
        return out;
    }
    try {
        auto j = nlohmann::json::parse(res->body);
        auto const & choice = j.at("choices").at(0);
        out.text = choice.at("text").get<std::string>();
        if (auto fr = choice.find("finish_reason"); fr != choice.end() && fr->is_string()) {
            out.finish_reason = parse_finish(fr->get<std::string>());
        }
        if (auto u = j.find("usage"); u != j.end() && u->is_object()) {
            out.usage = Usage{u->value("prompt_tokens", std::size_t{0}), u->value("completion_tokens", std::size_t{0})};
        }
    } catch (nlohmann::json::exception const & e) {
        // a 200 with an unreadable body is treated like a server fault
        out.status = 502;
        out.error = std::string("malformed completion response: ") + e.what();
    }
    return out;
}

// -- MockTransport -------------------------------------------------------------

MockTransport::MockTransport(std::vector<MockEntry> script, std::chrono::milliseconds latency)
: script_(std::move(script))
, latency_(latency)
{}

std::vector<MockEntry> MockTransport::load_script(std::filesystem::path const & path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorKind::io, "cannot open mock script '" + path.string() + "'");
    }
    std::vector<MockEntry> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        try {
            auto j = nlohmann::json::parse(line);
            MockEntry e;
            e.match = j.at("match").get<std::string>();
            e.text = j.at("text").get<std::string>();
            e.fail_times = j.value("fail_times", 0u);
            e.fail_status = j.value("fail_status", 503);
            e.finish_reason = parse_finish(j.value("finish_reason", std::string("stop")));
            out.push_back(std::move(e));
        } catch (nlohmann::json::exception const & ex) {
            throw Error(ErrorKind::parse, "mock script line " + std::to_string(line_no) + ": " + ex.what());
        }
    }
    return out;
}

std::vector<std::string> MockTransport::prompts() const
{
    std::lock_guard lock(mutex_);
    return prompts_;
}

AttemptResult MockTransport::send(std::string const & prompt, GenerationParams const & params)
{
    auto now = ++in_flight_;
    for (auto prev = max_in_flight_.load(); now > prev && !max_in_flight_.compare_exchange_weak(prev, now);) {
    }
    ++calls_;
    if (latency_.count() > 0) {
        std::this_thread::sleep_for(latency_);
    }

    auto const key = prompt_hash(prompt);
    AttemptResult out;
    {
        std::lock_guard lock(mutex_);
        prompts_.push_back(prompt);

        std::optional<std::size_t> chosen;
        for (std::size_t i = 0; i < script_.size() && !chosen; ++i) {
            if (looks_like_hash(script_[i].match) && script_[i].match == key) {
                chosen = i;
            }
        }
        if (!chosen) {
            std::vector<std::size_t> globs;
            for (std::size_t i = 0; i < script_.size(); ++i) {
                if (!looks_like_hash(script_[i].match) && glob_match(script_[i].match, prompt)) {
                    globs.push_back(i);
                }
            }
            if (!globs.empty()) {
                auto start = Fnv1a{}.update(prompt).digest() % globs.size();
                chosen = globs[(start + successes_[key]) % globs.size()];
            }
        }

        if (!chosen) {
            out.status = 404;
            out.error = "no scripted completion for prompt " + key;
        } else {
            auto const & entry = script_[*chosen];
            auto & failed = failures_[{*chosen, key}];
            if (failed < entry.fail_times) {
                ++failed;
                out.status = entry.fail_status;
                out.error = "scripted failure";
            } else {
                ++successes_[key];
                out.text = entry.text;
                out.finish_reason = entry.finish_reason;
            }
        }
    }
    (void)params;
    --in_flight_;
    return out;
}

// -- CompletionClient ----------------------------------------------------------

CompletionClient::CompletionClient(std::shared_ptr<Transport> transport, BackendConfig config)
: transport_(std::move(transport))
, config_(std::move(config))
{
    config_.check();
}

std::string CompletionClient::redact(std::string message) const
{
    if (config_.api_key.empty()) {
        return message;
    }
    for (auto pos = message.find(config_.api_key); pos != std::string::npos; pos = message.find(config_.api_key, pos)) {
        message.replace(pos, config_.api_key.size(), "***");
    }
    return message;
}

Completion CompletionClient::complete(std::string const & prompt, GenerationParams const & params) const
{
    if (prompt.empty()) {
        throw Error(ErrorKind::config, "prompt is empty");
    }
    params.check();

    auto const started = std::chrono::steady_clock::now();
    unsigned const max_attempts = config_.max_retries + 1;
    for (unsigned attempt = 1;; ++attempt) {
        auto r = transport_->send(prompt, params);
        if (r.status == 200) {
            Completion c;
            c.text = std::move(r.text);
            c.finish_reason = r.finish_reason;
            if (strip_stop_sequences(c.text, params.stop_sequences)) {
                c.finish_reason = FinishReason::stop;
            }
            c.usage = r.usage;
            c.attempts = attempt;
            c.last_status = 200;
            c.latency = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - started);
            return c;
        }
        if (r.status == 401 || r.status == 403) {
            throw Error(ErrorKind::config, "backend rejected credentials (HTTP " + std::to_string(r.status) + ")");
        }
        if (!is_transient(r.status)) {
            throw BackendError(redact("backend refused request: " + r.error), r.status);
        }
        if (attempt >= max_attempts) {
            throw BackendError(redact("backend unavailable after " + std::to_string(attempt) + " attempts (last status "
                                      + std::to_string(r.status) + "): " + r.error),
                               r.status);
        }
        std::this_thread::sleep_for(config_.backoff(attempt, jitter_draw()));
    }
}

std::vector<Completion> CompletionClient::complete_batch(std::span<CompletionJob const> jobs) const
{
    std::vector<Completion> results(jobs.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (auto i = next++; i < jobs.size(); i = next++) {
            try {
                results[i] = complete(jobs[i].prompt, jobs[i].params);
            } catch (BackendError const & e) {
                results[i].finish_reason = FinishReason::error;
                results[i].error = e.what();
                results[i].last_status = e.last_status();
                results[i].error_kind = e.kind();
            } catch (Error const & e) {
                results[i].finish_reason = FinishReason::error;
                results[i].error = e.what();
                results[i].error_kind = e.kind();
            } catch (std::exception const & e) {
                results[i].finish_reason = FinishReason::error;
                results[i].error = redact(e.what());
                results[i].error_kind = ErrorKind::backend_unavailable;
            }
        }
    };
    auto const n = std::min(config_.max_parallel, jobs.size());
    {
        std::vector<std::jthread> pool;
        for (std::size_t t = 1; t < n; ++t) {
            pool.emplace_back(worker);
        }
        worker();
    }
    return results;
}

} // namespace places
