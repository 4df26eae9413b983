#pragma once

#include "places/error.hpp"

#include <atomic>
#include <chrono>
#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace places {

enum class FinishReason { stop, length, error };

std::string_view to_string(FinishReason f) noexcept;

/// Decoding controls sent with every completion request.
struct GenerationParams
{
    double top_p = 0.92;
    double temperature = 1.0;
    int max_tokens = 512;
    std::vector<std::string> stop_sequences{"\n\nThe following is a conversation", "\n\n\n"};
    std::string model = "facebook/opt-30b";

    /// Throws Error(config) on out-of-range values or more than 4 stop sequences.
    void check() const;
};

struct BackendConfig
{
    std::string base_url = "http://127.0.0.1:8000/v1";
    std::string api_key;
    std::size_t max_parallel = 4;
    unsigned max_retries = 3;
    std::chrono::milliseconds backoff_base{500};
    std::chrono::milliseconds backoff_cap{30'000};
    std::chrono::milliseconds request_timeout{120'000};

    void check() const;

    /// PLACES_API_BASE overrides base_url; PLACES_API_KEY supplies the key.
    void apply_environment();

    /// Delay before retry number `attempt` (1-based): base * 2^(attempt-1),
    /// capped, scaled by a jitter factor in [0.5, 1].
    [[nodiscard]] std::chrono::milliseconds backoff(unsigned attempt, double jitter) const;
};

struct Usage
{
    std::size_t prompt_tokens = 0;
    std::size_t completion_tokens = 0;
};

struct Completion
{
    std::string text;
    FinishReason finish_reason = FinishReason::stop;
    std::optional<Usage> usage;
    std::chrono::milliseconds latency{0};
    unsigned attempts = 0;
    int last_status = 0;
    /// Set when finish_reason is error.
    std::string error;
    std::optional<ErrorKind> error_kind;
};

/// Outcome of a single request. status 200 is success, 0 a transport failure.
struct AttemptResult
{
    int status = 200;
    std::string text;
    FinishReason finish_reason = FinishReason::stop;
    std::optional<Usage> usage;
    std::string error;
};

/// One request/response exchange with a completion endpoint, no retries.
class Transport
{
public:
    virtual ~Transport() = default;
    virtual AttemptResult send(std::string const & prompt, GenerationParams const & params) = 0;
};

/// POST {base_url}/completions in the OpenAI-compatible text-completion shape.
class HttpTransport final : public Transport
{
public:
    explicit HttpTransport(BackendConfig config);
    AttemptResult send(std::string const & prompt, GenerationParams const & params) override;

    /// Request body as sent on the wire.
    static std::string request_body(std::string const & prompt, GenerationParams const & params);

private:
    BackendConfig config_;
    std::string origin_;
    std::string path_;
};

struct MockEntry
{
    /// 16-hex prompt hash, or a glob (`*`, `?`) over the full prompt text.
    std::string match;
    std::string text;
    unsigned fail_times = 0;
    int fail_status = 503;
    FinishReason finish_reason = FinishReason::stop;
};

/// Scripted transport for tests and offline runs.
///
/// Entries whose match equals the prompt hash win. Otherwise the glob entries
/// matching the prompt are used in rotation: the starting entry is picked by
/// the prompt hash and each successful call for the same prompt advances it,
/// so results do not depend on thread timing. An entry with fail_times = n
/// fails the first n times it is picked for a given prompt.
class MockTransport final : public Transport
{
public:
    explicit MockTransport(std::vector<MockEntry> script, std::chrono::milliseconds latency = {});

    /// Script file: one {"match","text","fail_times"?,"fail_status"?,"finish_reason"?} per line.
    static std::vector<MockEntry> load_script(std::filesystem::path const & path);

    AttemptResult send(std::string const & prompt, GenerationParams const & params) override;

    [[nodiscard]] std::size_t calls() const noexcept { return calls_.load(); }
    [[nodiscard]] std::size_t max_in_flight() const noexcept { return max_in_flight_.load(); }
    /// Prompts received, in arrival order.
    [[nodiscard]] std::vector<std::string> prompts() const;

private:
    std::vector<MockEntry> script_;
    std::chrono::milliseconds latency_;
    mutable std::mutex mutex_;
    std::map<std::pair<std::size_t, std::string>, unsigned> failures_;
    std::map<std::string, std::size_t> successes_;
    std::vector<std::string> prompts_;
    std::atomic<std::size_t> calls_{0};
    std::atomic<std::size_t> in_flight_{0};
    std::atomic<std::size_t> max_in_flight_{0};
};

bool glob_match(std::string_view pattern, std::string_view text);

/// Cuts `text` at the earliest stop sequence. Returns true if one was found.
bool strip_stop_sequences(std::string & text, std::span<std::string const> stops);

struct CompletionJob
{
    std::string prompt;
    GenerationParams params;
};

/// Retrying, bounded-parallel front end over a transport.
class CompletionClient
{
public:
    CompletionClient(std::shared_ptr<Transport> transport, BackendConfig config);

    /// Blocking. Retries transport failures, 429 and 5xx with capped
    /// exponential backoff. Throws Error(config) on 401/403 and BackendError
    /// on other 4xx or when retries run out.
    Completion complete(std::string const & prompt, GenerationParams const & params) const;

    /// Results in job order; at most max_parallel requests in flight. Failed
    /// jobs come back with finish_reason=error instead of throwing.
    std::vector<Completion> complete_batch(std::span<CompletionJob const> jobs) const;

    [[nodiscard]] BackendConfig const & config() const noexcept { return config_; }

private:
    std::string redact(std::string message) const;

    std::shared_ptr<Transport> transport_;
    BackendConfig config_;
};

} // namespace places
