#pragma once

#include "places/corpus.hpp"
#include "places/llm.hpp"
#include "places/metrics.hpp"
#include "places/parser.hpp"
#include "places/prompt.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace places {

struct PipelineConfig
{
    PromptSpec spec;
    GenerationParams params;
    BackendConfig backend;
    ValidationPolicy policy;
    /// Conversations per topic entry without an explicit count.
    std::size_t target_count = 1;
    unsigned max_regen_attempts = 3;
    std::uint64_t rng_seed = 0;
    std::filesystem::path seeds_path;
    std::filesystem::path topics_path;
    std::filesystem::path out_path = "dataset.jsonl";
    /// Run summary; skipped when empty.
    std::filesystem::path summary_path;
    /// Adds a wall-clock "created_at" to each record's meta. Off by default so
    /// reruns stay byte-identical.
    bool record_timestamps = false;

    void check() const;
};

/// Reads a config document:
///   {"seed", "target_count", "max_regen_attempts", "record_timestamps",
///    "paths": {"seeds","topics","out","summary"},
///    "prompt": {"k","selection","turn_budget","party_size","prefer_subtopic"},
///    "generation": {"model","top_p","temperature","max_tokens","stop"},
///    "backend": {"base_url","max_parallel","max_retries","backoff_base_ms","backoff_cap_ms","timeout_ms"},
///    "policy": {...ValidationPolicy fields}}
/// Every key is optional. Relative paths resolve against the file's directory.
/// The API key is never read from the file; see BackendConfig::apply_environment.
PipelineConfig load_pipeline_config(std::filesystem::path const & path);
PipelineConfig parse_pipeline_config(std::string_view json_text, std::filesystem::path const & base_dir = {});
std::string pipeline_config_to_json(PipelineConfig const & config);

struct SynthSlot
{
    /// Deterministic record id.
    std::string id;
    std::size_t entry = 0;
    std::size_t ordinal = 0;
};

struct SynthPlan
{
    std::vector<SynthSlot> slots;
};

/// One slot per requested conversation, in topic-file order.
/// Throws Error(config) when a recipe's roster size differs from party_size.
SynthPlan plan_synth(PipelineConfig const & config, TopicList const & topics);

/// Prompt for one attempt at a slot; attempts draw fresh examples.
RenderedPrompt prompt_for_attempt(PipelineConfig const & config,
                                  SeedPool const & pool,
                                  Recipe const & recipe,
                                  std::string_view slot_id,
                                  unsigned attempt);

/// Rebuilds the exact prompt of a generated record from its meta.
RenderedPrompt rebuild_prompt(SeedPool const & pool, Recipe const & recipe, Conversation const & record);

struct SynthSummary
{
    std::size_t planned = 0;
    std::size_t skipped_existing = 0;
    std::size_t accepted = 0;
    std::size_t exhausted = 0;
    std::size_t requests = 0;
    std::size_t backend_failures = 0;
    std::map<std::string, std::size_t> discards;
    std::map<std::string, std::size_t> flags;
    /// Accepted conversations divided by completions parsed.
    double acceptance_rate = 0;
    /// Share of accepted conversations without OFF_TOPIC.
    double on_topic_rate = 0;
    bool interrupted = false;
};

std::string summary_to_json(SynthSummary const & s);

struct SynthOptions
{
    /// Plan and count only; no request is sent.
    bool plan_only = false;
    /// Stop after this many records have been written (simulated interruption).
    std::optional<std::size_t> write_limit;
};

/// Generates every planned slot not already present in config.out_path.
///
/// Each round sends the current attempt of every pending slot through
/// complete_batch, then parses, validates and dedups the results in slot
/// order, appending accepted records. Discarded slots retry with a new draw
/// until 1 + max_regen_attempts attempts are used. If any request fails,
/// the round's accepted records are still written and BackendError is thrown;
/// rerunning resumes from the file.
SynthSummary synth(PipelineConfig const & config,
                   TopicList const & topics,
                   SeedPool const & pool,
                   CompletionClient const & client,
                   SynthOptions const & options = {});

struct DatasetReport
{
    MetricsReport metrics;
    std::map<std::string, std::size_t> flags;
    std::map<std::string, std::size_t> categories;
};

/// corpus_stats plus Distinct-1..4 and a flag histogram over a dataset file.
/// Throws Error(undefined_metric) for an empty dataset.
DatasetReport report_dataset(std::filesystem::path const & dataset, StatsOptions options = {});
std::string render_dataset_report(DatasetReport const & r);
std::string dataset_report_to_json(DatasetReport const & r);

} // namespace places
