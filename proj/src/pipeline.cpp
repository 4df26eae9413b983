#include "places/pipeline.hpp"

#include "places/error.hpp"
#include "places/hash.hpp"

#include <json.hpp>

#include <chrono>
#include <ctime>
#include <fstream>
#include <set>

namespace places {

namespace {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

template <typename T>
void read_field(json const & j, char const * key, T & out)
{
    if (auto it = j.find(key); it != j.end() && !it->is_null()) {
        out = it->get<T>();
    }
}

void read_ms(json const & j, char const * key, std::chrono::milliseconds & out)
{
    if (auto it = j.find(key); it != j.end() && !it->is_null()) {
        out = std::chrono::milliseconds(it->get<long long>());
    }
}

void read_path(json const & j, char const * key, std::filesystem::path const & base, std::filesystem::path & out)
{
    if (auto it = j.find(key); it != j.end() && !it->is_null()) {
        std::filesystem::path p = it->get<std::string>();
        out = (p.is_relative() && !base.empty()) ? base / p : p;
    }
}

json section(json const & j, char const * key)
{
    if (auto it = j.find(key); it != j.end()) {
        if (!it->is_object()) {
            throw Error(ErrorKind::config, std::string("config section '") + key + "' must be an object");
        }
        return *it;
    }
    return json::object();
}

std::string number_text(double v)
{
    return json(v).dump();
}

std::string join(std::vector<std::string> const & parts, char sep)
{
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) {
            out += sep;
        }
        out += parts[i];
    }
    return out;
}

std::vector<std::string> split(std::string_view text, char sep)
{
    std::vector<std::string> out;
    if (text.empty()) {
        return out;
    }
    std::size_t pos = 0;
    while (true) {
        auto next = text.find(sep, pos);
        out.emplace_back(text.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos));
        if (next == std::string_view::npos) {
            break;
        }
        pos = next + 1;
    }
    return out;
}

std::string utc_timestamp()
{
    auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string const & meta_at(Conversation const & c, char const * key)
{
    auto it = c.meta.find(key);
    if (it == c.meta.end()) {
        throw Error(ErrorKind::validation, "record '" + c.id + "' has no meta." + key);
    }
    return it->second;
}

} // namespace

void PipelineConfig::check() const
{
    spec.check();
    params.check();
    backend.check();
    policy.check();
    if (target_count < 1) {
        throw Error(ErrorKind::config, "target_count must be positive");
    }
    if (out_path.empty()) {
        throw Error(ErrorKind::config, "an output path is required");
    }
}

PipelineConfig parse_pipeline_config(std::string_view json_text, std::filesystem::path const & base_dir)
{
    PipelineConfig c;
    try {
        auto j = json::parse(json_text);
        if (!j.is_object()) {
            throw Error(ErrorKind::config, "config must be a JSON object");
        }
        read_field(j, "seed", c.rng_seed);
        read_field(j, "target_count", c.target_count);
        read_field(j, "max_regen_attempts", c.max_regen_attempts);
        read_field(j, "record_timestamps", c.record_timestamps);

        auto paths = section(j, "paths");
        read_path(paths, "seeds", base_dir, c.seeds_path);
        read_path(paths, "topics", base_dir, c.topics_path);
        read_path(paths, "out", base_dir, c.out_path);
        read_path(paths, "summary", base_dir, c.summary_path);

        auto prompt = section(j, "prompt");
        read_field(prompt, "k", c.spec.k);
        read_field(prompt, "turn_budget", c.spec.turn_budget);
        read_field(prompt, "party_size", c.spec.party_size);
        read_field(prompt, "prefer_subtopic", c.spec.prefer_subtopic);
        if (prompt.contains("selection")) {
            c.spec.selection_mode = parse_selection_mode(prompt["selection"].get<std::string>());
        }

        auto gen = section(j, "generation");
        read_field(gen, "model", c.params.model);
        read_field(gen, "top_p", c.params.top_p);
        read_field(gen, "temperature", c.params.temperature);
        read_field(gen, "max_tokens", c.params.max_tokens);
        read_field(gen, "stop", c.params.stop_sequences);

        auto be = section(j, "backend");
        read_field(be, "base_url", c.backend.base_url);
        read_field(be, "max_parallel", c.backend.max_parallel);
        read_field(be, "max_retries", c.backend.max_retries);
        read_ms(be, "backoff_base_ms", c.backend.backoff_base);
        read_ms(be, "backoff_cap_ms", c.backend.backoff_cap);
        read_ms(be, "timeout_ms", c.backend.request_timeout);
        if (be.contains("api_key")) {
            throw Error(ErrorKind::config, "api_key must come from PLACES_API_KEY, not the config file");
        }

        auto pol = section(j, "policy");
        read_field(pol, "min_turns", c.policy.min_turns);
        read_field(pol, "require_all_speakers", c.policy.require_all_speakers);
        read_field(pol, "max_consecutive_same_speaker", c.policy.max_consecutive_same_speaker);
        read_field(pol, "repetition_ngram", c.policy.repetition_ngram);
        read_field(pol, "repetition_threshold", c.policy.repetition_threshold);
        read_field(pol, "topic_check", c.policy.topic_check);
        read_field(pol, "dedup_shingle", c.policy.dedup_shingle);
        read_field(pol, "dedup_jaccard", c.policy.dedup_jaccard);
        read_field(pol, "min_turn_share", c.policy.min_turn_share);
    } catch (json::exception const & e) {
        throw Error(ErrorKind::config, std::string("malformed config: ") + e.what());
    }
    return c;
}

PipelineConfig load_pipeline_config(std::filesystem::path const & path)
{
    auto in = open_input(path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_pipeline_config(text, path.parent_path());
}

std::string pipeline_config_to_json(PipelineConfig const & c)
{
    ojson j;
    j["seed"] = c.rng_seed;
    j["target_count"] = c.target_count;
    j["max_regen_attempts"] = c.max_regen_attempts;
    j["record_timestamps"] = c.record_timestamps;
    j["paths"] = {{"seeds", c.seeds_path.string()},
                  {"topics", c.topics_path.string()},
                  {"out", c.out_path.string()},
                  {"summary", c.summary_path.string()}};
    ojson prompt;
    prompt["k"] = c.spec.k;
    prompt["selection"] = to_string(c.spec.selection_mode);
    prompt["turn_budget"] = c.spec.turn_budget;
    prompt["party_size"] = c.spec.party_size;
    prompt["prefer_subtopic"] = c.spec.prefer_subtopic;
    j["prompt"] = prompt;
    ojson gen;
    gen["model"] = c.params.model;
    gen["top_p"] = c.params.top_p;
    gen["temperature"] = c.params.temperature;
    gen["max_tokens"] = c.params.max_tokens;
    gen["stop"] = c.params.stop_sequences;
    j["generation"] = gen;
    ojson be;
    be["base_url"] = c.backend.base_url;
    be["max_parallel"] = c.backend.max_parallel;
    be["max_retries"] = c.backend.max_retries;
    be["backoff_base_ms"] = c.backend.backoff_base.count();
    be["backoff_cap_ms"] = c.backend.backoff_cap.count();
    be["timeout_ms"] = c.backend.request_timeout.count();
    j["backend"] = be;
    ojson pol;
    pol["min_turns"] = c.policy.min_turns;
    pol["require_all_speakers"] = c.policy.require_all_speakers;
    pol["max_consecutive_same_speaker"] = c.policy.max_consecutive_same_speaker;
    pol["repetition_ngram"] = c.policy.repetition_ngram;
    pol["repetition_threshold"] = c.policy.repetition_threshold;
    pol["topic_check"] = c.policy.topic_check;
    pol["dedup_shingle"] = c.policy.dedup_shingle;
    pol["dedup_jaccard"] = c.policy.dedup_jaccard;
    pol["min_turn_share"] = c.policy.min_turn_share;
    j["policy"] = pol;
    return j.dump(2);
}

SynthPlan plan_synth(PipelineConfig const & config, TopicList const & topics)
{
    SynthPlan plan;
    for (std::size_t e = 0; e < topics.entries.size(); ++e) {
        auto const & entry = topics.entries[e];
        if (static_cast<int>(entry.recipe.participants.size()) != config.spec.party_size) {
            throw Error(ErrorKind::config,
                        "recipe '" + entry.recipe.id + "' has " + std::to_string(entry.recipe.participants.size())
                            + " participants, run party size is " + std::to_string(config.spec.party_size));
        }
        auto const count = entry.count.value_or(config.target_count);
        for (std::size_t i = 0; i < count; ++i) {
            plan.slots.push_back(SynthSlot{content_hash({"synth", entry.recipe.id, std::to_string(i)}), e, i});
        }
    }
    return plan;
}

RenderedPrompt prompt_for_attempt(PipelineConfig const & config,
                                  SeedPool const & pool,
                                  Recipe const & recipe,
                                  std::string_view slot_id,
                                  unsigned attempt)
{
    PromptSpec spec = config.spec;
    spec.rng_seed = derive_seed(config.rng_seed, std::string(slot_id) + "/" + std::to_string(attempt));
    return build_prompt(pool, recipe, spec);
}

RenderedPrompt rebuild_prompt(SeedPool const & pool, Recipe const & recipe, Conversation const & record)
{
    auto ids = split(meta_at(record, "example_ids"), ',');
    bool prefer_subtopic = true;
    if (auto it = record.meta.find("prefer_subtopic"); it != record.meta.end()) {
        prefer_subtopic = it->second == "true";
    }
    return compose_prompt(pool, ids, recipe, prefer_subtopic);
}

std::string summary_to_json(SynthSummary const & s)
{
    ojson j;
    j["planned"] = s.planned;
    j["skipped_existing"] = s.skipped_existing;
    j["accepted"] = s.accepted;
    j["exhausted"] = s.exhausted;
    j["requests"] = s.requests;
    j["backend_failures"] = s.backend_failures;
    j["discards"] = ojson(s.discards);
    j["flags"] = ojson(s.flags);
    j["acceptance_rate"] = s.acceptance_rate;
    j["on_topic_rate"] = s.on_topic_rate;
    j["interrupted"] = s.interrupted;
    return j.dump(2);
}

SynthSummary synth(PipelineConfig const & config,
                   TopicList const & topics,
                   SeedPool const & pool,
                   CompletionClient const & client,
                   SynthOptions const & options)
{
    config.check();
    auto plan = plan_synth(config, topics);

    SynthSummary summary;
    summary.planned = plan.slots.size();
    if (options.plan_only) {
        return summary;
    }
    if (pool.size() == 0) {
        throw Error(ErrorKind::config, "seed pool is empty");
    }

    DatasetWriter writer(config.out_path);
    DedupIndex dedup_index(config.policy);
    std::set<std::string> existing;
    for (auto const & rec : load_dataset(config.out_path)) {
        existing.insert(rec.id);
        dedup_index.admit(rec);
    }

    std::vector<std::size_t> pending;
    for (std::size_t s = 0; s < plan.slots.size(); ++s) {
        if (existing.count(plan.slots[s].id)) {
            ++summary.skipped_existing;
        } else {
            pending.push_back(s);
        }
    }

    std::vector<unsigned> attempt(plan.slots.size(), 1);
    std::size_t parsed = 0;
    std::size_t off_topic = 0;
    std::size_t written = 0;

    auto finish = [&] {
        summary.acceptance_rate = parsed ? static_cast<double>(summary.accepted) / static_cast<double>(parsed) : 0.0;
        summary.on_topic_rate = summary.accepted
            ? static_cast<double>(summary.accepted - off_topic) / static_cast<double>(summary.accepted)
            : 0.0;
        if (!config.summary_path.empty()) {
            std::ofstream out(config.summary_path, std::ios::binary | std::ios::trunc);
            out << summary_to_json(summary) << '\n';
            if (!out) {
                throw Error(ErrorKind::io, "cannot write summary '" + config.summary_path.string() + "'");
            }
        }
    };

    while (!pending.empty()) {
        std::vector<RenderedPrompt> prompts;
        std::vector<CompletionJob> jobs;
        prompts.reserve(pending.size());
        jobs.reserve(pending.size());
        for (auto s : pending) {
            auto const & slot = plan.slots[s];
            prompts.push_back(prompt_for_attempt(config, pool, topics.entries[slot.entry].recipe, slot.id, attempt[s]));
            jobs.push_back(CompletionJob{prompts.back().text, config.params});
        }
        auto completions = client.complete_batch(jobs);
        summary.requests += jobs.size();

        std::vector<std::size_t> next;
        std::optional<Completion> failure;
        for (std::size_t i = 0; i < pending.size(); ++i) {
            auto const s = pending[i];
            auto const & slot = plan.slots[s];
            auto const & recipe = topics.entries[slot.entry].recipe;
            auto const & prompt = prompts[i];
            auto const & completion = completions[i];

            if (completion.finish_reason == FinishReason::error) {
                ++summary.backend_failures;
                if (!failure || completion.error_kind == ErrorKind::config) {
                    failure = completion;
                }
                continue;
            }
            ++parsed;

            auto result = parse_completion(completion.text, recipe, prompt.cue_speaker, completion.finish_reason);
            if (result.accepted()) {
                result = validate(*result.conversation, recipe, config.policy);
            }
            std::optional<Conversation> record;
            if (result.accepted()) {
                record = std::move(*result.conversation);
                record->id = slot.id;
                record->recipe_id = recipe.id;
                record->category = Category::full;
                record->provenance = Provenance::generated;
                if (dedup_index.is_duplicate(*record)) {
                    record.reset();
                    ++summary.discards[std::string(to_string(DiscardReason::duplicate))];
                }
            } else {
                ++summary.discards[std::string(to_string(*result.discard_reason))];
            }

            if (!record) {
                if (++attempt[s] > 1 + config.max_regen_attempts) {
                    ++summary.exhausted;
                } else {
                    next.push_back(s);
                }
                continue;
            }

            auto & meta = record->meta;
            meta["model"] = config.params.model;
            meta["top_p"] = number_text(config.params.top_p);
            meta["temperature"] = number_text(config.params.temperature);
            meta["max_tokens"] = std::to_string(config.params.max_tokens);
            meta["attempt"] = std::to_string(attempt[s]);
            meta["example_ids"] = join(prompt.example_ids, ',');
            meta["rng_seed"] = std::to_string(config.rng_seed);
            meta["prompt_hash"] = prompt_hash(prompt.text);
            meta["selection"] = std::string(to_string(config.spec.selection_mode));
            meta["k"] = std::to_string(config.spec.k);
            meta["party_size"] = std::to_string(config.spec.party_size);
            meta["prefer_subtopic"] = config.spec.prefer_subtopic ? "true" : "false";
            meta["cue"] = prompt.cue_speaker;
            meta["topic"] = recipe.subject();
            meta["finish_reason"] = std::string(to_string(completion.finish_reason));
            if (config.record_timestamps) {
                meta["created_at"] = utc_timestamp();
            }

            if (options.write_limit && written >= *options.write_limit) {
                summary.interrupted = true;
                finish();
                return summary;
            }
            dedup_index.admit(*record);
            writer.append(*record);
            ++written;
            ++summary.accepted;
            for (auto const & f : record->flags) {
                ++summary.flags[f];
            }
            if (record->flags.count(flag::off_topic)) {
                ++off_topic;
            }
        }

        if (failure) {
            finish();
            auto message = "generation stopped after a backend failure; rerun to resume: " + failure->error;
            if (failure->error_kind == ErrorKind::config) {
                throw Error(ErrorKind::config, message);
            }
            throw BackendError(message, failure->last_status);
        }
        pending = std::move(next);
    }

    finish();
    return summary;
}

DatasetReport report_dataset(std::filesystem::path const & dataset, StatsOptions options)
{
    auto records = load_dataset(dataset);
    if (records.empty()) {
        throw Error(ErrorKind::undefined_metric, "dataset '" + dataset.string() + "' is empty");
    }
    if (options.corpus_id.empty()) {
        options.corpus_id = dataset.stem().string();
    }
    DatasetReport r;
    r.metrics = corpus_stats(records, options);
    for (auto const & c : records) {
        for (auto const & f : c.flags) {
            ++r.flags[f];
        }
        ++r.categories[std::string(to_string(c.category))];
    }
    return r;
}

std::string render_dataset_report(DatasetReport const & r)
{
    std::string out = render_report_table(r.metrics);
    out += "\nflags:\n";
    if (r.flags.empty()) {
        out += "  (none)\n";
    }
    for (auto const & [f, n] : r.flags) {
        out += "  " + f + ": " + std::to_string(n) + "\n";
    }
    out += "categories:\n";
    for (auto const & [c, n] : r.categories) {
        out += "  " + c + ": " + std::to_string(n) + "\n";
    }
    return out;
}

std::string dataset_report_to_json(DatasetReport const & r)
{
    auto j = ojson::parse(report_to_json(r.metrics));
    j["flags"] = ojson(r.flags);
    j["categories"] = ojson(r.categories);
    return j.dump(2);
}

} // namespace places
