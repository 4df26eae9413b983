#include "mock_fixture.hpp"
#include "support.hpp"

#include "places/error.hpp"
#include "places/hash.hpp"
#include "places/pipeline.hpp"

#include <doctest.h>
#include <json.hpp>

using namespace places;

namespace {

Recipe pets()
{
    return Recipe{"pets-target", "pets", "", {"Alice", "Bob"}, {"Alice love cats.", "Bob is more of a dog person."}};
}

SeedPool const & dyadic()
{
    static SeedPool pool = load_seed_pool(support::data_file("seeds_dyadic.jsonl"));
    return pool;
}

PipelineConfig base_config(support::TempDir const & tmp)
{
    PipelineConfig c;
    c.rng_seed = 77;
    c.out_path = tmp / "out.jsonl";
    c.backend.backoff_base = std::chrono::milliseconds(1);
    c.backend.backoff_cap = std::chrono::milliseconds(2);
    c.backend.max_retries = 1;
    return c;
}

TopicList single(Recipe const & r, std::size_t count = 1)
{
    return TopicList{{TopicEntry{r, count}}};
}

} // namespace

TEST_CASE("config document with overrides of every section")
{
    support::TempDir tmp;
    support::write_file(tmp / "cfg.json", R"({
        "seed": 9, "target_count": 4, "max_regen_attempts": 1,
        "paths": {"seeds": "s.jsonl", "topics": "/abs/t.jsonl", "out": "o.jsonl"},
        "prompt": {"k": 2, "selection": "turn_budget", "turn_budget": 30, "party_size": 3, "prefer_subtopic": false},
        "generation": {"model": "m", "top_p": 0.5, "max_tokens": 64, "stop": ["\n\n"]},
        "backend": {"base_url": "http://h:1/v1", "max_parallel": 8, "max_retries": 5, "backoff_base_ms": 10, "backoff_cap_ms": 20},
        "policy": {"min_turns": 6, "dedup_jaccard": 0.8}
    })");
    auto c = load_pipeline_config(tmp / "cfg.json");
    CHECK(c.rng_seed == 9);
    CHECK(c.target_count == 4);
    CHECK(c.max_regen_attempts == 1);
    CHECK(c.seeds_path == tmp / "s.jsonl");
    CHECK(c.topics_path == "/abs/t.jsonl");
    CHECK(c.spec.k == 2);
    CHECK(c.spec.selection_mode == SelectionMode::turn_budget);
    CHECK(c.spec.turn_budget == 30);
    CHECK(c.spec.party_size == 3);
    CHECK_FALSE(c.spec.prefer_subtopic);
    CHECK(c.params.model == "m");
    CHECK(c.params.top_p == 0.5);
    CHECK(c.params.stop_sequences == std::vector<std::string>{"\n\n"});
    CHECK(c.backend.max_parallel == 8);
    CHECK(c.backend.backoff_cap.count() == 20);
    CHECK(c.policy.min_turns == 6);
    CHECK(c.policy.dedup_jaccard == 0.8);

    auto round = parse_pipeline_config(pipeline_config_to_json(c));
    CHECK(pipeline_config_to_json(round) == pipeline_config_to_json(c));
}

TEST_CASE("config errors")
{
    auto kind_of = [](std::string const & text) {
        try {
            parse_pipeline_config(text).check();
        } catch (Error const & e) {
            return e.kind();
        }
        return ErrorKind::parse;
    };
    CHECK(kind_of(R"({"backend": {"api_key": "x"}})") == ErrorKind::config);
    CHECK(kind_of(R"({"prompt": 3})") == ErrorKind::config);
    CHECK(kind_of(R"({"target_count": "many"})") == ErrorKind::config);
    CHECK(kind_of(R"({"target_count": 0})") == ErrorKind::config);
    CHECK(kind_of(R"({"generation": {"top_p": 1.5}})") == ErrorKind::config);
    CHECK(kind_of("[1,2]") == ErrorKind::config);
    CHECK(kind_of("{") == ErrorKind::config);
}

TEST_CASE("plan for 315 entries totals 5592 before any request")
{
    support::TempDir tmp;
    auto config = base_config(tmp);
    auto topics = load_topics(support::fixture("topics_315.jsonl"));
    auto mock = std::make_shared<MockTransport>(std::vector<MockEntry>{});
    CompletionClient client(mock, config.backend);
    SynthOptions opts;
    opts.plan_only = true;
    auto s = synth(config, topics, dyadic(), client, opts);
    CHECK(s.planned == 5592);
    CHECK(mock->calls() == 0);
    CHECK_FALSE(std::filesystem::exists(config.out_path));

    auto plan = plan_synth(config, topics);
    std::set<std::string> ids;
    for (auto const & slot : plan.slots) {
        ids.insert(slot.id);
    }
    CHECK(ids.size() == 5592);
}

TEST_CASE("minimal run: one pets conversation")
{
    support::TempDir tmp;
    auto config = base_config(tmp);
    auto mock = std::make_shared<MockTransport>(support::script_for(pets(), 1));
    CompletionClient client(mock, config.backend);
    auto s = synth(config, single(pets()), dyadic(), client);
    CHECK(s.accepted == 1);
    CHECK(s.requests == 1);
    CHECK(s.acceptance_rate == 1.0);
    CHECK(s.on_topic_rate == 1.0);

    auto records = load_dataset(config.out_path);
    REQUIRE(records.size() == 1);
    auto const & r = records[0];
    CHECK(r.recipe_id == "pets-target");
    CHECK(r.provenance == Provenance::generated);
    CHECK(r.turns.size() == 6);
    CHECK(r.meta.at("model") == "facebook/opt-30b");
    CHECK(r.meta.at("top_p") == "0.92");
    CHECK(r.meta.at("attempt") == "1");
    CHECK(!r.meta.at("example_ids").empty());
    CHECK(r.meta.count("created_at") == 0);

    auto rebuilt = rebuild_prompt(dyadic(), pets(), r);
    CHECK(rebuilt.text == mock->prompts().at(0));
    CHECK(prompt_hash(rebuilt.text) == r.meta.at("prompt_hash"));
}

TEST_CASE("a short first attempt is regenerated with a fresh draw")
{
    support::TempDir tmp;
    auto config = base_config(tmp);
    auto slot = plan_synth(config, single(pets())).slots.at(0);
    auto first = prompt_for_attempt(config, dyadic(), pets(), slot.id, 1);
    auto second = prompt_for_attempt(config, dyadic(), pets(), slot.id, 2);
    CHECK(first.text != second.text);

    std::vector<MockEntry> script{
        {prompt_hash(first.text), " I have a cat.\nBob: Pets are great.\n"},
        {prompt_hash(second.text), support::scripted_continuation(pets(), 3)},
    };
    auto mock = std::make_shared<MockTransport>(script);
    CompletionClient client(mock, config.backend);
    auto s = synth(config, single(pets()), dyadic(), client);
    CHECK(s.accepted == 1);
    CHECK(s.discards.at("below_min_turns") == 1);
    CHECK(s.acceptance_rate == 0.5);
    auto records = load_dataset(config.out_path);
    REQUIRE(records.size() == 1);
    CHECK(records[0].meta.at("attempt") == "2");
    CHECK(rebuild_prompt(dyadic(), pets(), records[0]).text == second.text);
}

TEST_CASE("slots give up after the regeneration budget")
{
    support::TempDir tmp;
    auto config = base_config(tmp);
    config.max_regen_attempts = 2;
    auto mock = std::make_shared<MockTransport>(std::vector<MockEntry>{{"*", " Only one line."}});
    CompletionClient client(mock, config.backend);
    auto s = synth(config, single(pets(), 2), dyadic(), client);
    CHECK(s.accepted == 0);
    CHECK(s.exhausted == 2);
    CHECK(s.requests == 6);
    CHECK(load_dataset(config.out_path).empty());
}

TEST_CASE("near-duplicate generations count as discards")
{
    support::TempDir tmp;
    auto config = base_config(tmp);
    config.max_regen_attempts = 0;
    auto mock = std::make_shared<MockTransport>(support::script_for(pets(), 1));
    CompletionClient client(mock, config.backend);
    auto s = synth(config, single(pets(), 3), dyadic(), client);
    CHECK(s.accepted == 1);
    CHECK(s.discards.at("duplicate") == 2);
}

TEST_CASE("party mismatch aborts before any request")
{
    support::TempDir tmp;
    auto config = base_config(tmp);
    config.spec.party_size = 3;
    auto mock = std::make_shared<MockTransport>(support::script_for(pets(), 1));
    CompletionClient client(mock, config.backend);
    try {
        synth(config, single(pets()), dyadic(), client);
        FAIL("expected config error");
    } catch (Error const & e) {
        CHECK(e.kind() == ErrorKind::config);
    }
    CHECK(mock->calls() == 0);
}

TEST_CASE("backend failure keeps completed records and resumes")
{
    support::TempDir tmp;
    auto config = base_config(tmp);
    Recipe art{"art", "art", "", {"Alice", "Bob"}, {"Alice paints."}};
    TopicList topics{{TopicEntry{pets(), 1}, TopicEntry{art, 1}}};

    auto broken = std::make_shared<MockTransport>(support::script_for(pets(), 1));
    CompletionClient broken_client(broken, config.backend);
    try {
        synth(config, topics, dyadic(), broken_client);
        FAIL("expected backend error");
    } catch (BackendError const & e) {
        CHECK(e.last_status() == 404);
    }
    CHECK(load_dataset(config.out_path).size() == 1);

    auto script = support::script_for(pets(), 1);
    auto more = support::script_for(art, 1);
    script.insert(script.end(), more.begin(), more.end());
    auto mock = std::make_shared<MockTransport>(script);
    CompletionClient client(mock, config.backend);
    auto s = synth(config, topics, dyadic(), client);
    CHECK(s.skipped_existing == 1);
    CHECK(s.accepted == 1);
    CHECK(mock->calls() == 1);
    CHECK(load_dataset(config.out_path).size() == 2);
}

TEST_CASE("write limit then restart equals an uninterrupted run")
{
    Recipe art{"art", "art", "", {"Alice", "Bob"}, {"Alice paints."}};
    TopicList topics{{TopicEntry{pets(), 3}, TopicEntry{art, 3}}};
    auto script = support::script_for(pets(), 4);
    auto more = support::script_for(art, 4, 10);
    script.insert(script.end(), more.begin(), more.end());

    support::TempDir whole_dir;
    auto whole = base_config(whole_dir);
    {
        CompletionClient client(std::make_shared<MockTransport>(script), whole.backend);
        CHECK(synth(whole, topics, dyadic(), client).accepted == 6);
    }
    auto expected = support::read_file(whole.out_path);

    for (std::size_t cut = 0; cut < 6; ++cut) {
        support::TempDir dir;
        auto config = base_config(dir);
        SynthOptions opts;
        opts.write_limit = cut;
        {
            CompletionClient client(std::make_shared<MockTransport>(script), config.backend);
            auto s = synth(config, topics, dyadic(), client, opts);
            CHECK(s.interrupted);
            CHECK(s.accepted == cut);
        }
        CompletionClient client(std::make_shared<MockTransport>(script), config.backend);
        synth(config, topics, dyadic(), client);
        CHECK(support::read_file(config.out_path) == expected);
    }
}

TEST_CASE("summary file and timestamps")
{
    support::TempDir tmp;
    auto config = base_config(tmp);
    config.summary_path = tmp / "summary.json";
    config.record_timestamps = true;
    CompletionClient client(std::make_shared<MockTransport>(support::script_for(pets(), 1)), config.backend);
    synth(config, single(pets()), dyadic(), client);
    auto j = nlohmann::json::parse(support::read_file(config.summary_path));
    CHECK(j["accepted"] == 1);
    CHECK(j["planned"] == 1);
    CHECK(load_dataset(config.out_path).at(0).meta.count("created_at") == 1);
}

TEST_CASE("dataset report")
{
    support::TempDir tmp;
    Conversation one;
    one.id = "x";
    one.turns = {{"Alice", "Hello there friend"}};
    one.flags = {"OFF_TOPIC"};
    std::vector<Conversation> records{one};
    save_dataset(records, tmp / "one.jsonl");
    auto r = report_dataset(tmp / "one.jsonl");
    CHECK(r.metrics.turns_per_conversation == 1.0);
    CHECK(r.metrics.corpus_id == "one");
    CHECK(r.flags.at("OFF_TOPIC") == 1);
    CHECK(render_dataset_report(r).find("OFF_TOPIC: 1") != std::string::npos);

    auto reloaded = report_from_json(dataset_report_to_json(r));
    CHECK(reloaded.turns_per_conversation == r.metrics.turns_per_conversation);
    CHECK(reloaded.words_per_turn == r.metrics.words_per_turn);
    CHECK(reloaded.distinct_n == r.metrics.distinct_n);

    support::write_file(tmp / "empty.jsonl", "");
    try {
        report_dataset(tmp / "empty.jsonl");
        FAIL("expected error");
    } catch (Error const & e) {
        CHECK(e.kind() == ErrorKind::undefined_metric);
    }

    auto seeds = report_dataset(support::data_file("seeds_dyadic.jsonl"));
    CHECK(seeds.metrics.turns_per_conversation == 8.1);
    CHECK(std::abs(seeds.metrics.words_per_turn - 11.0) <= 0.5);
}
