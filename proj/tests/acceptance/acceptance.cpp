// One PASS/FAIL line per acceptance criterion; non-zero exit if any fails.

#include "mock_fixture.hpp"
#include "support.hpp"

#include "places/corpus.hpp"
#include "places/error.hpp"
#include "places/evaluation.hpp"
#include "places/hash.hpp"
#include "places/llm.hpp"
#include "places/metrics.hpp"
#include "places/parser.hpp"
#include "places/pipeline.hpp"
#include "places/prompt.hpp"

#include <json.hpp>

#include <fcntl.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

using namespace places;

namespace {

struct Outcome
{
    bool pass = false;
    std::string detail;
};

int failures = 0;

void run(int number, std::string const & name, double limit_s, std::function<Outcome()> const & body)
{
    auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = body();
    } catch (std::exception const & e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    bool in_time = secs < limit_s;
    bool ok = o.pass && in_time;
    if (!ok) {
        ++failures;
    }
    char timing[64];
    std::snprintf(timing, sizeof timing, "%.3fs / %.0fs", secs, limit_s);
    std::cout << (ok ? "PASS" : "FAIL") << "  criterion " << number << ": " << name << " -- " << o.detail << " ["
              << timing << (in_time ? "" : ", over time limit") << "]\n";
}

// -- 1 ------------------------------------------------------------------------

Outcome seed_table_row()
{
    auto r = report_dataset(support::data_file("seeds_dyadic.jsonl"));
    auto const & m = r.metrics;
    bool turns_exact = m.total_turns == 81 && m.num_conversations == 10 && m.turns_per_conversation == 8.1;
    bool words_close = std::abs(m.words_per_turn - 11.00) <= 0.5;
    std::ostringstream d;
    d << "turns/conv=" << m.turns_per_conversation << " (81/10), words/turn=" << m.words_per_turn << " (target 11.00 +/- 0.5)";
    return {turns_exact && words_close, d.str()};
}

// -- 2 ------------------------------------------------------------------------

double brute_force_distinct(std::vector<Conversation> const & corpus, std::size_t n)
{
    std::set<std::string> seen;
    std::size_t total = 0;
    for (auto const & c : corpus) {
        for (auto const & t : c.turns) {
            std::vector<std::string> w;
            std::istringstream in(t.text);
            for (std::string tok; in >> tok;) {
                w.push_back(tok);
            }
            for (std::size_t i = 0; i + n <= w.size(); ++i) {
                std::string key;
                for (std::size_t j = i; j < i + n; ++j) {
                    key += w[j];
                    key += '\x1f';
                }
                seen.insert(key);
                ++total;
            }
        }
    }
    return total ? static_cast<double>(seen.size()) / static_cast<double>(total) : -1.0;
}

Outcome distinct_oracle()
{
    SeededRng rng(31337);
    std::size_t compared = 0;
    std::size_t mismatches = 0;
    for (int corpus_i = 0; corpus_i < 100; ++corpus_i) {
        auto vocab = rng.between(1, 20);
        auto turns = rng.between(1, 50);
        std::vector<Conversation> corpus(1);
        for (std::uint64_t t = 0; t < turns; ++t) {
            std::string text;
            auto words = rng.between(1, 8);
            for (std::uint64_t w = 0; w < words; ++w) {
                text += (w ? " " : "") + ("w" + std::to_string(rng.below(vocab)));
            }
            corpus.back().turns.push_back({t % 2 ? "Bob" : "Alice", text});
            if (rng.below(5) == 0 && t + 1 < turns) {
                corpus.emplace_back();
            }
        }
        for (std::size_t n = 1; n <= 4; ++n) {
            double expected = brute_force_distinct(corpus, n);
            if (expected < 0) {
                bool threw = false;
                try {
                    distinct_n(corpus, n);
                } catch (Error const & e) {
                    threw = e.kind() == ErrorKind::undefined_metric;
                }
                mismatches += threw ? 0 : 1;
                continue;
            }
            ++compared;
            if (distinct_n(corpus, n) != expected) {
                ++mismatches;
            }
        }
    }
    return {mismatches == 0, std::to_string(compared) + " (corpus, N) values compared exactly, " + std::to_string(mismatches)
                                 + " mismatches"};
}

// -- 3 ------------------------------------------------------------------------

Outcome pets_prompt()
{
    auto pool = load_seed_pool(support::data_file("seeds_dyadic.jsonl"));
    Recipe pets{"pets-target", "pets", "", {"Alice", "Bob"}, {"Alice love cats.", "Bob is more of a dog person."}};
    PromptSpec spec;
    spec.rng_seed = 2022;
    auto p = build_prompt(pool, pets, spec);
    auto golden = support::read_file(support::fixture("pets_prompt.txt"));
    std::string const tail =
        "\nThe following is a conversation between Alice and Bob about pets. Alice love cats. Bob is more of a dog person.\nAlice:";
    bool ends = p.text.size() >= tail.size() && p.text.compare(p.text.size() - tail.size(), tail.size(), tail) == 0;
    bool same = p.text == golden;
    return {same && ends, std::string(same ? "byte-identical" : "differs from") + " golden (" + std::to_string(golden.size())
                              + " bytes), " + (ends ? "ends with pets header + \"Alice:\"" : "wrong ending")};
}

// -- 4 ------------------------------------------------------------------------

Outcome round_trip()
{
    std::vector<std::string> const vocab{"so", "I", "went", "hiking!", "what's", "new?", "cool,", "(really)", "a:b",
                                         "\"yes\"", "50%", "naïve", "ok.", "café", "Alice", "Bob:"};
    std::vector<Recipe> const recipes{
        Recipe{"d", "hiking", "", {"Alice", "Bob"}, {}},
        Recipe{"t", "hiking", "", {"Alice", "Bob", "Claire"}, {}},
        Recipe{"n", "hiking", "", {"Ann", "Ben", "Cy"}, {}},
    };
    SeededRng rng(4);
    int ok = 0;
    for (int i = 0; i < 1000; ++i) {
        auto const & recipe = recipes[rng.below(recipes.size())];
        std::vector<Turn> turns;
        auto n = rng.between(1, 25);
        for (std::uint64_t k = 0; k < n; ++k) {
            std::string text;
            auto words = rng.between(1, 15);
            for (std::uint64_t w = 0; w < words; ++w) {
                text += (w ? " " : "") + vocab[rng.below(vocab.size())];
            }
            auto speaker = k == 0 ? recipe.participants[0] : recipe.participants[rng.below(recipe.participants.size())];
            turns.push_back({speaker, text});
        }
        auto rendered = render_turns(turns, recipe);
        auto body = rendered.substr(std::string(canonical_speakers[0]).size() + 1);
        auto parsed = parse_completion(body, recipe, recipe.participants[0]);
        if (parsed.accepted() && render_turns(parsed.conversation->turns, recipe) == rendered) {
            ++ok;
        }
    }
    return {ok == 1000, std::to_string(ok) + "/1000 conversations byte-equal after render -> parse -> render"};
}

// -- 5 ------------------------------------------------------------------------

Outcome excerpt_uniformity()
{
    Conversation c;
    c.id = "long";
    for (int i = 0; i < 100; ++i) {
        c.turns.push_back({i % 2 ? "Bob" : "Alice", "turn " + std::to_string(i)});
    }
    std::map<std::size_t, int> freq;
    int contiguous = 0;
    for (int s = 0; s < 10000; ++s) {
        auto e = sample_excerpt(c, derive_seed(5, std::to_string(s)));
        ++freq[e.turns.size()];
        auto it = std::search(c.turns.begin(), c.turns.end(), e.turns.begin(), e.turns.end());
        contiguous += (it != c.turns.end() && e.category == Category::middle_excerpt) ? 1 : 0;
    }
    bool uniform = freq.size() == 5;
    std::ostringstream d;
    for (auto const & [len, n] : freq) {
        double f = n / 10000.0;
        uniform = uniform && len >= 8 && len <= 12 && std::abs(f - 0.2) <= 0.02;
        d << "L" << len << "=" << f << " ";
    }
    d << "contiguous " << contiguous << "/10000";
    return {uniform && contiguous == 10000, d.str()};
}

// -- 6 ------------------------------------------------------------------------

Outcome median_aggregation()
{
    auto rec = [](std::string r, int s) { return RatingRecord{"c", std::move(r), Dimension::natural, s}; };
    std::vector<RatingRecord> odd{rec("a", 3), rec("b", 4), rec("c", 5)};
    std::vector<RatingRecord> even{rec("a", 4), rec("b", 5)};
    double m_odd = aggregate_ratings(odd).at(0).median_score;
    double m_even = aggregate_ratings(even).at(0).median_score;

    auto agg = aggregate_ratings(load_ratings(support::fixture("ratings_200x3.jsonl")));
    auto oracle = nlohmann::json::parse(support::read_file(support::fixture("ratings_200x3_oracle.json")));
    std::size_t matched = 0;
    for (auto const & a : agg) {
        auto key = a.conversation_id + "|" + std::string(to_string(a.dimension));
        matched += (oracle["medians"].contains(key) && oracle["medians"][key].get<double>() == a.median_score) ? 1 : 0;
    }
    bool means = true;
    for (auto const & [dim, mean] : oracle["mean_of_medians"].items()) {
        means = means && std::abs(*mean_of_medians(agg, parse_dimension(dim)) - mean.get<double>()) < 1e-12;
    }
    bool pass = m_odd == 4.0 && m_even == 4.5 && matched == oracle["medians"].size() && agg.size() == matched && means;
    std::ostringstream d;
    d << "{3,4,5}->" << m_odd << ", {4,5}->" << m_even << ", fixture medians " << matched << "/" << oracle["medians"].size()
      << (means ? ", means of medians match" : ", means of medians differ");
    return {pass, d.str()};
}

// -- 7 ------------------------------------------------------------------------

Outcome welch_reference()
{
    auto ref = nlohmann::json::parse(support::read_file(support::fixture("welch_reference.json")));
    double worst = 0;
    std::size_t n = 0;
    for (auto const & c : ref["cases"]) {
        auto r = welch_t_test(c["a"].get<std::vector<double>>(), c["b"].get<std::vector<double>>());
        worst = std::max(worst, std::abs(r.p - c["p"].get<double>()));
        ++n;
    }
    std::vector<double> g{1, 2, 3};
    auto same = welch_t_test(g, g);
    std::ostringstream d;
    d << n << " pairs, max |p - reference| = " << worst << ", identical groups p=" << same.p;
    return {n == 20 && worst <= 1e-6 && same.p == 1.0 && !same.significant, d.str()};
}

// -- 8 ------------------------------------------------------------------------

struct MockRun
{
    std::vector<Recipe> recipes;
    TopicList topics;
    std::vector<MockEntry> script;
    SeedPool pool;
};

MockRun mock_run_inputs()
{
    MockRun m;
    m.pool = load_seed_pool(support::data_file("seeds_dyadic.jsonl"));
    auto all = load_topics(support::data_file("topics_dyadic.jsonl"));
    for (std::size_t i = 0; i < 5; ++i) {
        auto const & r = all.entries[i * 7].recipe;
        m.topics.entries.push_back(TopicEntry{r, std::nullopt});
        auto s = support::script_for(r, 3, static_cast<int>(i) * 10);
        m.script.insert(m.script.end(), s.begin(), s.end());
    }
    return m;
}

PipelineConfig mock_config(std::filesystem::path const & out)
{
    PipelineConfig c;
    c.rng_seed = 20221;
    c.target_count = 2;
    c.out_path = out;
    c.backend.max_parallel = 2;
    return c;
}

int run_cli(std::vector<std::string> const & args, std::chrono::milliseconds kill_after)
{
    pid_t pid = fork();
    if (pid == 0) {
        std::vector<char *> argv;
        for (auto const & a : args) {
            argv.push_back(const_cast<char *>(a.c_str()));
        }
        argv.push_back(nullptr);
        int devnull = ::open("/dev/null", O_WRONLY);
        if (devnull >= 0) {
            dup2(devnull, 1);
        }
        execv(argv[0], argv.data());
        _exit(127);
    }
    if (kill_after.count() > 0) {
        std::this_thread::sleep_for(kill_after);
        kill(pid, SIGKILL);
    }
    int status = 0;
    waitpid(pid, &status, 0);
    return WIFEXITED(status) ? WEXITSTATUS(status) : -WTERMSIG(status);
}

Outcome end_to_end()
{
    auto m = mock_run_inputs();
    support::TempDir tmp;
    std::vector<std::string> problems;

    // uninterrupted reference run
    auto ref_cfg = mock_config(tmp / "reference.jsonl");
    auto mock = std::make_shared<MockTransport>(m.script, std::chrono::milliseconds(20));
    CompletionClient client(mock, ref_cfg.backend);
    auto summary = synth(ref_cfg, m.topics, m.pool, client);
    auto records = load_dataset(ref_cfg.out_path);
    auto reference = support::read_file(ref_cfg.out_path);
    if (records.size() != 10) {
        problems.push_back(std::to_string(records.size()) + " records");
    }
    std::set<std::string> ids;
    for (auto const & r : records) {
        ids.insert(r.id);
    }
    if (ids.size() != records.size()) {
        problems.push_back("duplicate ids");
    }
    if (mock->max_in_flight() > 2) {
        problems.push_back("in-flight peak " + std::to_string(mock->max_in_flight()));
    }

    // meta rebuilds the exact prompt the backend saw
    auto sent = mock->prompts();
    std::set<std::string> sent_set(sent.begin(), sent.end());
    std::size_t rebuilt = 0;
    for (auto const & r : records) {
        auto it = std::find_if(m.topics.entries.begin(), m.topics.entries.end(),
                               [&](TopicEntry const & e) { return e.recipe.id == r.recipe_id; });
        if (it == m.topics.entries.end()) {
            continue;
        }
        auto const & recipe = it->recipe;
        auto p = rebuild_prompt(m.pool, recipe, r);
        bool ok = sent_set.count(p.text) && prompt_hash(p.text) == r.meta.at("prompt_hash") && r.meta.count("model")
            && r.meta.count("top_p") && r.meta.count("attempt") && r.meta.count("example_ids");
        rebuilt += ok ? 1 : 0;
    }
    if (rebuilt != records.size()) {
        problems.push_back("prompt rebuilt for " + std::to_string(rebuilt) + "/" + std::to_string(records.size()));
    }

    // interrupted after every possible number of writes, then restarted
    std::size_t resumed_ok = 0;
    for (std::size_t cut = 0; cut < 10; ++cut) {
        auto cfg = mock_config(tmp / ("cut" + std::to_string(cut) + ".jsonl"));
        SynthOptions opts;
        opts.write_limit = cut;
        {
            CompletionClient c1(std::make_shared<MockTransport>(m.script), cfg.backend);
            synth(cfg, m.topics, m.pool, c1, opts);
        }
        if (cut == 5) {
            // torn final line, as left by a kill during a write
            auto text = support::read_file(cfg.out_path);
            support::write_file(cfg.out_path, text + reference.substr(text.size(), 37));
        }
        CompletionClient c2(std::make_shared<MockTransport>(m.script), cfg.backend);
        synth(cfg, m.topics, m.pool, c2);
        resumed_ok += support::read_file(cfg.out_path) == reference ? 1 : 0;
    }
    if (resumed_ok != 10) {
        problems.push_back("in-process resume equal " + std::to_string(resumed_ok) + "/10");
    }

    // real process killed with SIGKILL mid-run, then rerun
    std::string cli_note = "CLI kill/restart skipped";
    if (std::filesystem::exists(PLACES_CLI_PATH)) {
        std::string script_text;
        for (auto const & e : m.script) {
            script_text += nlohmann::json{{"match", e.match}, {"text", e.text}}.dump() + "\n";
        }
        support::write_file(tmp / "mock.jsonl", script_text);
        std::string topics_text;
        for (auto const & e : m.topics.entries) {
            topics_text += format_recipe(e.recipe) + "\n";
        }
        support::write_file(tmp / "topics.jsonl", topics_text);
        auto out = (tmp / "cli.jsonl").string();
        std::vector<std::string> args{PLACES_CLI_PATH, "synth", "--seeds", support::data_file("seeds_dyadic.jsonl").string(),
                                      "--topics", (tmp / "topics.jsonl").string(), "--target-count", "2", "--seed", "20221",
                                      "--parallel", "2", "--mock", (tmp / "mock.jsonl").string(), "--out", out,
                                      "--mock-latency-ms", "150"};
        int killed = run_cli(args, std::chrono::milliseconds(200));
        auto after_kill = std::filesystem::exists(out) ? support::read_file(out).size() : 0;
        int rc = run_cli(args, std::chrono::milliseconds(0));
        bool equal = rc == 0 && support::read_file(out) == reference;
        cli_note = "CLI SIGKILL (status " + std::to_string(killed) + ", " + std::to_string(after_kill) + " bytes on disk) + rerun "
            + (equal ? "identical" : "DIFFERS");
        if (!equal) {
            problems.push_back("CLI restart differs");
        }
    }

    std::ostringstream d;
    d << records.size() << " records, " << summary.requests << " requests, in-flight peak " << mock->max_in_flight()
      << " (limit 2), prompts rebuilt " << rebuilt << "/" << records.size() << ", resume equal " << resumed_ok << "/10, "
      << cli_note;
    for (auto const & p : problems) {
        d << "; problem: " << p;
    }
    return {problems.empty(), d.str()};
}

} // namespace

int main()
{
    run(1, "seed corpus turns/conversation and words/turn", 1, seed_table_row);
    run(2, "distinct-n equals brute-force oracle on 100 toy corpora", 5, distinct_oracle);
    run(3, "pets prompt golden", 1, pets_prompt);
    run(4, "render/parse/render round trip x1000", 5, round_trip);
    run(5, "excerpt length uniformity and contiguity x10000", 5, excerpt_uniformity);
    run(6, "median aggregation", 1, median_aggregation);
    run(7, "welch t-test against reference", 1, welch_reference);
    run(8, "end-to-end mock synth, resume, concurrency, prompt rebuild", 10, end_to_end);
    std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << "\n";
    return failures == 0 ? 0 : 1;
}
