#include "places/corpus.hpp"
#include "places/error.hpp"
#include "places/evaluation.hpp"
#include "places/hash.hpp"
#include "places/llm.hpp"
#include "places/metrics.hpp"
#include "places/parser.hpp"
#include "places/pipeline.hpp"
#include "places/prompt.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>

using namespace places;

namespace {

struct SharedFlags
{
    std::string config;
    std::uint64_t seed = 0;
    int party = 2;
    std::size_t k = 3;
    double top_p = 0.92;
    std::size_t parallel = 4;
    std::string out;
    std::string mock;

    CLI::Option * seed_opt = nullptr;
    CLI::Option * party_opt = nullptr;
    CLI::Option * k_opt = nullptr;
    CLI::Option * top_p_opt = nullptr;
    CLI::Option * parallel_opt = nullptr;
    CLI::Option * out_opt = nullptr;
};

void write_text(std::filesystem::path const & path, std::string const & text)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << text;
    if (!out.flush()) {
        throw Error(ErrorKind::io, "cannot write '" + path.string() + "'");
    }
}

std::map<std::string, Recipe> recipes_by_id(std::vector<std::filesystem::path> const & topic_files,
                                            std::vector<std::filesystem::path> const & seed_files)
{
    std::map<std::string, Recipe> out;
    for (auto const & p : topic_files) {
        for (auto & e : load_topics(p).entries) {
            out.emplace(e.recipe.id, std::move(e.recipe));
        }
    }
    for (auto const & p : seed_files) {
        for (auto & s : load_seed_pool(p).seeds) {
            out.emplace(s.recipe.id, std::move(s.recipe));
        }
    }
    return out;
}

struct SynthFlags
{
    std::string seeds;
    std::string topics;
    std::string summary;
    std::string selection;
    std::string model;
    std::string base_url;
    std::size_t target_count = 1;
    unsigned max_regen = 3;
    std::size_t turn_budget = 24;
    std::size_t limit = 0;
    long long mock_latency_ms = 0;
    bool plan_only = false;
    bool timestamps = false;
    std::vector<CLI::Option *> given;
    CLI::Option * seeds_opt = nullptr;
    CLI::Option * topics_opt = nullptr;
    CLI::Option * summary_opt = nullptr;
    CLI::Option * selection_opt = nullptr;
    CLI::Option * model_opt = nullptr;
    CLI::Option * base_url_opt = nullptr;
    CLI::Option * target_opt = nullptr;
    CLI::Option * regen_opt = nullptr;
    CLI::Option * budget_opt = nullptr;
    CLI::Option * limit_opt = nullptr;
};

PipelineConfig resolve_config(SharedFlags const & sh, SynthFlags const & sf)
{
    PipelineConfig c = sh.config.empty() ? PipelineConfig{} : load_pipeline_config(sh.config);
    if (sh.seed_opt->count()) c.rng_seed = sh.seed;
    if (sh.party_opt->count()) c.spec.party_size = sh.party;
    if (sh.k_opt->count()) c.spec.k = sh.k;
    if (sh.top_p_opt->count()) c.params.top_p = sh.top_p;
    if (sh.parallel_opt->count()) c.backend.max_parallel = sh.parallel;
    if (sh.out_opt->count()) c.out_path = sh.out;
    if (sf.seeds_opt->count()) c.seeds_path = sf.seeds;
    if (sf.topics_opt->count()) c.topics_path = sf.topics;
    if (sf.summary_opt->count()) c.summary_path = sf.summary;
    if (sf.selection_opt->count()) c.spec.selection_mode = parse_selection_mode(sf.selection);
    if (sf.model_opt->count()) c.params.model = sf.model;
    if (sf.base_url_opt->count()) c.backend.base_url = sf.base_url;
    if (sf.target_opt->count()) c.target_count = sf.target_count;
    if (sf.regen_opt->count()) c.max_regen_attempts = sf.max_regen;
    if (sf.budget_opt->count()) c.spec.turn_budget = sf.turn_budget;
    if (sf.timestamps) c.record_timestamps = true;
    c.backend.apply_environment();
    if (c.seeds_path.empty()) {
        throw Error(ErrorKind::config, "a seed file is required (--seeds or paths.seeds)");
    }
    if (c.topics_path.empty()) {
        throw Error(ErrorKind::config, "a topic file is required (--topics or paths.topics)");
    }
    c.check();
    return c;
}

std::shared_ptr<Transport> make_transport(SharedFlags const & sh, PipelineConfig const & c, long long latency_ms)
{
    if (!sh.mock.empty()) {
        return std::make_shared<MockTransport>(MockTransport::load_script(sh.mock), std::chrono::milliseconds(latency_ms));
    }
    return std::make_shared<HttpTransport>(c.backend);
}

std::vector<double> medians_for(std::filesystem::path const & path, Dimension d)
{
    std::vector<AggregatedRating> rows;
    std::string first;
    {
        auto in = open_input(path);
        std::getline(in, first);
    }
    if (first.find("\"rater_id\"") != std::string::npos) {
        auto ratings = load_ratings(path);
        rows = aggregate_ratings(ratings);
    } else {
        rows = load_aggregated(path);
    }
    std::vector<double> out;
    for (auto const & r : rows) {
        if (r.dimension == d) {
            out.push_back(r.median_score);
        }
    }
    return out;
}

} // namespace

int main(int argc, char ** argv)
{
    CLI::App app{"Few-shot synthetic conversation dataset toolkit"};
    app.require_subcommand(1);

    SharedFlags sh;
    app.add_option("--config", sh.config, "Pipeline config file (JSON)");
    sh.seed_opt = app.add_option("--seed", sh.seed, "Global RNG seed");
    sh.party_opt = app.add_option("--party", sh.party, "Participants per conversation")->check(CLI::IsMember({2, 3}));
    sh.k_opt = app.add_option("--k", sh.k, "In-context examples per prompt");
    sh.top_p_opt = app.add_option("--top-p", sh.top_p, "Nucleus sampling p");
    sh.parallel_opt = app.add_option("--parallel", sh.parallel, "Maximum concurrent requests");
    sh.out_opt = app.add_option("--out", sh.out, "Output path");
    app.add_option("--mock", sh.mock, "Mock backend script instead of HTTP");

    // synth / dump-prompts
    SynthFlags sf;
    auto add_synth_flags = [&](CLI::App * cmd) {
        sf.seeds_opt = cmd->add_option("--seeds", sf.seeds, "Seed conversation file");
        sf.topics_opt = cmd->add_option("--topics", sf.topics, "Topic file");
        sf.summary_opt = cmd->add_option("--summary", sf.summary, "Write the run summary here");
        sf.selection_opt = cmd->add_option("--selection", sf.selection, "fixed_k or turn_budget");
        sf.model_opt = cmd->add_option("--model", sf.model, "Model name sent to the backend");
        sf.base_url_opt = cmd->add_option("--base-url", sf.base_url, "Completion API base URL");
        sf.target_opt = cmd->add_option("--target-count", sf.target_count, "Conversations per topic entry");
        sf.regen_opt = cmd->add_option("--max-regen", sf.max_regen, "Regeneration attempts after a discard");
        sf.budget_opt = cmd->add_option("--turn-budget", sf.turn_budget, "Turn budget for turn_budget selection");
    };

    auto * synth_cmd = app.add_subcommand("synth", "Generate conversations for every topic entry");
    synth_cmd->fallthrough();
    add_synth_flags(synth_cmd);
    synth_cmd->add_flag("--plan-only", sf.plan_only, "Report the planned generation count and exit");
    sf.limit_opt = synth_cmd->add_option("--limit", sf.limit, "Stop after writing this many records");
    synth_cmd->add_flag("--timestamps", sf.timestamps, "Record created_at in meta");
    synth_cmd->add_option("--mock-latency-ms", sf.mock_latency_ms, "Per-call delay of the mock backend");

    auto * dump_cmd = app.add_subcommand("dump-prompts", "Print the first-attempt prompt of planned generations");
    dump_cmd->fallthrough();
    std::size_t dump_count = 1;
    dump_cmd->add_option("-n,--count", dump_count, "Number of prompts to print");
    // dump-prompts shares the synth option storage; it is only parsed once per run
    auto * dump_seeds = dump_cmd->add_option("--seeds", sf.seeds);
    auto * dump_topics = dump_cmd->add_option("--topics", sf.topics);

    std::vector<std::string> report_inputs;
    std::vector<std::string> report_topics;
    std::string report_mode = "pooled";
    bool per_speaker = false;
    auto * report_cmd = app.add_subcommand("report", "Corpus statistics, Distinct-N and flag summary");
    report_cmd->alias("stats");
    report_cmd->fallthrough();
    report_cmd->add_option("datasets", report_inputs, "Dataset files; several print a comparison")->required();
    report_cmd->add_flag("--per-speaker", per_speaker, "Per-speaker breakdown by roster position");
    report_cmd->add_option("--distinct-mode", report_mode, "pooled or per_conversation")->check(CLI::IsMember({"pooled", "per_conversation"}));
    report_cmd->add_option("--topics", report_topics, "Topic files supplying rosters");

    std::string excerpt_input;
    std::size_t excerpt_min = 8;
    std::size_t excerpt_max = 12;
    auto * excerpt_cmd = app.add_subcommand("excerpt", "Sample contiguous turn windows from each conversation");
    excerpt_cmd->fallthrough();
    excerpt_cmd->add_option("dataset", excerpt_input)->required();
    excerpt_cmd->add_option("--min", excerpt_min, "Minimum excerpt length");
    excerpt_cmd->add_option("--max", excerpt_max, "Maximum excerpt length");

    std::string validate_input;
    std::vector<std::string> validate_topics;
    std::vector<std::string> validate_seeds;
    auto * validate_cmd = app.add_subcommand("validate", "Re-run validation over a dataset");
    validate_cmd->fallthrough();
    validate_cmd->add_option("dataset", validate_input)->required();
    validate_cmd->add_option("--topics", validate_topics, "Topic files with the records' recipes");
    validate_cmd->add_option("--seeds", validate_seeds, "Seed files with the records' recipes");

    std::string dedup_input;
    auto * dedup_cmd = app.add_subcommand("dedup", "Drop exact and near-duplicate conversations");
    dedup_cmd->fallthrough();
    dedup_cmd->add_option("dataset", dedup_input)->required();

    std::string export_input;
    std::vector<std::string> export_dims;
    std::size_t export_raters = 3;
    std::size_t export_sample = 0;
    auto * export_cmd = app.add_subcommand("export-eval", "Write rating tasks for human evaluation");
    export_cmd->fallthrough();
    export_cmd->add_option("dataset", export_input)->required();
    export_cmd->add_option("--dimensions", export_dims, "Rating dimensions")->delimiter(',');
    export_cmd->add_option("--raters", export_raters, "Raters per item");
    export_cmd->add_option("--sample", export_sample, "Randomly sample this many conversations");

    std::string aggregate_input;
    auto * aggregate_cmd = app.add_subcommand("aggregate", "Median rating per conversation and dimension");
    aggregate_cmd->fallthrough();
    aggregate_cmd->add_option("ratings", aggregate_input)->required();

    std::string ttest_a;
    std::string ttest_b;
    std::string ttest_dim;
    double alpha = 0.05;
    auto * ttest_cmd = app.add_subcommand("ttest", "Welch t-test on per-conversation medians of two rating sets");
    ttest_cmd->fallthrough();
    ttest_cmd->add_option("a", ttest_a, "Ratings or aggregated file")->required();
    ttest_cmd->add_option("b", ttest_b, "Ratings or aggregated file")->required();
    ttest_cmd->add_option("--dimension", ttest_dim, "Dimension to compare")->required();
    ttest_cmd->add_option("--alpha", alpha, "Significance level");

    try {
        app.parse(argc, argv);
    } catch (CLI::ParseError const & e) {
        auto code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (*synth_cmd || *dump_cmd) {
            if (dump_seeds->count()) sf.seeds_opt = dump_seeds;
            if (dump_topics->count()) sf.topics_opt = dump_topics;
            auto config = resolve_config(sh, sf);
            auto topics = load_topics(config.topics_path);
            auto pool = load_seed_pool(config.seeds_path);

            if (*dump_cmd) {
                auto plan = plan_synth(config, topics);
                std::string text;
                for (std::size_t i = 0; i < plan.slots.size() && i < dump_count; ++i) {
                    auto const & slot = plan.slots[i];
                    auto p = prompt_for_attempt(config, pool, topics.entries[slot.entry].recipe, slot.id, 1);
                    text += "### " + slot.id + " examples=";
                    for (std::size_t j = 0; j < p.example_ids.size(); ++j) {
                        text += (j ? "," : "") + p.example_ids[j];
                    }
                    text += "\n" + p.text + "\n";
                }
                if (sh.out_opt->count()) {
                    write_text(sh.out, text);
                } else {
                    std::cout << text;
                }
                return 0;
            }

            SynthOptions opts;
            opts.plan_only = sf.plan_only;
            if (sf.limit_opt->count()) {
                opts.write_limit = sf.limit;
            }
            if (sf.plan_only) {
                auto s = synth(config, topics, pool, CompletionClient(std::make_shared<MockTransport>(std::vector<MockEntry>{}), config.backend), opts);
                std::cout << "planned generations: " << s.planned << "\n";
                return 0;
            }
            CompletionClient client(make_transport(sh, config, sf.mock_latency_ms), config.backend);
            auto s = synth(config, topics, pool, client, opts);
            std::cout << summary_to_json(s) << "\n";
            return 0;
        }

        if (*report_cmd) {
            StatsOptions so;
            so.per_speaker = per_speaker;
            so.distinct_mode = report_mode == "pooled" ? DistinctMode::pooled : DistinctMode::per_conversation;
            for (auto const & t : report_topics) {
                for (auto const & e : load_topics(t).entries) {
                    so.rosters[e.recipe.id] = e.recipe.participants;
                }
            }
            std::vector<MetricsReport> reports;
            for (auto const & in : report_inputs) {
                auto r = report_dataset(in, so);
                std::cout << render_dataset_report(r);
                reports.push_back(r.metrics);
                if (report_inputs.size() == 1 && sh.out_opt->count()) {
                    write_text(sh.out, dataset_report_to_json(r) + "\n");
                }
            }
            if (reports.size() > 1) {
                std::cout << "\n" << render_comparison_table(reports);
                if (sh.out_opt->count()) {
                    auto arr = nlohmann::ordered_json::array();
                    for (auto const & r : reports) {
                        arr.push_back(nlohmann::ordered_json::parse(report_to_json(r)));
                    }
                    write_text(sh.out, arr.dump(2) + "\n");
                }
            }
            return 0;
        }

        if (*excerpt_cmd) {
            auto records = load_dataset(excerpt_input);
            std::vector<Conversation> out;
            for (auto const & c : records) {
                out.push_back(sample_excerpt(c, derive_seed(sh.seed, c.id), excerpt_min, excerpt_max));
            }
            if (!sh.out_opt->count()) {
                throw Error(ErrorKind::config, "excerpt needs --out");
            }
            save_dataset(out, sh.out);
            std::cout << "excerpts: " << out.size() << "\n";
            return 0;
        }

        if (*validate_cmd) {
            PipelineConfig base = sh.config.empty() ? PipelineConfig{} : load_pipeline_config(sh.config);
            std::vector<std::filesystem::path> tps(validate_topics.begin(), validate_topics.end());
            std::vector<std::filesystem::path> sps(validate_seeds.begin(), validate_seeds.end());
            auto recipes = recipes_by_id(tps, sps);
            auto records = load_dataset(validate_input);
            std::vector<Conversation> kept;
            std::map<std::string, std::size_t> reasons;
            std::map<std::string, std::size_t> flags;
            for (auto const & c : records) {
                auto it = recipes.find(c.recipe_id.empty() ? c.id : c.recipe_id);
                if (it == recipes.end()) {
                    throw Error(ErrorKind::validation, "record '" + c.id + "' references unknown recipe '" + c.recipe_id + "'");
                }
                auto r = validate(c, it->second, base.policy);
                for (auto const & f : r.flags) {
                    ++flags[f];
                }
                if (r.accepted()) {
                    kept.push_back(*r.conversation);
                } else {
                    ++reasons[std::string(to_string(*r.discard_reason))];
                    std::cout << c.id << ": discard " << to_string(*r.discard_reason) << "\n";
                }
            }
            nlohmann::ordered_json j;
            j["records"] = records.size();
            j["accepted"] = kept.size();
            j["discards"] = reasons;
            j["flags"] = flags;
            std::cout << j.dump(2) << "\n";
            if (sh.out_opt->count()) {
                save_dataset(kept, sh.out);
            }
            return kept.size() == records.size() ? 0 : 1;
        }

        if (*dedup_cmd) {
            PipelineConfig base = sh.config.empty() ? PipelineConfig{} : load_pipeline_config(sh.config);
            auto records = load_dataset(dedup_input);
            auto r = dedup(records, base.policy);
            std::cout << "kept: " << r.kept.size() << " dropped: " << r.dropped.size() << "\n";
            if (sh.out_opt->count()) {
                save_dataset(r.kept, sh.out);
            }
            return 0;
        }

        if (*export_cmd) {
            if (!sh.out_opt->count()) {
                throw Error(ErrorKind::config, "export-eval needs --out");
            }
            auto records = load_dataset(export_input);
            if (export_sample && export_sample < records.size()) {
                SeededRng rng(sh.seed);
                for (std::size_t i = 0; i < export_sample; ++i) {
                    std::swap(records[i], records[i + rng.below(records.size() - i)]);
                }
                records.resize(export_sample);
            }
            ExportOptions eo;
            if (!export_dims.empty()) {
                eo.dimensions.clear();
                for (auto const & d : export_dims) {
                    eo.dimensions.push_back(parse_dimension(d));
                }
            }
            eo.raters_per_item = export_raters;
            auto n = export_rating_tasks(records, eo, sh.out);
            std::cout << "tasks: " << n << "\n";
            return 0;
        }

        if (*aggregate_cmd) {
            auto ratings = load_ratings(aggregate_input);
            auto agg = aggregate_ratings(ratings);
            std::string lines;
            for (auto const & a : agg) {
                lines += format_aggregated(a) + "\n";
            }
            if (sh.out_opt->count()) {
                write_text(sh.out, lines);
            }
            std::set<Dimension> dims;
            for (auto const & a : agg) {
                dims.insert(a.dimension);
            }
            for (auto d : dims) {
                std::cout << to_string(d) << ": mean of medians " << *mean_of_medians(agg, d) << "\n";
            }
            return 0;
        }

        if (*ttest_cmd) {
            auto d = parse_dimension(ttest_dim);
            auto a = medians_for(ttest_a, d);
            auto b = medians_for(ttest_b, d);
            auto r = welch_t_test(a, b, alpha);
            nlohmann::ordered_json j;
            j["dimension"] = ttest_dim;
            j["n_a"] = a.size();
            j["n_b"] = b.size();
            j["t"] = r.t;
            j["df"] = r.df;
            j["p"] = r.p;
            j["significant"] = r.significant;
            std::cout << j.dump(2) << "\n";
            return 0;
        }
    } catch (Error const & e) {
        std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << "\n";
        return exit_code_for(e.kind());
    } catch (std::exception const & e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
