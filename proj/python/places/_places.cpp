#include "places/corpus.hpp"
#include "places/error.hpp"
#include "places/evaluation.hpp"
#include "places/llm.hpp"
#include "places/metrics.hpp"
#include "places/parser.hpp"
#include "places/pipeline.hpp"
#include "places/prompt.hpp"

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <algorithm>

namespace py = pybind11;
using namespace places;

namespace {

std::vector<Conversation> parse_lines(std::vector<std::string> const & lines)
{
    std::vector<Conversation> out;
    out.reserve(lines.size());
    for (std::size_t i = 0; i < lines.size(); ++i) {
        out.push_back(parse_conversation_line(lines[i], i + 1));
    }
    return out;
}

std::vector<RatingRecord> parse_ratings(std::vector<std::string> const & lines)
{
    std::vector<RatingRecord> out;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        out.push_back(parse_rating_line(lines[i], i + 1));
    }
    return out;
}

py::dict parse_result_dict(ParseResult const & r)
{
    py::dict d;
    d["accepted"] = r.accepted();
    d["conversation"] = r.conversation ? py::cast(format_conversation(*r.conversation)) : py::none();
    d["flags"] = std::vector<std::string>(r.flags.begin(), r.flags.end());
    d["discard_reason"] = r.discard_reason ? py::cast(std::string(to_string(*r.discard_reason))) : py::none();
    return d;
}

} // namespace

PYBIND11_MODULE(_places, m)
{
    m.doc() = "Native core of the places conversation toolkit";

    PYBIND11_CONSTINIT static py::gil_safe_call_once_and_store<py::object> storage;
    storage.call_once_and_store_result([&]() { return py::exception<Error>(m, "PlacesError", PyExc_RuntimeError); });
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) {
                std::rethrow_exception(p);
            }
        } catch (Error const & e) {
            auto const & type = storage.get_stored();
            py::object exc = type(py::str(e.what()));
            std::string kind = to_string(e.kind());
            std::replace(kind.begin(), kind.end(), ' ', '_');
            exc.attr("kind") = kind;
            exc.attr("exit_code") = exit_code_for(e.kind());
            PyErr_SetObject(type.ptr(), exc.ptr());
        }
    });

    m.def("tokenize", &tokenize, py::arg("text"));

    m.def(
        "distinct_n",
        [](std::vector<std::string> const & lines, std::size_t n, std::string const & mode) {
            auto corpus = parse_lines(lines);
            DistinctMode dm = DistinctMode::pooled;
            if (mode == "per_conversation") {
                dm = DistinctMode::per_conversation;
            } else if (mode != "pooled") {
                throw Error(ErrorKind::config, "unknown distinct mode: " + mode);
            }
            return distinct_n(corpus, n, dm);
        },
        py::arg("conversations"), py::arg("n"), py::arg("mode") = "pooled");

    m.def(
        "corpus_stats",
        [](std::vector<std::string> const & lines, std::string const & corpus_id, bool per_speaker) {
            StatsOptions opts;
            opts.corpus_id = corpus_id;
            opts.per_speaker = per_speaker;
            return report_to_json(corpus_stats(parse_lines(lines), opts));
        },
        py::arg("conversations"), py::arg("corpus_id") = "corpus", py::arg("per_speaker") = false);

    m.def(
        "report_dataset",
        [](std::filesystem::path const & path) { return dataset_report_to_json(report_dataset(path)); },
        py::arg("path"));

    m.def(
        "render_header",
        [](std::string const & recipe, bool prefer_subtopic) { return render_header(parse_recipe_line(recipe, 1), prefer_subtopic); },
        py::arg("recipe"), py::arg("prefer_subtopic") = true);

    m.def(
        "build_prompt",
        [](std::filesystem::path const & seeds, std::string const & recipe, std::uint64_t rng_seed, std::size_t k) {
            auto target = parse_recipe_line(recipe, 1);
            PromptSpec spec;
            spec.rng_seed = rng_seed;
            spec.k = k;
            spec.party_size = static_cast<int>(target.participants.size());
            auto p = build_prompt(load_seed_pool(seeds), target, spec);
            py::dict d;
            d["text"] = p.text;
            d["example_ids"] = p.example_ids;
            d["cue_speaker"] = p.cue_speaker;
            return d;
        },
        py::arg("seeds_path"), py::arg("recipe"), py::arg("rng_seed"), py::arg("k") = 3);

    m.def(
        "parse_completion",
        [](std::string const & raw, std::string const & recipe, std::string const & cue_speaker) {
            return parse_result_dict(parse_completion(raw, parse_recipe_line(recipe, 1), cue_speaker));
        },
        py::arg("raw"), py::arg("recipe"), py::arg("cue_speaker"));

    m.def(
        "validate",
        [](std::string const & conversation, std::string const & recipe) {
            ValidationPolicy policy;
            return parse_result_dict(validate(parse_conversation_line(conversation, 1), parse_recipe_line(recipe, 1), policy));
        },
        py::arg("conversation"), py::arg("recipe"));

    m.def(
        "sample_excerpt",
        [](std::string const & conversation, std::uint64_t rng_seed, std::size_t min_len, std::size_t max_len) {
            return format_conversation(sample_excerpt(parse_conversation_line(conversation, 1), rng_seed, min_len, max_len));
        },
        py::arg("conversation"), py::arg("rng_seed"), py::arg("min_len") = 8, py::arg("max_len") = 12);

    m.def(
        "aggregate_ratings",
        [](std::vector<std::string> const & lines) {
            std::vector<std::string> out;
            for (auto const & a : aggregate_ratings(parse_ratings(lines))) {
                out.push_back(format_aggregated(a));
            }
            return out;
        },
        py::arg("ratings"));

    m.def(
        "welch_t_test",
        [](std::vector<double> const & a, std::vector<double> const & b, double alpha) {
            auto r = welch_t_test(a, b, alpha);
            py::dict d;
            d["t"] = r.t;
            d["df"] = r.df;
            d["p"] = r.p;
            d["significant"] = r.significant;
            return d;
        },
        py::arg("a"), py::arg("b"), py::arg("alpha") = 0.05);

    m.def(
        "synth",
        [](std::string const & config_json, std::filesystem::path const & base_dir, std::filesystem::path const & mock_script,
           std::optional<std::size_t> write_limit, bool plan_only) {
            auto config = parse_pipeline_config(config_json, base_dir);
            SynthOptions opts;
            opts.write_limit = write_limit;
            opts.plan_only = plan_only;
            auto topics = load_topics(config.topics_path);
            auto pool = load_seed_pool(config.seeds_path);
            std::vector<MockEntry> script;
            if (!mock_script.empty()) {
                script = MockTransport::load_script(mock_script);
            }
            std::shared_ptr<Transport> transport;
            if (mock_script.empty() && !plan_only) {
                transport = std::make_shared<HttpTransport>(config.backend);
            } else {
                transport = std::make_shared<MockTransport>(std::move(script));
            }
            CompletionClient client(transport, config.backend);
            py::gil_scoped_release release;
            return summary_to_json(synth(config, topics, pool, client, opts));
        },
        py::arg("config_json"), py::arg("base_dir") = std::filesystem::path{}, py::arg("mock_script") = std::filesystem::path{},
        py::arg("write_limit") = std::nullopt, py::arg("plan_only") = false);
}
