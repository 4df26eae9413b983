#include "places/metrics.hpp"

#include "places/error.hpp"
#include "places/hash.hpp"
#include "places/prompt.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <unordered_set>

namespace places {

namespace {

bool is_ascii_punct(unsigned char c)
{
    return c < 0x80 && std::ispunct(c);
}

std::uint64_t ngram_key(std::vector<std::string> const & toks, std::size_t at, std::size_t n)
{
    Fnv1a h;
    for (std::size_t j = at; j < at + n; ++j) {
        h.field(toks[j]);
    }
    return h.digest();
}

NgramTally tally(std::span<Conversation const> corpus, std::size_t n, std::string_view only_speaker_key,
                 StatsOptions const * opts)
{
    std::unordered_set<std::uint64_t> seen;
    NgramTally out;
    for (auto const & c : corpus) {
        for (auto const & t : c.turns) {
            if (opts && "speaker_" + std::to_string(speaker_position(c, t.speaker, *opts) + 1) != only_speaker_key) {
                continue;
            }
            auto toks = tokenize(t.text);
            for (std::size_t i = 0; i + n <= toks.size(); ++i) {
                seen.insert(ngram_key(toks, i, n));
                ++out.total;
            }
        }
    }
    out.unique = seen.size();
    return out;
}

std::string fmt(double v, int prec = 4)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", prec, v);
    return buf;
}

/// Aligned text table: first column left-aligned, the rest right-aligned.
std::string render_rows(std::vector<std::vector<std::string>> const & rows)
{
    std::vector<std::size_t> width;
    for (auto const & r : rows) {
        width.resize(std::max(width.size(), r.size()), 0);
        for (std::size_t i = 0; i < r.size(); ++i) {
            width[i] = std::max(width[i], r[i].size());
        }
    }
    std::string out;
    for (std::size_t ri = 0; ri < rows.size(); ++ri) {
        auto const & r = rows[ri];
        std::string line;
        for (std::size_t i = 0; i < r.size(); ++i) {
            auto pad = std::string(width[i] - r[i].size(), ' ');
            if (i == 0) {
                line += r[i] + pad;
            } else {
                line += "  " + pad + r[i];
            }
        }
        out += line + '\n';
        if (ri == 0) {
            std::size_t total = 0;
            for (auto w : width) {
                total += w;
            }
            out += std::string(total + 2 * (width.size() - 1), '-') + '\n';
        }
    }
    return out;
}

std::vector<std::pair<std::string, double>> flatten(MetricsReport const & r)
{
    std::vector<std::pair<std::string, double>> out;
    out.emplace_back("conversations", static_cast<double>(r.num_conversations));
    out.emplace_back("turns", static_cast<double>(r.total_turns));
    out.emplace_back("words", static_cast<double>(r.total_words));
    out.emplace_back("turns/conv", r.turns_per_conversation);
    out.emplace_back("words/turn", r.words_per_turn);
    for (auto const & [n, v] : r.distinct_n) {
        out.emplace_back("distinct-" + std::to_string(n), v);
    }
    if (r.per_speaker) {
        for (auto const & [key, s] : *r.per_speaker) {
            out.emplace_back(key + " words/turn", s.words_per_turn);
            out.emplace_back(key + " turn share", s.turn_share);
            for (auto const & [n, v] : s.distinct_n) {
                out.emplace_back(key + " distinct-" + std::to_string(n), v);
            }
        }
    }
    return out;
}

char const * mode_name(DistinctMode m)
{
    return m == DistinctMode::pooled ? "pooled" : "per_conversation";
}

} // namespace

std::vector<std::string> tokenize(std::string_view text)
{
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) {
            ++i;
        }
        std::size_t j = i;
        while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) {
            ++j;
        }
        std::size_t b = i;
        std::size_t e = j;
        while (b < e && is_ascii_punct(static_cast<unsigned char>(text[b]))) {
            ++b;
        }
        while (e > b && is_ascii_punct(static_cast<unsigned char>(text[e - 1]))) {
            --e;
        }
        if (b < e) {
            std::string tok(text.substr(b, e - b));
            for (auto & c : tok) {
                if (c >= 'A' && c <= 'Z') {
                    c = static_cast<char>(c - 'A' + 'a');
                }
            }
            out.push_back(std::move(tok));
        }
        i = j;
    }
    return out;
}

NgramTally count_ngrams(std::span<Conversation const> corpus, std::size_t n)
{
    return tally(corpus, n, {}, nullptr);
}

double distinct_n(std::span<Conversation const> corpus, std::size_t n, DistinctMode mode)
{
    if (n == 0) {
        throw Error(ErrorKind::undefined_metric, "distinct-n needs n >= 1");
    }
    if (mode == DistinctMode::pooled) {
        auto t = count_ngrams(corpus, n);
        if (t.total == 0) {
            throw Error(ErrorKind::undefined_metric, "no " + std::to_string(n) + "-grams in corpus");
        }
        return static_cast<double>(t.unique) / static_cast<double>(t.total);
    }
    double sum = 0;
    std::size_t counted = 0;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        auto t = count_ngrams(corpus.subspan(i, 1), n);
        if (t.total == 0) {
            continue;
        }
        sum += static_cast<double>(t.unique) / static_cast<double>(t.total);
        ++counted;
    }
    if (counted == 0) {
        throw Error(ErrorKind::undefined_metric, "no " + std::to_string(n) + "-grams in corpus");
    }
    return sum / static_cast<double>(counted);
}

int speaker_position(Conversation const & conv, std::string_view speaker, StatsOptions const & opts)
{
    if (auto it = opts.rosters.find(conv.recipe_id); it != opts.rosters.end()) {
        auto const & roster = it->second;
        if (auto p = std::find(roster.begin(), roster.end(), speaker); p != roster.end()) {
            return static_cast<int>(p - roster.begin());
        }
    }
    for (std::size_t i = 0; i < canonical_speakers.size(); ++i) {
        if (canonical_speakers[i] == speaker) {
            return static_cast<int>(i);
        }
    }
    std::vector<std::string_view> order;
    for (auto const & t : conv.turns) {
        if (std::find(order.begin(), order.end(), t.speaker) == order.end()) {
            order.push_back(t.speaker);
        }
        if (t.speaker == speaker) {
            break;
        }
    }
    return static_cast<int>(order.size()) - 1;
}

MetricsReport corpus_stats(std::span<Conversation const> corpus, StatsOptions const & opts)
{
    if (corpus.empty()) {
        throw Error(ErrorKind::undefined_metric, "corpus is empty");
    }
    MetricsReport r;
    r.corpus_id = opts.corpus_id;
    r.distinct_mode = opts.distinct_mode;
    r.num_conversations = corpus.size();

    std::vector<double> lengths;
    std::map<std::string, SpeakerStats> speakers;
    for (auto const & c : corpus) {
        lengths.push_back(static_cast<double>(c.turns.size()));
        r.total_turns += c.turns.size();
        for (auto const & t : c.turns) {
            auto words = tokenize(t.text).size();
            r.total_words += words;
            if (opts.per_speaker) {
                auto key = "speaker_" + std::to_string(speaker_position(c, t.speaker, opts) + 1);
                auto & s = speakers[key];
                ++s.turns;
                s.words += words;
            }
        }
    }

    // exact integer totals, one division each
    r.turns_per_conversation = static_cast<double>(r.total_turns) / static_cast<double>(r.num_conversations);
    r.words_per_turn = r.total_turns ? static_cast<double>(r.total_words) / static_cast<double>(r.total_turns) : 0.0;

    std::sort(lengths.begin(), lengths.end());
    auto & s = r.turns_summary;
    s.mean = r.turns_per_conversation;
    s.min = lengths.front();
    s.max = lengths.back();
    auto mid = lengths.size() / 2;
    s.median = lengths.size() % 2 ? lengths[mid] : (lengths[mid - 1] + lengths[mid]) / 2.0;
    double ss = 0;
    for (auto v : lengths) {
        ss += (v - s.mean) * (v - s.mean);
    }
    s.stddev = lengths.size() > 1 ? std::sqrt(ss / static_cast<double>(lengths.size() - 1)) : 0.0;

    for (int n = 1; n <= 4; ++n) {
        try {
            r.distinct_n[n] = distinct_n(corpus, static_cast<std::size_t>(n), opts.distinct_mode);
        } catch (Error const &) {
            // no n-grams of this order; left absent
        }
    }

    if (opts.per_speaker) {
        for (auto & [key, sp] : speakers) {
            sp.words_per_turn = sp.turns ? static_cast<double>(sp.words) / static_cast<double>(sp.turns) : 0.0;
            sp.turn_share = static_cast<double>(sp.turns) / static_cast<double>(r.total_turns);
            for (int n = 1; n <= 4; ++n) {
                auto t = tally(corpus, static_cast<std::size_t>(n), key, &opts);
                if (t.total) {
                    sp.distinct_n[n] = static_cast<double>(t.unique) / static_cast<double>(t.total);
                }
            }
        }
        r.per_speaker = std::move(speakers);
    }
    return r;
}

ReportDiff compare_reports(MetricsReport const & a, MetricsReport const & b)
{
    if (a.tokenizer != b.tokenizer) {
        throw Error(ErrorKind::incomparable, "reports use different tokenizers ('" + a.tokenizer + "' vs '" + b.tokenizer + "')");
    }
    if (a.distinct_mode != b.distinct_mode) {
        throw Error(ErrorKind::incomparable, "reports use different Distinct-N pooling");
    }
    ReportDiff d;
    d.a_id = a.corpus_id;
    d.b_id = b.corpus_id;
    auto fa = flatten(a);
    auto fb = flatten(b);
    for (auto const & [name, va] : fa) {
        auto it = std::find_if(fb.begin(), fb.end(), [&](auto const & p) { return p.first == name; });
        if (it != fb.end()) {
            d.rows.push_back(DiffRow{name, va, it->second, it->second - va});
        }
    }
    return d;
}

std::string render_report_table(MetricsReport const & r)
{
    std::vector<std::vector<std::string>> rows;
    rows.push_back({"metric", r.corpus_id.empty() ? "value" : r.corpus_id});
    rows.push_back({"conversations", std::to_string(r.num_conversations)});
    rows.push_back({"turns", std::to_string(r.total_turns)});
    rows.push_back({"words", std::to_string(r.total_words)});
    rows.push_back({"turns/conv", fmt(r.turns_per_conversation, 2)});
    rows.push_back({"turns/conv median", fmt(r.turns_summary.median, 1)});
    rows.push_back({"turns/conv min..max", fmt(r.turns_summary.min, 0) + ".." + fmt(r.turns_summary.max, 0)});
    rows.push_back({"words/turn", fmt(r.words_per_turn, 2)});
    for (auto const & [n, v] : r.distinct_n) {
        rows.push_back({"distinct-" + std::to_string(n), fmt(v)});
    }
    auto out = render_rows(rows);
    if (r.per_speaker) {
        std::vector<std::vector<std::string>> sp;
        std::vector<std::string> head{"speaker", "turns", "share", "words/turn"};
        for (int n = 1; n <= 4; ++n) {
            head.push_back("d-" + std::to_string(n));
        }
        sp.push_back(head);
        for (auto const & [key, s] : *r.per_speaker) {
            std::vector<std::string> row{key, std::to_string(s.turns), fmt(s.turn_share, 3), fmt(s.words_per_turn, 2)};
            for (int n = 1; n <= 4; ++n) {
                auto it = s.distinct_n.find(n);
                row.push_back(it == s.distinct_n.end() ? "-" : fmt(it->second));
            }
            sp.push_back(row);
        }
        out += '\n' + render_rows(sp);
    }
    return out;
}

std::string render_diff_table(ReportDiff const & d)
{
    std::vector<std::vector<std::string>> rows;
    rows.push_back({"metric", d.a_id.empty() ? "a" : d.a_id, d.b_id.empty() ? "b" : d.b_id, "delta"});
    for (auto const & row : d.rows) {
        rows.push_back({row.metric, fmt(row.a), fmt(row.b), fmt(row.delta)});
    }
    return render_rows(rows);
}

std::string render_comparison_table(std::span<MetricsReport const> reports)
{
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> head{"metric"};
    for (auto const & r : reports) {
        head.push_back(r.corpus_id);
    }
    rows.push_back(head);
    auto add = [&](std::string const & name, auto get) {
        std::vector<std::string> row{name};
        for (auto const & r : reports) {
            row.push_back(get(r));
        }
        rows.push_back(row);
    };
    for (int n = 1; n <= 4; ++n) {
        add("distinct-" + std::to_string(n), [n](MetricsReport const & r) {
            auto it = r.distinct_n.find(n);
            return it == r.distinct_n.end() ? std::string("-") : fmt(it->second);
        });
    }
    add("words/turn", [](MetricsReport const & r) { return fmt(r.words_per_turn, 2); });
    add("turns/conv", [](MetricsReport const & r) { return fmt(r.turns_per_conversation, 2); });
    return render_rows(rows);
}

std::string report_to_json(MetricsReport const & r)
{
    nlohmann::ordered_json j;
    j["corpus_id"] = r.corpus_id;
    j["tokenizer"] = r.tokenizer;
    j["distinct_mode"] = mode_name(r.distinct_mode);
    j["num_conversations"] = r.num_conversations;
    j["total_turns"] = r.total_turns;
    j["total_words"] = r.total_words;
    j["turns_per_conversation"] = r.turns_per_conversation;
    j["turns_summary"] = {{"mean", r.turns_summary.mean},
                          {"stddev", r.turns_summary.stddev},
                          {"min", r.turns_summary.min},
                          {"median", r.turns_summary.median},
                          {"max", r.turns_summary.max}};
    j["words_per_turn"] = r.words_per_turn;
    auto dn = nlohmann::ordered_json::object();
    for (auto const & [n, v] : r.distinct_n) {
        dn[std::to_string(n)] = v;
    }
    j["distinct_n"] = dn;
    if (r.per_speaker) {
        auto ps = nlohmann::ordered_json::object();
        for (auto const & [key, s] : *r.per_speaker) {
            nlohmann::ordered_json sj;
            sj["turns"] = s.turns;
            sj["words"] = s.words;
            sj["words_per_turn"] = s.words_per_turn;
            sj["turn_share"] = s.turn_share;
            auto sd = nlohmann::ordered_json::object();
            for (auto const & [n, v] : s.distinct_n) {
                sd[std::to_string(n)] = v;
            }
            sj["distinct_n"] = sd;
            ps[key] = sj;
        }
        j["per_speaker"] = ps;
    }
    return j.dump(2);
}

MetricsReport report_from_json(std::string_view text)
{
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
        MetricsReport r;
        r.corpus_id = j.at("corpus_id").get<std::string>();
        r.tokenizer = j.at("tokenizer").get<std::string>();
        r.distinct_mode = j.at("distinct_mode").get<std::string>() == "pooled" ? DistinctMode::pooled
                                                                                : DistinctMode::per_conversation;
        r.num_conversations = j.at("num_conversations").get<std::size_t>();
        r.total_turns = j.at("total_turns").get<std::size_t>();
        r.total_words = j.at("total_words").get<std::size_t>();
        r.turns_per_conversation = j.at("turns_per_conversation").get<double>();
        auto const & s = j.at("turns_summary");
        r.turns_summary = Summary{s.at("mean").get<double>(), s.at("stddev").get<double>(), s.at("min").get<double>(),
                                  s.at("median").get<double>(), s.at("max").get<double>()};
        r.words_per_turn = j.at("words_per_turn").get<double>();
        for (auto const & [k, v] : j.at("distinct_n").items()) {
            r.distinct_n[std::stoi(k)] = v.get<double>();
        }
        if (auto it = j.find("per_speaker"); it != j.end()) {
            std::map<std::string, SpeakerStats> ps;
            for (auto const & [key, sj] : it->items()) {
                SpeakerStats st;
                st.turns = sj.at("turns").get<std::size_t>();
                st.words = sj.at("words").get<std::size_t>();
                st.words_per_turn = sj.at("words_per_turn").get<double>();
                st.turn_share = sj.at("turn_share").get<double>();
                for (auto const & [k, v] : sj.at("distinct_n").items()) {
                    st.distinct_n[std::stoi(k)] = v.get<double>();
                }
                ps[key] = st;
            }
            r.per_speaker = std::move(ps);
        }
        return r;
    } catch (nlohmann::json::exception const & e) {
        throw Error(ErrorKind::parse, std::string("malformed report: ") + e.what());
    }
}

} // namespace places
