#include "places/evaluation.hpp"

#include "places/error.hpp"
#include "places/hash.hpp"

#include <boost/math/distributions/students_t.hpp>
#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <set>
#include <tuple>

namespace places {

namespace {

constexpr std::array<Question, 10> questions{{
    {Dimension::interesting, "How interesting is the overall conversation?",
     "1 (generic and dull) to 5 (full of content and very engaging)", 1, 5},
    {Dimension::coherent, "How coherent is the overall conversation?",
     "1 (completely incoherent) to 5 (as coherent as two native English speakers)", 1, 5},
    {Dimension::natural, "How natural is the overall conversation?",
     "1 (completely unnatural) to 5 (as natural as two native English speakers)", 1, 5},
    {Dimension::consistent, "How consistent are each of the speakers' turns?",
     "1 (completely inconsistent) to 5 (no logical fallacies)", 1, 5},
    {Dimension::on_topic, "Does the conversation match the stated topic?", "Yes (1) or No (0)", 0, 1},
    {Dimension::comprehensible, "Can you tell which speaker is speaking to which?",
     "1 (completely incomprehensible) to 5 (perfectly comprehensible)", 1, 5},
    {Dimension::balanced_engagement,
     "Is each speaker engaged, or is the conversation primarily dominated by one or two of the speakers?",
     "1 (totally dominated by one or two speakers) to 5 (all speakers are actively participating in the "
     "conversation to an equal degree)",
     1, 5},
    // Chatbot survey dimensions; no rater wording beyond the dimension name.
    {Dimension::engaging, "How engaging is the conversation partner?", "1 (not engaging) to 5 (very engaging)", 1, 5},
    {Dimension::intelligent, "How intelligent is the conversation partner?", "1 (not intelligent) to 5 (very intelligent)", 1, 5},
    {Dimension::non_repetitive, "How non-repetitive is the conversation partner?",
     "1 (very repetitive) to 5 (not repetitive at all)", 1, 5},
}};

constexpr std::array<std::string_view, 10> dimension_names{
    "interesting", "coherent", "natural", "consistent", "on_topic",
    "comprehensible", "balanced_engagement", "engaging", "intelligent", "non_repetitive",
};

std::size_t distinct_speakers(Conversation const & c)
{
    std::set<std::string_view> s;
    for (auto const & t : c.turns) {
        s.insert(t.speaker);
    }
    return s.size();
}

double median_of(std::vector<int> v)
{
    std::sort(v.begin(), v.end());
    auto mid = v.size() / 2;
    if (v.size() % 2) {
        return v[mid];
    }
    return (static_cast<double>(v[mid - 1]) + static_cast<double>(v[mid])) / 2.0;
}

void write_lines(std::filesystem::path const & path, std::vector<std::string> const & lines)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error(ErrorKind::io, "cannot open '" + path.string() + "' for writing");
    }
    for (auto const & l : lines) {
        out << l << '\n';
    }
    if (!out.flush()) {
        throw Error(ErrorKind::io, "write to '" + path.string() + "' failed");
    }
}

} // namespace

std::string_view to_string(Dimension d) noexcept
{
    return dimension_names[static_cast<std::size_t>(d)];
}

Dimension parse_dimension(std::string_view name)
{
    for (std::size_t i = 0; i < dimension_names.size(); ++i) {
        if (dimension_names[i] == name) {
            return static_cast<Dimension>(i);
        }
    }
    throw Error(ErrorKind::validation, "unknown rating dimension '" + std::string(name) + "'");
}

Question const & question_for(Dimension d)
{
    return questions[static_cast<std::size_t>(d)];
}

std::vector<Dimension> default_dimensions()
{
    return {Dimension::natural, Dimension::coherent, Dimension::interesting, Dimension::consistent, Dimension::on_topic};
}

std::vector<Dimension> multi_party_dimensions()
{
    return {Dimension::comprehensible, Dimension::balanced_engagement};
}

Conversation sample_excerpt(Conversation const & conv, std::uint64_t rng_seed, std::size_t min_len, std::size_t max_len)
{
    if (min_len == 0 || max_len < min_len) {
        throw Error(ErrorKind::config, "excerpt length bounds must satisfy 1 <= min <= max");
    }
    Conversation out = conv;
    out.category = Category::middle_excerpt;
    auto const n = conv.turns.size();
    if (n < min_len) {
        return out;
    }
    SeededRng rng(rng_seed);
    auto len = static_cast<std::size_t>(rng.between(min_len, max_len));
    len = std::min(len, n);
    auto start = static_cast<std::size_t>(rng.below(n - len + 1));
    if (start == 0 && len == n) {
        return out;
    }
    out.turns.assign(conv.turns.begin() + static_cast<std::ptrdiff_t>(start),
                     conv.turns.begin() + static_cast<std::ptrdiff_t>(start + len));
    out.id = conv.id + "@" + std::to_string(start) + "+" + std::to_string(len);
    out.meta["excerpt_of"] = conv.id;
    out.meta["excerpt_start"] = std::to_string(start);
    out.meta["excerpt_length"] = std::to_string(len);
    return out;
}

std::string format_rating_task(Conversation const & conv, ExportOptions const & opts)
{
    std::vector<Dimension> dims = opts.dimensions;
    if (opts.multi_party_questions && distinct_speakers(conv) > 2) {
        for (auto d : multi_party_dimensions()) {
            if (std::find(dims.begin(), dims.end(), d) == dims.end()) {
                dims.push_back(d);
            }
        }
    }
    std::string text;
    if (auto it = conv.meta.find("topic"); it != conv.meta.end()) {
        text += "Topic: " + it->second + "\n";
    }
    for (auto const & t : conv.turns) {
        text += t.speaker + ": " + t.text + "\n";
    }
    nlohmann::ordered_json j;
    j["conversation_id"] = conv.id;
    j["text"] = text;
    auto qs = nlohmann::ordered_json::array();
    for (auto d : dims) {
        auto const & q = question_for(d);
        nlohmann::ordered_json qj;
        qj["dimension"] = to_string(d);
        qj["wording"] = q.wording;
        qj["scale"] = q.scale;
        qs.push_back(qj);
    }
    j["questions"] = qs;
    j["raters_per_item"] = opts.raters_per_item;
    return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

std::size_t export_rating_tasks(std::span<Conversation const> sample, ExportOptions const & opts, std::filesystem::path const & path)
{
    if (opts.raters_per_item == 0) {
        throw Error(ErrorKind::config, "raters_per_item must be positive");
    }
    std::vector<std::string> lines;
    for (auto const & c : sample) {
        lines.push_back(format_rating_task(c, opts));
    }
    write_lines(path, lines);
    return lines.size();
}

RatingRecord parse_rating_line(std::string_view line, std::size_t line_no)
{
    auto where = "line " + std::to_string(line_no) + ": ";
    RatingRecord r;
    try {
        auto j = nlohmann::json::parse(line);
        r.conversation_id = j.at("conversation_id").get<std::string>();
        r.rater_id = j.at("rater_id").get<std::string>();
        r.dimension = parse_dimension(j.at("dimension").get<std::string>());
        r.score = j.at("score").get<int>();
    } catch (nlohmann::json::exception const & e) {
        throw Error(ErrorKind::parse, where + "malformed rating: " + e.what());
    } catch (Error const & e) {
        throw Error(ErrorKind::parse, where + e.what());
    }
    auto const & q = question_for(r.dimension);
    if (r.score < q.min_score || r.score > q.max_score) {
        throw Error(ErrorKind::validation, where + "score " + std::to_string(r.score) + " out of range for "
                                               + std::string(to_string(r.dimension)));
    }
    return r;
}

std::string format_rating(RatingRecord const & r)
{
    nlohmann::ordered_json j;
    j["conversation_id"] = r.conversation_id;
    j["rater_id"] = r.rater_id;
    j["dimension"] = to_string(r.dimension);
    j["score"] = r.score;
    return j.dump();
}

std::vector<RatingRecord> load_ratings(std::filesystem::path const & path)
{
    std::vector<RatingRecord> out;
    std::set<std::tuple<std::string, std::string, Dimension>> seen;
    for_each_record_line(path, [&](std::string_view line, std::size_t line_no) {
        auto r = parse_rating_line(line, line_no);
        if (!seen.emplace(r.conversation_id, r.rater_id, r.dimension).second) {
            throw Error(ErrorKind::conflict, "line " + std::to_string(line_no) + ": duplicate rating by '" + r.rater_id
                                                 + "' for '" + r.conversation_id + "'");
        }
        out.push_back(std::move(r));
    });
    return out;
}

std::size_t save_ratings(std::span<RatingRecord const> records, std::filesystem::path const & path)
{
    std::vector<std::string> lines;
    for (auto const & r : records) {
        lines.push_back(format_rating(r));
    }
    write_lines(path, lines);
    return lines.size();
}

std::vector<AggregatedRating> aggregate_ratings(std::span<RatingRecord const> records)
{
    std::map<std::pair<std::string, Dimension>, std::vector<int>> groups;
    for (auto const & r : records) {
        groups[{r.conversation_id, r.dimension}].push_back(r.score);
    }
    std::vector<AggregatedRating> out;
    out.reserve(groups.size());
    for (auto & [key, scores] : groups) {
        out.push_back(AggregatedRating{key.first, key.second, median_of(scores), scores.size()});
    }
    return out;
}

std::string format_aggregated(AggregatedRating const & a)
{
    nlohmann::ordered_json j;
    j["conversation_id"] = a.conversation_id;
    j["dimension"] = to_string(a.dimension);
    j["median_score"] = a.median_score;
    j["n_raters"] = a.n_raters;
    return j.dump();
}

std::vector<AggregatedRating> load_aggregated(std::filesystem::path const & path)
{
    std::vector<AggregatedRating> out;
    for_each_record_line(path, [&](std::string_view line, std::size_t line_no) {
        try {
            auto j = nlohmann::json::parse(line);
            out.push_back(AggregatedRating{j.at("conversation_id").get<std::string>(),
                                           parse_dimension(j.at("dimension").get<std::string>()),
                                           j.at("median_score").get<double>(), j.at("n_raters").get<std::size_t>()});
        } catch (nlohmann::json::exception const & e) {
            throw Error(ErrorKind::parse, "line " + std::to_string(line_no) + ": " + e.what());
        }
    });
    return out;
}

std::optional<double> mean_of_medians(std::span<AggregatedRating const> ratings, Dimension d)
{
    double sum = 0;
    std::size_t n = 0;
    for (auto const & a : ratings) {
        if (a.dimension == d) {
            sum += a.median_score;
            ++n;
        }
    }
    if (n == 0) {
        return std::nullopt;
    }
    return sum / static_cast<double>(n);
}

double two_sided_p(double t, double df)
{
    if (std::isinf(df)) {
        df = 1e12;
    }
    boost::math::students_t_distribution<double> dist(df);
    return std::min(1.0, 2.0 * boost::math::cdf(dist, -std::fabs(t)));
}

TTestResult welch_t_test(std::span<double const> a, std::span<double const> b, double alpha)
{
    if (a.size() < 2 || b.size() < 2) {
        throw Error(ErrorKind::undefined_test, "each group needs at least two values");
    }
    auto moments = [](std::span<double const> v) {
        double mean = 0;
        for (double x : v) {
            mean += x;
        }
        mean /= static_cast<double>(v.size());
        double ss = 0;
        for (double x : v) {
            ss += (x - mean) * (x - mean);
        }
        return std::pair{mean, ss / static_cast<double>(v.size() - 1)};
    };
    auto [mean_a, var_a] = moments(a);
    auto [mean_b, var_b] = moments(b);
    if (var_a == 0.0 && var_b == 0.0) {
        throw Error(ErrorKind::undefined_test, "both groups have zero variance");
    }
    double const na = static_cast<double>(a.size());
    double const nb = static_cast<double>(b.size());
    double const sa = var_a / na;
    double const sb = var_b / nb;

    TTestResult r;
    r.t = (mean_a - mean_b) / std::sqrt(sa + sb);
    r.df = (sa + sb) * (sa + sb) / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    r.p = two_sided_p(r.t, r.df);
    r.significant = r.p < alpha;
    return r;
}

} // namespace places
