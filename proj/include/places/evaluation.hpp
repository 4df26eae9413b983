#pragma once

#include "places/corpus.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace places {

enum class Dimension {
    interesting,
    coherent,
    natural,
    consistent,
    on_topic,
    comprehensible,
    balanced_engagement,
    engaging,
    intelligent,
    non_repetitive,
};

std::string_view to_string(Dimension d) noexcept;
/// Throws Error(validation) for an unknown name.
Dimension parse_dimension(std::string_view name);

struct Question
{
    Dimension dimension;
    std::string_view wording;
    std::string_view scale;
    int min_score;
    int max_score;
};

/// Rater-facing wording and scale for a dimension.
Question const & question_for(Dimension d);

/// The four quality questions plus the topic question.
std::vector<Dimension> default_dimensions();
/// Questions only asked about conversations with more than two speakers.
std::vector<Dimension> multi_party_dimensions();

struct RatingRecord
{
    std::string conversation_id;
    std::string rater_id;
    Dimension dimension = Dimension::interesting;
    int score = 0;

    friend bool operator==(RatingRecord const &, RatingRecord const &) = default;
};

struct AggregatedRating
{
    std::string conversation_id;
    Dimension dimension = Dimension::interesting;
    double median_score = 0;
    std::size_t n_raters = 0;

    friend bool operator==(AggregatedRating const &, AggregatedRating const &) = default;
};

/// Contiguous window of uniformly drawn length in [min_len, max_len] at a
/// uniformly drawn start. Shorter sources are returned whole. The result is
/// always tagged middle_excerpt.
Conversation sample_excerpt(Conversation const & conv, std::uint64_t rng_seed, std::size_t min_len = 8, std::size_t max_len = 12);

struct ExportOptions
{
    std::vector<Dimension> dimensions = default_dimensions();
    std::size_t raters_per_item = 3;
    /// Add comprehensible / balanced_engagement for conversations with 3+ speakers.
    bool multi_party_questions = true;
};

/// One task line per conversation: {"conversation_id","text","questions","raters_per_item"}.
std::size_t export_rating_tasks(std::span<Conversation const> sample, ExportOptions const & opts, std::filesystem::path const & path);
std::string format_rating_task(Conversation const & conv, ExportOptions const & opts);

RatingRecord parse_rating_line(std::string_view line, std::size_t line_no);
std::string format_rating(RatingRecord const & r);
/// Rejects duplicate (conversation, rater, dimension) triples and out-of-range scores.
std::vector<RatingRecord> load_ratings(std::filesystem::path const & path);
std::size_t save_ratings(std::span<RatingRecord const> records, std::filesystem::path const & path);

/// Median per (conversation, dimension); even group sizes use the midpoint.
/// Output is sorted by (conversation_id, dimension).
std::vector<AggregatedRating> aggregate_ratings(std::span<RatingRecord const> records);

std::string format_aggregated(AggregatedRating const & a);
std::vector<AggregatedRating> load_aggregated(std::filesystem::path const & path);

/// Mean of the per-conversation medians for one dimension, if any.
std::optional<double> mean_of_medians(std::span<AggregatedRating const> ratings, Dimension d);

struct TTestResult
{
    double t = 0;
    double df = 0;
    double p = 1;
    bool significant = false;
};

/// Two-sided Welch unequal-variance t-test. Each group needs at least two
/// values; both groups having zero variance is an Error(undefined_test).
TTestResult welch_t_test(std::span<double const> a, std::span<double const> b, double alpha = 0.05);

/// Two-sided p-value of a t statistic under Student's t with df degrees of freedom.
double two_sided_p(double t, double df);

} // namespace places
