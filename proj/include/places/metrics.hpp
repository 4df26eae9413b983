#pragma once

#include "places/corpus.hpp"

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace places {

/// Identifies the tokenizer; reports computed with different ids are not comparable.
inline constexpr char const * tokenizer_id = "ws-edge-punct-lower/1";

/// Lowercased whitespace chunks with leading/trailing ASCII punctuation
/// stripped; empty chunks dropped. Interior punctuation (and any non-ASCII
/// byte) is kept, so "café." becomes "café".
std::vector<std::string> tokenize(std::string_view text);

enum class DistinctMode {
    /// unique / total over all n-grams of the corpus
    pooled,
    /// mean of per-conversation ratios (conversations without n-grams skipped)
    per_conversation,
};

/// Counts of word n-grams taken within turns.
struct NgramTally
{
    std::size_t total = 0;
    std::size_t unique = 0;
};

NgramTally count_ngrams(std::span<Conversation const> corpus, std::size_t n);

/// Distinct-N. Throws Error(undefined_metric) when no n-gram exists.
double distinct_n(std::span<Conversation const> corpus, std::size_t n, DistinctMode mode = DistinctMode::pooled);

struct Summary
{
    double mean = 0;
    double stddev = 0;
    double min = 0;
    double median = 0;
    double max = 0;
};

struct SpeakerStats
{
    std::size_t turns = 0;
    std::size_t words = 0;
    double words_per_turn = 0;
    double turn_share = 0;
    std::map<int, double> distinct_n;
};

struct MetricsReport
{
    std::string corpus_id;
    std::string tokenizer = tokenizer_id;
    DistinctMode distinct_mode = DistinctMode::pooled;
    std::size_t num_conversations = 0;
    std::size_t total_turns = 0;
    std::size_t total_words = 0;
    double turns_per_conversation = 0;
    Summary turns_summary;
    double words_per_turn = 0;
    /// N -> Distinct-N; an N with no n-grams in the corpus is absent.
    std::map<int, double> distinct_n;
    /// Keyed "speaker_1".."speaker_3" by roster position.
    std::optional<std::map<std::string, SpeakerStats>> per_speaker;

    friend bool operator==(MetricsReport const &, MetricsReport const &) = default;
};

struct StatsOptions
{
    std::string corpus_id;
    bool per_speaker = false;
    DistinctMode distinct_mode = DistinctMode::pooled;
    /// Optional rosters for speaker-position lookup, by recipe id.
    std::map<std::string, std::vector<std::string>> rosters;
};

/// Roster position (0-based) of a turn's speaker. Uses the recipe roster when
/// known, then the canonical Alice/Bob/Claire labels, then first appearance.
int speaker_position(Conversation const & conv, std::string_view speaker, StatsOptions const & opts);

/// Throws Error(undefined_metric) for an empty corpus.
MetricsReport corpus_stats(std::span<Conversation const> corpus, StatsOptions const & opts = {});

struct DiffRow
{
    std::string metric;
    double a = 0;
    double b = 0;
    double delta = 0;
};

struct ReportDiff
{
    std::string a_id;
    std::string b_id;
    std::vector<DiffRow> rows;
};

/// Side-by-side values and b - a deltas for every shared metric.
/// Throws Error(incomparable) when tokenizer or Distinct mode differ.
ReportDiff compare_reports(MetricsReport const & a, MetricsReport const & b);

std::string render_report_table(MetricsReport const & r);
std::string render_diff_table(ReportDiff const & d);
/// One column per report, one row per metric (Distinct-1..4, words/turn, turns/conv).
std::string render_comparison_table(std::span<MetricsReport const> reports);

std::string report_to_json(MetricsReport const & r);
MetricsReport report_from_json(std::string_view text);

} // namespace places
