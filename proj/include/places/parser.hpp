#pragma once

#include "places/corpus.hpp"

#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace places {

enum class FinishReason;

namespace flag {
inline constexpr char const * repetitive = "REPETITIVE";
inline constexpr char const * off_topic = "OFF_TOPIC";
inline constexpr char const * imbalanced = "IMBALANCED";
inline constexpr char const * excessive_monologue = "EXCESSIVE_MONOLOGUE";
// seed-only, non-fatal
inline constexpr char const * below_min_turns = "BELOW_MIN_TURNS";
inline constexpr char const * missing_speaker = "MISSING_SPEAKER";
} // namespace flag

enum class DiscardReason { no_turns, roster_violation, below_min_turns, duplicate };

std::string_view to_string(DiscardReason r) noexcept;

struct ParseResult
{
    std::optional<Conversation> conversation;
    std::set<std::string> flags;
    std::optional<DiscardReason> discard_reason;

    [[nodiscard]] bool accepted() const noexcept { return conversation.has_value(); }

    static ParseResult discard(DiscardReason reason, std::set<std::string> flags = {})
    {
        ParseResult r;
        r.discard_reason = reason;
        r.flags = std::move(flags);
        return r;
    }
};

struct ValidationPolicy
{
    std::size_t min_turns = 4;
    bool require_all_speakers = true;
    std::size_t max_consecutive_same_speaker = 2;
    std::size_t repetition_ngram = 4;
    double repetition_threshold = 0.5;
    bool topic_check = true;
    std::size_t dedup_shingle = 5;
    double dedup_jaccard = 0.9;
    /// Minimum per-speaker turn share in three-party conversations.
    double min_turn_share = 0.15;

    /// Throws Error(config) when a threshold is out of range.
    void check() const;
};

/// Turns a raw continuation of a prompt ending in "<cue>:" into a conversation.
///
/// The first line is the cue speaker's utterance. Later lines must look like
/// "Name: text" with Name on the roster (or the canonical Alice/Bob/Claire
/// label for that roster position). Parsing stops at the first blank line,
/// recipe header, stop-marker remnant or non-matching line. With
/// finish_reason=length the final line is assumed cut and dropped.
ParseResult parse_completion(std::string_view raw,
                             Recipe const & recipe,
                             std::string_view cue_speaker,
                             FinishReason finish);
ParseResult parse_completion(std::string_view raw, Recipe const & recipe, std::string_view cue_speaker);

/// Parses "Name: text" lines (a rendered example block body) back into turns.
std::vector<Turn> parse_turn_lines(std::string_view body, Recipe const & recipe);

ParseResult validate(Conversation const & conv, Recipe const & recipe, ValidationPolicy const & policy);

/// Keyword heuristic for "is this conversation about the recipe's subject".
bool topic_match(Conversation const & conv, Recipe const & recipe);

/// Duplicate n-gram mass: (total - unique) / total over word n-grams taken
/// within turns. Zero when there are no n-grams.
double duplicate_ngram_mass(Conversation const & conv, std::size_t n);

/// True when two turns (or two sentences of at least `min_tokens` words in
/// different positions) have identical normalized text.
bool has_verbatim_repeat(Conversation const & conv, std::size_t min_tokens);

struct DedupResult
{
    std::vector<Conversation> kept;
    std::vector<Conversation> dropped;
};

/// Word-shingle set of a conversation (hashed). Shingles stay inside turns;
/// turns shorter than n contribute one shingle of the whole turn.
std::vector<std::uint64_t> shingle_set(Conversation const & conv, std::size_t n);

double jaccard(std::span<std::uint64_t const> a, std::span<std::uint64_t const> b);

/// Drops exact duplicate turn sequences, then near-duplicates against earlier
/// kept records. First occurrence wins.
DedupResult dedup(std::span<Conversation const> records, ValidationPolicy const & policy);

/// Incremental form of dedup for streaming writers.
class DedupIndex
{
public:
    explicit DedupIndex(ValidationPolicy const & policy);

    /// True if `c` duplicates something already admitted.
    [[nodiscard]] bool is_duplicate(Conversation const & c) const;
    void admit(Conversation const & c);

private:
    std::size_t shingle_n_;
    double threshold_;
    std::set<std::uint64_t> exact_;
    std::vector<std::vector<std::uint64_t>> shingles_;
};

} // namespace places
