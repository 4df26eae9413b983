#include "places/parser.hpp"

#include "places/error.hpp"
#include "places/hash.hpp"
#include "places/llm.hpp"
#include "places/metrics.hpp"
#include "places/prompt.hpp"

#include <algorithm>
#include <array>
#include <map>
#include <unordered_set>

namespace places {

namespace {

constexpr std::string_view header_prefix = "The following is a conversation";
constexpr std::array<std::string_view, 3> end_markers{"<|endoftext|>", "</s>", "<|end|>"};

constexpr std::string_view stopwords[] = {
    "a", "about", "above", "after", "again", "against", "all", "also", "am", "an", "and", "any", "are", "as",
    "at", "be", "because", "been", "before", "being", "below", "between", "both", "but", "by", "can", "could",
    "did", "do", "does", "doing", "down", "during", "each", "few", "for", "from", "further", "get", "had",
    "has", "have", "having", "he", "her", "here", "hers", "him", "his", "how", "i", "if", "in", "into", "is",
    "it", "its", "just", "like", "me", "more", "most", "my", "no", "nor", "not", "now", "of", "off", "on",
    "once", "only", "or", "other", "our", "out", "over", "own", "same", "she", "should", "so", "some", "such",
    "than", "that", "the", "their", "them", "then", "there", "these", "they", "this", "those", "through", "to",
    "too", "under", "until", "up", "very", "was", "we", "were", "what", "when", "where", "which", "while",
    "who", "whom", "why", "will", "with", "would", "you", "your", "yours", "things", "thing", "way",
};

bool is_stopword(std::string_view w)
{
    return std::find(std::begin(stopwords), std::end(stopwords), w) != std::end(stopwords);
}

std::string_view trim(std::string_view s)
{
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) {
        return {};
    }
    auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::string lower_ascii(std::string_view s)
{
    std::string out(s);
    for (auto & c : out) {
        if (c >= 'A' && c <= 'Z') {
            c = static_cast<char>(c - 'A' + 'a');
        }
    }
    return out;
}

/// Roster name for a label, accepting canonical position labels too.
std::string const * resolve_speaker(Recipe const & recipe, std::string_view label)
{
    for (auto const & p : recipe.participants) {
        if (p == label) {
            return &p;
        }
    }
    for (std::size_t i = 0; i < recipe.participants.size() && i < canonical_speakers.size(); ++i) {
        if (canonical_speakers[i] == label) {
            return &recipe.participants[i];
        }
    }
    return nullptr;
}

bool is_header_remnant(std::string_view line)
{
    if (line.starts_with(header_prefix)) {
        return true;
    }
    return line.size() >= 3 && header_prefix.starts_with(line);
}

std::string normalized(std::string_view text)
{
    std::string out;
    for (auto const & tok : tokenize(text)) {
        if (!out.empty()) {
            out += ' ';
        }
        out += tok;
    }
    return out;
}

std::vector<std::string_view> split_sentences(std::string_view text)
{
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i < text.size(); ++i) {
        char c = text[i];
        if (c != '.' && c != '!' && c != '?') {
            continue;
        }
        std::size_t end = i + 1;
        while (end < text.size() && (text[end] == '.' || text[end] == '!' || text[end] == '?')) {
            ++end;
        }
        if (end == text.size() || text[end] == ' ') {
            out.push_back(text.substr(start, end - start));
            start = end;
            i = end;
        }
    }
    if (start < text.size()) {
        out.push_back(text.substr(start));
    }
    return out;
}

std::uint64_t turn_sequence_key(Conversation const & c)
{
    Fnv1a h;
    for (auto const & t : c.turns) {
        h.field(t.speaker).field(t.text);
    }
    return h.digest();
}

} // namespace

std::string_view to_string(DiscardReason r) noexcept
{
    switch (r) {
    case DiscardReason::no_turns: return "no_turns";
    case DiscardReason::roster_violation: return "roster_violation";
    case DiscardReason::below_min_turns: return "below_min_turns";
    case DiscardReason::duplicate: return "duplicate";
    }
    return "no_turns";
}

void ValidationPolicy::check() const
{
    auto fraction = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (min_turns == 0) {
        throw Error(ErrorKind::config, "min_turns must be positive");
    }
    if (max_consecutive_same_speaker == 0) {
        throw Error(ErrorKind::config, "max_consecutive_same_speaker must be positive");
    }
    if (repetition_ngram == 0 || dedup_shingle == 0) {
        throw Error(ErrorKind::config, "n-gram sizes must be positive");
    }
    if (!fraction(repetition_threshold) || !fraction(dedup_jaccard) || !fraction(min_turn_share)) {
        throw Error(ErrorKind::config, "thresholds must lie in [0, 1]");
    }
}

ParseResult parse_completion(std::string_view raw, Recipe const & recipe, std::string_view cue_speaker)
{
    return parse_completion(raw, recipe, cue_speaker, FinishReason::stop);
}

ParseResult parse_completion(std::string_view raw,
                             Recipe const & recipe,
                             std::string_view cue_speaker,
                             FinishReason finish)
{
    auto const * cue = resolve_speaker(recipe, cue_speaker);
    if (!cue) {
        return ParseResult::discard(DiscardReason::roster_violation);
    }

    bool stopped = false;
    for (auto marker : end_markers) {
        if (auto pos = raw.find(marker); pos != std::string_view::npos) {
            raw = raw.substr(0, pos);
            stopped = true;
        }
    }

    Conversation conv;
    conv.recipe_id = recipe.id;
    conv.provenance = Provenance::generated;

    std::size_t pos = 0;
    bool first = true;
    while (pos <= raw.size()) {
        auto nl = raw.find('\n', pos);
        auto line = raw.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? raw.size() + 1 : nl + 1;
        auto text = trim(line);

        if (first) {
            first = false;
            if (text.empty() || is_header_remnant(text)) {
                stopped = true;
                break;
            }
            conv.turns.push_back(Turn{*cue, std::string(text)});
            continue;
        }
        if (text.empty() || is_header_remnant(text)) {
            stopped = true;
            break;
        }
        auto colon = text.find(':');
        std::string const * speaker = nullptr;
        std::string_view utterance;
        if (colon != std::string_view::npos) {
            speaker = resolve_speaker(recipe, trim(text.substr(0, colon)));
            utterance = trim(text.substr(colon + 1));
        }
        if (!speaker || utterance.empty()) {
            stopped = true;
            break;
        }
        conv.turns.push_back(Turn{*speaker, std::string(utterance)});
    }

    if (finish == FinishReason::length && !stopped && !conv.turns.empty()) {
        conv.turns.pop_back();
    }
    if (conv.turns.empty()) {
        return ParseResult::discard(DiscardReason::no_turns);
    }
    ParseResult result;
    result.conversation = std::move(conv);
    return result;
}

std::vector<Turn> parse_turn_lines(std::string_view body, Recipe const & recipe)
{
    std::vector<Turn> turns;
    std::size_t pos = 0;
    while (pos < body.size()) {
        auto nl = body.find('\n', pos);
        auto line = trim(body.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos));
        pos = nl == std::string_view::npos ? body.size() : nl + 1;
        if (line.empty()) {
            break;
        }
        auto colon = line.find(':');
        if (colon == std::string_view::npos) {
            break;
        }
        auto const * speaker = resolve_speaker(recipe, trim(line.substr(0, colon)));
        auto text = trim(line.substr(colon + 1));
        if (!speaker || text.empty()) {
            break;
        }
        turns.push_back(Turn{*speaker, std::string(text)});
    }
    return turns;
}

double duplicate_ngram_mass(Conversation const & conv, std::size_t n)
{
    std::unordered_set<std::uint64_t> seen;
    std::size_t total = 0;
    for (auto const & t : conv.turns) {
        auto toks = tokenize(t.text);
        for (std::size_t i = 0; i + n <= toks.size(); ++i) {
            Fnv1a h;
            for (std::size_t j = i; j < i + n; ++j) {
                h.field(toks[j]);
            }
            seen.insert(h.digest());
            ++total;
        }
    }
    if (total == 0) {
        return 0.0;
    }
    return static_cast<double>(total - seen.size()) / static_cast<double>(total);
}

bool has_verbatim_repeat(Conversation const & conv, std::size_t min_tokens)
{
    std::unordered_set<std::string> turns;
    std::unordered_set<std::string> sentences;
    for (auto const & t : conv.turns) {
        auto whole = normalized(t.text);
        if (!whole.empty() && !turns.insert(whole).second) {
            return true;
        }
        for (auto s : split_sentences(t.text)) {
            if (tokenize(s).size() < min_tokens) {
                continue;
            }
            if (!sentences.insert(normalized(s)).second) {
                return true;
            }
        }
    }
    return false;
}

bool topic_match(Conversation const & conv, Recipe const & recipe)
{
    if (conv.turns.empty()) {
        return false;
    }
    std::string text;
    for (auto const & t : conv.turns) {
        text += lower_ascii(t.text);
        text += ' ';
    }
    for (auto const & word : tokenize(recipe.subject())) {
        if (word.size() < 3 || is_stopword(word)) {
            continue;
        }
        auto stem = std::string_view(word);
        if (stem.size() > 3 && stem.back() == 's') {
            stem.remove_suffix(1);
        }
        stem = stem.substr(0, 5);
        if (text.find(stem) != std::string::npos) {
            return true;
        }
    }
    return false;
}

ParseResult validate(Conversation const & conv, Recipe const & recipe, ValidationPolicy const & policy)
{
    if (conv.turns.empty()) {
        return ParseResult::discard(DiscardReason::no_turns);
    }
    for (auto const & t : conv.turns) {
        if (!recipe.has_participant(t.speaker)) {
            return ParseResult::discard(DiscardReason::roster_violation);
        }
    }

    std::set<std::string> flags;
    if (duplicate_ngram_mass(conv, policy.repetition_ngram) > policy.repetition_threshold
        || has_verbatim_repeat(conv, policy.repetition_ngram)) {
        flags.insert(flag::repetitive);
    }
    if (policy.topic_check && !topic_match(conv, recipe)) {
        flags.insert(flag::off_topic);
    }

    std::map<std::string, std::size_t> per_speaker;
    std::size_t run = 0;
    std::size_t longest = 0;
    for (std::size_t i = 0; i < conv.turns.size(); ++i) {
        ++per_speaker[conv.turns[i].speaker];
        run = (i > 0 && conv.turns[i].speaker == conv.turns[i - 1].speaker) ? run + 1 : 1;
        longest = std::max(longest, run);
    }
    if (longest > policy.max_consecutive_same_speaker) {
        flags.insert(flag::excessive_monologue);
    }
    if (recipe.participants.size() == 3) {
        auto const total = static_cast<double>(conv.turns.size());
        for (auto const & p : recipe.participants) {
            auto it = per_speaker.find(p);
            double share = it == per_speaker.end() ? 0.0 : static_cast<double>(it->second) / total;
            if (share < policy.min_turn_share) {
                flags.insert(flag::imbalanced);
            }
        }
    }

    if (conv.turns.size() < policy.min_turns) {
        return ParseResult::discard(DiscardReason::below_min_turns, std::move(flags));
    }
    if (policy.require_all_speakers && per_speaker.size() < recipe.participants.size()) {
        return ParseResult::discard(DiscardReason::roster_violation, std::move(flags));
    }

    ParseResult result;
    result.conversation = conv;
    result.conversation->flags.insert(flags.begin(), flags.end());
    result.flags = std::move(flags);
    return result;
}

std::vector<std::uint64_t> shingle_set(Conversation const & conv, std::size_t n)
{
    std::vector<std::uint64_t> out;
    for (auto const & t : conv.turns) {
        auto toks = tokenize(t.text);
        if (toks.empty()) {
            continue;
        }
        if (toks.size() < n) {
            Fnv1a h;
            for (auto const & w : toks) {
                h.field(w);
            }
            out.push_back(h.digest());
            continue;
        }
        for (std::size_t i = 0; i + n <= toks.size(); ++i) {
            Fnv1a h;
            for (std::size_t j = i; j < i + n; ++j) {
                h.field(toks[j]);
            }
            out.push_back(h.digest());
        }
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

double jaccard(std::span<std::uint64_t const> a, std::span<std::uint64_t const> b)
{
    if (a.empty() && b.empty()) {
        return 1.0;
    }
    std::size_t common = 0;
    auto ia = a.begin();
    auto ib = b.begin();
    while (ia != a.end() && ib != b.end()) {
        if (*ia < *ib) {
            ++ia;
        } else if (*ib < *ia) {
            ++ib;
        } else {
            ++common;
            ++ia;
            ++ib;
        }
    }
    auto uni = a.size() + b.size() - common;
    return static_cast<double>(common) / static_cast<double>(uni);
}

DedupIndex::DedupIndex(ValidationPolicy const & policy)
: shingle_n_(policy.dedup_shingle)
, threshold_(policy.dedup_jaccard)
{}

bool DedupIndex::is_duplicate(Conversation const & c) const
{
    if (exact_.contains(turn_sequence_key(c))) {
        return true;
    }
    auto s = shingle_set(c, shingle_n_);
    for (auto const & other : shingles_) {
        // J <= min/max, so skip pairs whose sizes already rule it out
        auto lo = std::min(s.size(), other.size());
        auto hi = std::max(s.size(), other.size());
        if (hi > 0 && static_cast<double>(lo) / static_cast<double>(hi) < threshold_) {
            continue;
        }
        if (jaccard(s, other) >= threshold_) {
            return true;
        }
    }
    return false;
}

void DedupIndex::admit(Conversation const & c)
{
    exact_.insert(turn_sequence_key(c));
    shingles_.push_back(shingle_set(c, shingle_n_));
}

DedupResult dedup(std::span<Conversation const> records, ValidationPolicy const & policy)
{
    DedupResult out;
    DedupIndex index(policy);
    for (auto const & c : records) {
        if (index.is_duplicate(c)) {
            out.dropped.push_back(c);
        } else {
            index.admit(c);
            out.kept.push_back(c);
        }
    }
    return out;
}

} // namespace places
