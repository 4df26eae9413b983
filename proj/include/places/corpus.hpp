#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace places {

enum class Category { full, start_excerpt, middle_excerpt };
enum class Provenance { seed, generated, imported };

std::string_view to_string(Category c) noexcept;
std::string_view to_string(Provenance p) noexcept;
Category parse_category(std::string_view s);
Provenance parse_provenance(std::string_view s);

/// Prompt header content: what the conversation is about and who takes part.
struct Recipe
{
    std::string id;
    std::string topic;
    std::string subtopic;
    std::vector<std::string> participants;
    std::vector<std::string> background;

    /// Throws Error(validation) when the roster or topic is malformed.
    void check() const;

    /// Subtopic when set, topic otherwise.
    [[nodiscard]] std::string const & subject() const
    {
        return subtopic.empty() ? topic : subtopic;
    }

    [[nodiscard]] bool has_participant(std::string_view name) const;

    friend bool operator==(Recipe const &, Recipe const &) = default;
};

struct Turn
{
    std::string speaker;
    std::string text;

    friend bool operator==(Turn const &, Turn const &) = default;
};

using Meta = std::map<std::string, std::string>;

struct Conversation
{
    std::string id;
    std::string recipe_id;
    std::vector<Turn> turns;
    Category category = Category::full;
    Provenance provenance = Provenance::generated;
    Meta meta;
    std::set<std::string> flags;

    /// Type invariants that do not need the recipe: nonempty turns,
    /// nonempty speakers, single-line nonblank text.
    void check() const;

    friend bool operator==(Conversation const &, Conversation const &) = default;
};

/// Deterministic id of a recipe's canonical content.
std::string recipe_content_id(Recipe const & r);

/// Deterministic id of a conversation's recipe and turn sequence.
std::string conversation_content_id(Conversation const & c);

struct Seed
{
    Recipe recipe;
    Conversation conversation;
};

struct SeedPool
{
    std::vector<Seed> seeds;

    [[nodiscard]] std::size_t size() const noexcept { return seeds.size(); }
    [[nodiscard]] std::size_t total_turns() const noexcept;
    [[nodiscard]] Seed const * find(std::string_view id) const;
};

struct TopicEntry
{
    Recipe recipe;
    /// Per-entry generation count; falls back to the run's target count.
    std::optional<std::size_t> count;
};

struct TopicList
{
    std::vector<TopicEntry> entries;
};

// -- record codecs ---------------------------------------------------------

Recipe parse_recipe_line(std::string_view line, std::size_t line_no);
std::string format_recipe(Recipe const & r);

Conversation parse_conversation_line(std::string_view line, std::size_t line_no);
/// Single line, keys in documented order, no trailing newline.
std::string format_conversation(Conversation const & c);

// -- files -----------------------------------------------------------------

/// Recipes in file order. Missing ids become content hashes; an explicit id
/// seen twice is a conflict error.
std::vector<Recipe> load_recipes(std::filesystem::path const & path);
std::size_t save_recipes(std::span<Recipe const> recipes, std::filesystem::path const & path);

/// Topic file: recipe records with an optional integer `count`.
TopicList load_topics(std::filesystem::path const & path);

struct ValidationPolicy;

/// Loads and validates seed records ({"id","recipe",...conversation fields}).
/// A seed with a roster violation fails the whole load; short seeds are flagged.
SeedPool load_seed_pool(std::filesystem::path const & path);
SeedPool load_seed_pool(std::filesystem::path const & path, ValidationPolicy const & policy);

std::vector<Conversation> load_dataset(std::filesystem::path const & path);
std::size_t save_dataset(std::span<Conversation const> records, std::filesystem::path const & path);

/// Ids of complete records in an existing dataset file. A trailing partial
/// line (interrupted write) is ignored and reported through `partial_tail`.
std::set<std::string> scan_dataset_ids(std::filesystem::path const & path, bool * partial_tail = nullptr);

/// Append-only dataset writer; each record is flushed as one full line.
class DatasetWriter
{
public:
    /// Opens for append. A torn final line is cut off first.
    explicit DatasetWriter(std::filesystem::path path);

    void append(Conversation const & c);

    [[nodiscard]] std::size_t written() const noexcept { return written_; }

private:
    std::filesystem::path path_;
    std::ofstream out_;
    std::mutex mutex_;
    std::size_t written_ = 0;
};

/// Reads a line-delimited file, calling fn(line, line_no) for each nonblank line.
template <typename Fn>
void for_each_record_line(std::filesystem::path const & path, Fn && fn);

std::ifstream open_input(std::filesystem::path const & path);

template <typename Fn>
void for_each_record_line(std::filesystem::path const & path, Fn && fn)
{
    auto in = open_input(path);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.find_first_not_of(" \t") == std::string::npos) {
            continue;
        }
        fn(std::string_view(line), line_no);
    }
}

} // namespace places
