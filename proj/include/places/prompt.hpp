#pragma once

#include "places/corpus.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace places {

enum class SelectionMode { fixed_k, turn_budget };

std::string_view to_string(SelectionMode m) noexcept;
SelectionMode parse_selection_mode(std::string_view s);

/// Names used in rendered text for roster positions 0, 1, 2.
inline constexpr std::array<std::string_view, 3> canonical_speakers{"Alice", "Bob", "Claire"};

struct PromptSpec
{
    std::size_t k = 3;
    std::uint64_t rng_seed = 0;
    SelectionMode selection_mode = SelectionMode::fixed_k;
    std::size_t turn_budget = 24;
    int party_size = 2;
    /// Use the subtopic after "about" when the recipe has one.
    bool prefer_subtopic = true;

    void check() const;
};

struct RenderedPrompt
{
    std::string text;
    std::vector<std::string> example_ids;
    std::string target_recipe_id;
    /// Speaker whose utterance the continuation starts with.
    std::string cue_speaker;
};

/// "The following is a conversation between A and B[ and C] about X." followed
/// by the background sentences, or a generic interest sentence when there are none.
std::string render_header(Recipe const & recipe, bool prefer_subtopic = true);

/// "Speaker: text" lines, each newline-terminated. Roster names are mapped to
/// the canonical label of their position.
std::string render_turns(std::span<Turn const> turns, Recipe const & recipe);

/// Header line followed by the turn lines.
std::string render_block(Recipe const & recipe, std::span<Turn const> turns, bool prefer_subtopic = true);

/// Seeded uniform draw without replacement. fixed_k takes the first k draws;
/// turn_budget keeps drawing until the picked seeds hold at least
/// turn_budget turns. Both modes consume the same draw sequence.
/// Seeds whose id equals `exclude_id` are never drawn.
std::vector<std::string> select_examples(SeedPool const & pool, PromptSpec const & spec, std::string_view exclude_id = {});

RenderedPrompt build_prompt(SeedPool const & pool, Recipe const & target, PromptSpec const & spec);

/// Builds the prompt from explicit example ids (e.g. read back from a record's meta).
RenderedPrompt compose_prompt(SeedPool const & pool,
                              std::span<std::string const> example_ids,
                              Recipe const & target,
                              bool prefer_subtopic = true);

} // namespace places
