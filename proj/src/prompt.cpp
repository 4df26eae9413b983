#include "places/prompt.hpp"

#include "places/error.hpp"
#include "places/hash.hpp"

#include <numeric>

namespace places {

namespace {

std::string display_name(Recipe const & recipe, std::string_view speaker)
{
    for (std::size_t i = 0; i < recipe.participants.size() && i < canonical_speakers.size(); ++i) {
        if (recipe.participants[i] == speaker) {
            return std::string(canonical_speakers[i]);
        }
    }
    return std::string(speaker);
}

} // namespace

std::string_view to_string(SelectionMode m) noexcept
{
    return m == SelectionMode::fixed_k ? "fixed_k" : "turn_budget";
}

SelectionMode parse_selection_mode(std::string_view s)
{
    if (s == "fixed_k") return SelectionMode::fixed_k;
    if (s == "turn_budget") return SelectionMode::turn_budget;
    throw Error(ErrorKind::config, "unknown selection mode '" + std::string(s) + "'");
}

void PromptSpec::check() const
{
    if (k == 0) {
        throw Error(ErrorKind::config, "k must be positive");
    }
    if (selection_mode == SelectionMode::turn_budget && turn_budget == 0) {
        throw Error(ErrorKind::config, "turn budget must be at least 1");
    }
    if (party_size != 2 && party_size != 3) {
        throw Error(ErrorKind::config, "party size must be 2 or 3");
    }
}

std::string render_header(Recipe const & recipe, bool prefer_subtopic)
{
    auto const & subject = prefer_subtopic ? recipe.subject() : recipe.topic;
    std::string out = "The following is a conversation between ";
    for (std::size_t i = 0; i < recipe.participants.size(); ++i) {
        if (i) {
            out += " and ";
        }
        out += display_name(recipe, recipe.participants[i]);
    }
    out += " about ";
    out += subject;
    out += '.';
    if (recipe.background.empty()) {
        out += ' ';
        out += display_name(recipe, recipe.participants.front());
        out += " is interested in ";
        out += subject;
        out += '.';
    }
    for (auto const & sentence : recipe.background) {
        out += ' ';
        out += sentence;
    }
    return out;
}

std::string render_turns(std::span<Turn const> turns, Recipe const & recipe)
{
    std::string out;
    for (auto const & t : turns) {
        out += display_name(recipe, t.speaker);
        out += ": ";
        out += t.text;
        out += '\n';
    }
    return out;
}

std::string render_block(Recipe const & recipe, std::span<Turn const> turns, bool prefer_subtopic)
{
    return render_header(recipe, prefer_subtopic) + '\n' + render_turns(turns, recipe);
}

std::vector<std::string> select_examples(SeedPool const & pool, PromptSpec const & spec, std::string_view exclude_id)
{
    spec.check();
    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < pool.seeds.size(); ++i) {
        auto const & s = pool.seeds[i];
        if (exclude_id.empty() || (s.conversation.id != exclude_id && s.recipe.id != exclude_id)) {
            candidates.push_back(i);
        }
    }

    bool const by_budget = spec.selection_mode == SelectionMode::turn_budget;
    if (!by_budget && spec.k > candidates.size()) {
        throw Error(ErrorKind::config,
                    "k=" + std::to_string(spec.k) + " exceeds the " + std::to_string(candidates.size())
                        + " eligible seeds");
    }

    SeededRng rng(spec.rng_seed);
    std::vector<std::string> picked;
    std::size_t turns = 0;
    // partial Fisher-Yates: position i receives a uniform pick from the remainder
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        if (!by_budget && picked.size() == spec.k) {
            break;
        }
        if (by_budget && turns >= spec.turn_budget) {
            break;
        }
        auto j = i + rng.below(candidates.size() - i);
        std::swap(candidates[i], candidates[j]);
        auto const & seed = pool.seeds[candidates[i]];
        picked.push_back(seed.conversation.id);
        turns += seed.conversation.turns.size();
    }
    if (by_budget && turns < spec.turn_budget) {
        throw Error(ErrorKind::budget_unreachable,
                    "seed pool holds " + std::to_string(turns) + " turns, budget is " + std::to_string(spec.turn_budget));
    }
    return picked;
}

RenderedPrompt compose_prompt(SeedPool const & pool,
                              std::span<std::string const> example_ids,
                              Recipe const & target,
                              bool prefer_subtopic)
{
    target.check();
    RenderedPrompt out;
    for (auto const & id : example_ids) {
        auto const * seed = pool.find(id);
        if (!seed) {
            throw Error(ErrorKind::config, "unknown seed id '" + id + "'");
        }
        if (seed->recipe.id == target.id) {
            throw Error(ErrorKind::config, "seed '" + id + "' is the target recipe");
        }
        out.text += render_block(seed->recipe, seed->conversation.turns, prefer_subtopic);
        out.text += '\n';
        out.example_ids.push_back(id);
    }
    out.text += render_header(target, prefer_subtopic);
    out.text += '\n';
    out.cue_speaker = target.participants.front();
    out.text += display_name(target, out.cue_speaker);
    out.text += ':';
    out.target_recipe_id = target.id;
    return out;
}

RenderedPrompt build_prompt(SeedPool const & pool, Recipe const & target, PromptSpec const & spec)
{
    target.check();
    if (static_cast<int>(target.participants.size()) != spec.party_size) {
        throw Error(ErrorKind::config,
                    "recipe '" + target.id + "' has " + std::to_string(target.participants.size())
                        + " participants, run party size is " + std::to_string(spec.party_size));
    }
    auto ids = select_examples(pool, spec, target.id);
    return compose_prompt(pool, ids, target, spec.prefer_subtopic);
}

} // namespace places
