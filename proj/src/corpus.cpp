#include "places/corpus.hpp"

#include "places/error.hpp"
#include "places/hash.hpp"
#include "places/parser.hpp"

#include <json.hpp>

#include <algorithm>
#include <sstream>
#include <unordered_set>

namespace places {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

std::string dump_line(ojson const & j)
{
    return j.dump(-1, ' ', false, json::error_handler_t::replace);
}

std::string join(std::vector<std::string> const & parts, std::string_view sep)
{
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) {
            out += sep;
        }
        out += parts[i];
    }
    return out;
}

[[noreturn]] void fail_line(std::size_t line_no, std::string const & what)
{
    throw Error(ErrorKind::parse, "line " + std::to_string(line_no) + ": " + what);
}

json parse_object(std::string_view line, std::size_t line_no)
{
    json j;
    try {
        j = json::parse(line);
    } catch (json::parse_error const & e) {
        fail_line(line_no, std::string("malformed record: ") + e.what());
    }
    if (!j.is_object()) {
        fail_line(line_no, "record is not an object");
    }
    return j;
}

std::string get_string(json const & j, char const * key, std::size_t line_no, bool required)
{
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) {
        if (required) {
            fail_line(line_no, std::string("missing field '") + key + "'");
        }
        return {};
    }
    if (!it->is_string()) {
        fail_line(line_no, std::string("field '") + key + "' must be a string");
    }
    return it->get<std::string>();
}

std::vector<std::string> get_strings(json const & j, char const * key, std::size_t line_no, bool required)
{
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) {
        if (required) {
            fail_line(line_no, std::string("missing field '") + key + "'");
        }
        return {};
    }
    if (!it->is_array()) {
        fail_line(line_no, std::string("field '") + key + "' must be an array");
    }
    std::vector<std::string> out;
    for (auto const & v : *it) {
        if (!v.is_string()) {
            fail_line(line_no, std::string("field '") + key + "' must hold strings");
        }
        out.push_back(v.get<std::string>());
    }
    return out;
}

Recipe recipe_from_json(json const & j, std::size_t line_no)
{
    Recipe r;
    r.id = get_string(j, "id", line_no, false);
    r.topic = get_string(j, "topic", line_no, true);
    r.subtopic = get_string(j, "subtopic", line_no, false);
    r.participants = get_strings(j, "participants", line_no, true);
    r.background = get_strings(j, "background", line_no, false);
    try {
        r.check();
    } catch (Error const & e) {
        fail_line(line_no, e.what());
    }
    return r;
}

ojson recipe_to_json(Recipe const & r)
{
    ojson j;
    j["id"] = r.id;
    j["topic"] = r.topic;
    if (!r.subtopic.empty()) {
        j["subtopic"] = r.subtopic;
    }
    j["participants"] = r.participants;
    j["background"] = r.background;
    return j;
}

std::vector<Turn> turns_from_json(json const & j, std::size_t line_no)
{
    auto it = j.find("turns");
    if (it == j.end() || !it->is_array()) {
        fail_line(line_no, "missing array field 'turns'");
    }
    std::vector<Turn> turns;
    for (auto const & t : *it) {
        if (!t.is_object()) {
            fail_line(line_no, "turn is not an object");
        }
        turns.push_back(Turn{get_string(t, "speaker", line_no, true), get_string(t, "text", line_no, true)});
    }
    return turns;
}

void conversation_fields_from_json(json const & j, std::size_t line_no, Conversation & c)
{
    c.turns = turns_from_json(j, line_no);
    try {
        if (auto cat = get_string(j, "category", line_no, false); !cat.empty()) {
            c.category = parse_category(cat);
        }
        if (auto prov = get_string(j, "provenance", line_no, false); !prov.empty()) {
            c.provenance = parse_provenance(prov);
        }
    } catch (Error const & e) {
        fail_line(line_no, e.what());
    }
    if (auto it = j.find("meta"); it != j.end() && !it->is_null()) {
        if (!it->is_object()) {
            fail_line(line_no, "field 'meta' must be an object");
        }
        for (auto const & [k, v] : it->items()) {
            if (!v.is_string()) {
                fail_line(line_no, "meta values must be strings");
            }
            c.meta.emplace(k, v.get<std::string>());
        }
    }
    for (auto & f : get_strings(j, "flags", line_no, false)) {
        c.flags.insert(std::move(f));
    }
}

/// Assigns content ids to recipes without one; repeats get an occurrence suffix.
void assign_recipe_ids(std::vector<Recipe> & recipes, std::vector<std::size_t> const & line_nos)
{
    std::unordered_set<std::string> explicit_ids;
    for (std::size_t i = 0; i < recipes.size(); ++i) {
        if (recipes[i].id.empty()) {
            continue;
        }
        if (!explicit_ids.insert(recipes[i].id).second) {
            throw Error(ErrorKind::conflict,
                        "line " + std::to_string(line_nos[i]) + ": duplicate recipe id '" + recipes[i].id + "'");
        }
    }
    std::unordered_set<std::string> taken = explicit_ids;
    for (auto & r : recipes) {
        if (!r.id.empty()) {
            continue;
        }
        auto base = recipe_content_id(r);
        auto id = base;
        for (std::size_t n = 2; taken.contains(id); ++n) {
            id = content_hash({base, std::to_string(n)});
        }
        taken.insert(id);
        r.id = std::move(id);
    }
}

} // namespace

std::string_view to_string(Category c) noexcept
{
    switch (c) {
    case Category::full: return "full";
    case Category::start_excerpt: return "start_excerpt";
    case Category::middle_excerpt: return "middle_excerpt";
    }
    return "full";
}

std::string_view to_string(Provenance p) noexcept
{
    switch (p) {
    case Provenance::seed: return "seed";
    case Provenance::generated: return "generated";
    case Provenance::imported: return "imported";
    }
    return "generated";
}

Category parse_category(std::string_view s)
{
    if (s == "full") return Category::full;
    if (s == "start_excerpt") return Category::start_excerpt;
    if (s == "middle_excerpt") return Category::middle_excerpt;
    throw Error(ErrorKind::parse, "unknown category '" + std::string(s) + "'");
}

Provenance parse_provenance(std::string_view s)
{
    if (s == "seed") return Provenance::seed;
    if (s == "generated") return Provenance::generated;
    if (s == "imported") return Provenance::imported;
    throw Error(ErrorKind::parse, "unknown provenance '" + std::string(s) + "'");
}

void Recipe::check() const
{
    if (topic.empty()) {
        throw Error(ErrorKind::validation, "recipe topic is empty");
    }
    if (participants.size() != 2 && participants.size() != 3) {
        throw Error(ErrorKind::validation, "recipe must have 2 or 3 participants");
    }
    for (std::size_t i = 0; i < participants.size(); ++i) {
        if (participants[i].empty()) {
            throw Error(ErrorKind::validation, "participant name is empty");
        }
        for (std::size_t j = 0; j < i; ++j) {
            if (participants[i] == participants[j]) {
                throw Error(ErrorKind::validation, "duplicate participant '" + participants[i] + "'");
            }
        }
    }
}

bool Recipe::has_participant(std::string_view name) const
{
    return std::find(participants.begin(), participants.end(), name) != participants.end();
}

void Conversation::check() const
{
    if (turns.empty()) {
        throw Error(ErrorKind::validation, "conversation '" + id + "' has no turns");
    }
    for (std::size_t i = 0; i < turns.size(); ++i) {
        auto const & t = turns[i];
        auto where = "conversation '" + id + "' turn " + std::to_string(i);
        if (t.speaker.empty()) {
            throw Error(ErrorKind::validation, where + ": empty speaker");
        }
        if (t.text.find_first_not_of(" \t") == std::string::npos) {
            throw Error(ErrorKind::validation, where + ": empty text");
        }
        if (t.text.find_first_of("\r\n") != std::string::npos) {
            throw Error(ErrorKind::validation, where + ": text contains a line break");
        }
    }
}

std::string recipe_content_id(Recipe const & r)
{
    return content_hash({"recipe", r.topic, r.subtopic, join(r.participants, "\x1e"), join(r.background, "\x1e")});
}

std::string conversation_content_id(Conversation const & c)
{
    Fnv1a h;
    h.field("conversation").field(c.recipe_id);
    for (auto const & t : c.turns) {
        h.field(t.speaker).field(t.text);
    }
    return to_hex(h.digest());
}

std::size_t SeedPool::total_turns() const noexcept
{
    std::size_t n = 0;
    for (auto const & s : seeds) {
        n += s.conversation.turns.size();
    }
    return n;
}

Seed const * SeedPool::find(std::string_view id) const
{
    for (auto const & s : seeds) {
        if (s.conversation.id == id) {
            return &s;
        }
    }
    return nullptr;
}

Recipe parse_recipe_line(std::string_view line, std::size_t line_no)
{
    return recipe_from_json(parse_object(line, line_no), line_no);
}

std::string format_recipe(Recipe const & r)
{
    return dump_line(recipe_to_json(r));
}

Conversation parse_conversation_line(std::string_view line, std::size_t line_no)
{
    auto j = parse_object(line, line_no);
    Conversation c;
    c.id = get_string(j, "id", line_no, true);
    c.recipe_id = get_string(j, "recipe_id", line_no, false);
    conversation_fields_from_json(j, line_no, c);
    return c;
}

std::string format_conversation(Conversation const & c)
{
    ojson j;
    j["id"] = c.id;
    j["recipe_id"] = c.recipe_id;
    j["category"] = to_string(c.category);
    j["provenance"] = to_string(c.provenance);
    auto turns = ojson::array();
    for (auto const & t : c.turns) {
        ojson tj;
        tj["speaker"] = t.speaker;
        tj["text"] = t.text;
        turns.push_back(std::move(tj));
    }
    j["turns"] = std::move(turns);
    auto meta = ojson::object();
    for (auto const & [k, v] : c.meta) {
        meta[k] = v;
    }
    j["meta"] = std::move(meta);
    j["flags"] = ojson(std::vector<std::string>(c.flags.begin(), c.flags.end()));
    return dump_line(j);
}

std::ifstream open_input(std::filesystem::path const & path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorKind::io, "cannot open '" + path.string() + "' for reading");
    }
    return in;
}

std::vector<Recipe> load_recipes(std::filesystem::path const & path)
{
    std::vector<Recipe> recipes;
    std::vector<std::size_t> line_nos;
    for_each_record_line(path, [&](std::string_view line, std::size_t line_no) {
        recipes.push_back(parse_recipe_line(line, line_no));
        line_nos.push_back(line_no);
    });
    assign_recipe_ids(recipes, line_nos);
    return recipes;
}

std::size_t save_recipes(std::span<Recipe const> recipes, std::filesystem::path const & path)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error(ErrorKind::io, "cannot open '" + path.string() + "' for writing");
    }
    for (auto const & r : recipes) {
        out << format_recipe(r) << '\n';
    }
    if (!out.flush()) {
        throw Error(ErrorKind::io, "write to '" + path.string() + "' failed");
    }
    return recipes.size();
}

TopicList load_topics(std::filesystem::path const & path)
{
    TopicList list;
    std::vector<Recipe> recipes;
    std::vector<std::size_t> line_nos;
    for_each_record_line(path, [&](std::string_view line, std::size_t line_no) {
        auto j = parse_object(line, line_no);
        TopicEntry e;
        e.recipe = recipe_from_json(j, line_no);
        if (auto it = j.find("count"); it != j.end() && !it->is_null()) {
            if (!it->is_number_unsigned() || it->get<std::size_t>() == 0) {
                fail_line(line_no, "field 'count' must be a positive integer");
            }
            e.count = it->get<std::size_t>();
        }
        recipes.push_back(e.recipe);
        line_nos.push_back(line_no);
        list.entries.push_back(std::move(e));
    });
    assign_recipe_ids(recipes, line_nos);
    for (std::size_t i = 0; i < recipes.size(); ++i) {
        list.entries[i].recipe.id = recipes[i].id;
    }
    return list;
}

SeedPool load_seed_pool(std::filesystem::path const & path)
{
    return load_seed_pool(path, ValidationPolicy{});
}

SeedPool load_seed_pool(std::filesystem::path const & path, ValidationPolicy const & policy)
{
    SeedPool pool;
    std::unordered_set<std::string> ids;
    for_each_record_line(path, [&](std::string_view line, std::size_t line_no) {
        auto j = parse_object(line, line_no);
        Seed seed;
        auto rit = j.find("recipe");
        if (rit == j.end() || !rit->is_object()) {
            fail_line(line_no, "seed record needs a 'recipe' object");
        }
        seed.recipe = recipe_from_json(*rit, line_no);
        auto & conv = seed.conversation;
        conv.id = get_string(j, "id", line_no, true);
        if (seed.recipe.id.empty()) {
            seed.recipe.id = conv.id;
        }
        conv.recipe_id = seed.recipe.id;
        conversation_fields_from_json(j, line_no, conv);
        conv.provenance = Provenance::seed;
        if (!ids.insert(conv.id).second) {
            throw Error(ErrorKind::conflict, "line " + std::to_string(line_no) + ": duplicate seed id '" + conv.id + "'");
        }

        for (std::size_t i = 0; i < conv.turns.size(); ++i) {
            if (!seed.recipe.has_participant(conv.turns[i].speaker)) {
                throw Error(ErrorKind::validation,
                            "seed '" + conv.id + "' turn " + std::to_string(i) + ": speaker '" + conv.turns[i].speaker
                                + "' is not in the roster");
            }
        }
        try {
            conv.check();
        } catch (Error const & e) {
            throw Error(ErrorKind::validation, std::string("seed ") + e.what());
        }

        // Seeds are hand-written excerpts: shortness and absent speakers are
        // recorded, not fatal.
        ValidationPolicy relaxed = policy;
        relaxed.min_turns = 1;
        relaxed.require_all_speakers = false;
        auto result = validate(conv, seed.recipe, relaxed);
        conv.flags.insert(result.flags.begin(), result.flags.end());
        if (conv.turns.size() < policy.min_turns) {
            conv.flags.insert(flag::below_min_turns);
        }
        for (auto const & p : seed.recipe.participants) {
            bool present = std::any_of(conv.turns.begin(), conv.turns.end(), [&](Turn const & t) {
                return t.speaker == p;
            });
            if (!present) {
                conv.flags.insert(flag::missing_speaker);
            }
        }
        pool.seeds.push_back(std::move(seed));
    });
    return pool;
}

std::vector<Conversation> load_dataset(std::filesystem::path const & path)
{
    std::vector<Conversation> out;
    for_each_record_line(path, [&](std::string_view line, std::size_t line_no) {
        out.push_back(parse_conversation_line(line, line_no));
    });
    return out;
}

std::size_t save_dataset(std::span<Conversation const> records, std::filesystem::path const & path)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error(ErrorKind::io, "cannot open '" + path.string() + "' for writing");
    }
    for (auto const & c : records) {
        out << format_conversation(c) << '\n';
    }
    if (!out.flush()) {
        throw Error(ErrorKind::io, "write to '" + path.string() + "' failed");
    }
    return records.size();
}

std::set<std::string> scan_dataset_ids(std::filesystem::path const & path, bool * partial_tail)
{
    std::set<std::string> ids;
    if (partial_tail) {
        *partial_tail = false;
    }
    if (!std::filesystem::exists(path)) {
        return ids;
    }
    auto in = open_input(path);
    std::stringstream buf;
    buf << in.rdbuf();
    std::string const content = buf.str();

    std::size_t pos = 0;
    std::size_t line_no = 0;
    while (pos < content.size()) {
        auto nl = content.find('\n', pos);
        ++line_no;
        if (nl == std::string::npos) {
            if (partial_tail) {
                *partial_tail = true;
            }
            break;
        }
        std::string_view line(content.data() + pos, nl - pos);
        pos = nl + 1;
        if (line.find_first_not_of(" \t\r") == std::string_view::npos) {
            continue;
        }
        ids.insert(parse_conversation_line(line, line_no).id);
    }
    return ids;
}

DatasetWriter::DatasetWriter(std::filesystem::path path)
: path_(std::move(path))
{
    std::error_code ec;
    if (std::filesystem::exists(path_, ec)) {
        auto size = std::filesystem::file_size(path_, ec);
        if (!ec && size > 0) {
            std::string content;
            {
                auto in = open_input(path_);
                std::stringstream buf;
                buf << in.rdbuf();
                content = buf.str();
            }
            if (content.back() != '\n') {
                auto last = content.rfind('\n');
                std::filesystem::resize_file(path_, last == std::string::npos ? 0 : last + 1, ec);
                if (ec) {
                    throw Error(ErrorKind::io, "cannot repair torn tail of '" + path_.string() + "'");
                }
            }
        }
    }
    out_.open(path_, std::ios::binary | std::ios::app);
    if (!out_) {
        throw Error(ErrorKind::io, "cannot open '" + path_.string() + "' for appending");
    }
}

void DatasetWriter::append(Conversation const & c)
{
    auto line = format_conversation(c);
    line += '\n';
    std::lock_guard lock(mutex_);
    out_.write(line.data(), static_cast<std::streamsize>(line.size()));
    out_.flush();
    if (!out_) {
        throw Error(ErrorKind::io, "append to '" + path_.string() + "' failed");
    }
    ++written_;
}

} // namespace places
