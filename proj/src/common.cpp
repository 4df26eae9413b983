#include "places/error.hpp"
#include "places/hash.hpp"

#include <array>
#include <limits>

namespace places {

char const * to_string(ErrorKind kind) noexcept
{
    switch (kind) {
    case ErrorKind::parse: return "parse error";
    case ErrorKind::conflict: return "conflict";
    case ErrorKind::validation: return "validation error";
    case ErrorKind::config: return "configuration error";
    case ErrorKind::io: return "I/O error";
    case ErrorKind::backend_unavailable: return "backend unavailable";
    case ErrorKind::budget_unreachable: return "turn budget unreachable";
    case ErrorKind::undefined_metric: return "undefined metric";
    case ErrorKind::incomparable: return "incomparable reports";
    case ErrorKind::undefined_test: return "undefined test";
    }
    return "error";
}

int exit_code_for(ErrorKind kind) noexcept
{
    switch (kind) {
    case ErrorKind::backend_unavailable: return 2;
    case ErrorKind::io: return 3;
    default: return 1;
    }
}

std::string to_hex(std::uint64_t value)
{
    static constexpr char digits[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[value & 0xf];
        value >>= 4;
    }
    return out;
}

std::string content_hash(std::initializer_list<std::string_view> fields)
{
    Fnv1a h;
    for (auto f : fields) {
        h.field(f);
    }
    return to_hex(h.digest());
}

std::string prompt_hash(std::string_view prompt)
{
    return to_hex(Fnv1a{}.update(prompt).digest());
}

std::uint64_t derive_seed(std::uint64_t parent, std::string_view label) noexcept
{
    // splitmix64 finalizer over the parent mixed with the label hash
    std::uint64_t z = parent ^ Fnv1a{}.update(label).digest();
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t SeededRng::below(std::uint64_t bound)
{
    if (bound <= 1) {
        return 0;
    }
    std::uint64_t const limit = std::numeric_limits<std::uint64_t>::max()
        - std::numeric_limits<std::uint64_t>::max() % bound;
    for (;;) {
        std::uint64_t x = engine_();
        if (x < limit) {
            return x % bound;
        }
    }
}

} // namespace places
