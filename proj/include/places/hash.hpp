#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string>
#include <string_view>

namespace places {

/// 64-bit FNV-1a. Stable across platforms; used for ids and prompt keys.
class Fnv1a
{
public:
    Fnv1a & update(std::string_view bytes) noexcept
    {
        for (unsigned char c : bytes) {
            state_ ^= c;
            state_ *= 0x100000001b3ULL;
        }
        return *this;
    }

    /// Appends a field followed by a unit separator so ("ab","c") != ("a","bc").
    Fnv1a & field(std::string_view bytes) noexcept
    {
        update(bytes);
        return update(std::string_view("\x1f", 1));
    }

    [[nodiscard]] std::uint64_t digest() const noexcept { return state_; }

private:
    std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

std::string to_hex(std::uint64_t value);

/// Lowercase hex digest of the concatenated fields.
std::string content_hash(std::initializer_list<std::string_view> fields);

/// Stable key for a prompt string (hex FNV-1a of the raw bytes).
std::string prompt_hash(std::string_view prompt);

/// Derives an independent 64-bit seed from a parent seed and a label.
std::uint64_t derive_seed(std::uint64_t parent, std::string_view label) noexcept;

/// Seeded random source with platform-independent bounded draws.
///
/// std::uniform_int_distribution is implementation-defined, so draws go
/// through rejection sampling on the raw mt19937_64 stream instead.
class SeededRng
{
public:
    explicit SeededRng(std::uint64_t seed)
    : engine_(seed)
    {}

    /// Uniform integer in [0, bound). bound must be positive.
    std::uint64_t below(std::uint64_t bound);

    /// Uniform integer in [lo, hi].
    std::uint64_t between(std::uint64_t lo, std::uint64_t hi)
    {
        return lo + below(hi - lo + 1);
    }

    /// Uniform double in [0, 1).
    double unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

private:
    std::mt19937_64 engine_;
};

} // namespace places
