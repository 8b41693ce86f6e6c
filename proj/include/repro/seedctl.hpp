#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string_view>

namespace repro::seedctl {

enum class SeedOrigin { user, generated };

struct RootSeed {
    std::uint64_t value = 0;
    SeedOrigin origin = SeedOrigin::user;

    friend bool operator==(const RootSeed&, const RootSeed&) = default;
};

// Source of fresh 64-bit values; may throw Error(EntropyUnavailable).
using EntropySource = std::function<std::uint64_t()>;

EntropySource os_entropy();

RootSeed resolve_seed(std::optional<std::uint64_t> user_seed, const EntropySource& entropy);

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t splitmix64_next(std::uint64_t x) noexcept {
    std::uint64_t z = x + kGolden;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t fnv1a64(std::string_view bytes) noexcept {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

// Format-frozen: identical (root, label) must map to the same value forever.
std::uint64_t derive_subseed(std::uint64_t root, std::string_view label);
inline std::uint64_t derive_subseed(const RootSeed& root, std::string_view label) {
    return derive_subseed(root.value, label);
}

// splitmix64 sequence: output k is splitmix64_next(seed + k * golden).
class Stream {
public:
    explicit Stream(std::uint64_t seed) noexcept : state_(seed) {}

    std::uint64_t next_u64() noexcept {
        const std::uint64_t out = splitmix64_next(state_);
        state_ += kGolden;
        return out;
    }

    // 53-bit uniform in [0, 1).
    double next_unit_float() noexcept {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform in [0, bound) by masked rejection; bound must be > 0.
    std::uint64_t next_below(std::uint64_t bound) noexcept;

    // Standard normal via Box-Muller (consumes two draws).
    double next_gaussian() noexcept;

    template <typename T>
    void shuffle(std::span<T> items) noexcept {
        for (std::size_t i = items.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(next_below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

    [[nodiscard]] std::uint64_t state() const noexcept { return state_; }

private:
    std::uint64_t state_;
};

inline Stream make_stream(std::uint64_t seed) noexcept { return Stream(seed); }

}  // namespace repro::seedctl
