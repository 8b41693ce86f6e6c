#include "repro/seedctl.hpp"

#include "repro/error.hpp"

#include <sys/random.h>

#include <bit>
#include <cerrno>
#include <cmath>
#include <numbers>

namespace repro::seedctl {

EntropySource os_entropy() {
    return [] {
        std::uint64_t v = 0;
        ssize_t n;
        do {
            n = getrandom(&v, sizeof v, 0);
        } while (n < 0 && errno == EINTR);
        if (n != static_cast<ssize_t>(sizeof v)) fail(Errc::EntropyUnavailable, "getrandom failed");
        return v;
    };
}

RootSeed resolve_seed(std::optional<std::uint64_t> user_seed, const EntropySource& entropy) {
    if (user_seed) return {*user_seed, SeedOrigin::user};
    if (!entropy) fail(Errc::EntropyUnavailable, "no entropy source");
    return {entropy(), SeedOrigin::generated};
}

std::uint64_t derive_subseed(std::uint64_t root, std::string_view label) {
    if (label.empty()) fail(Errc::EmptyLabel);
    return splitmix64_next(root ^ fnv1a64(label));
}

std::uint64_t Stream::next_below(std::uint64_t bound) noexcept {
    if (bound <= 1) return 0;
    const std::uint64_t mask = ~std::uint64_t{0} >> std::countl_zero(bound - 1);
    for (;;) {
        const std::uint64_t x = next_u64() & mask;
        if (x < bound) return x;
    }
}

double Stream::next_gaussian() noexcept {
    // 1 - u keeps the log argument in (0, 1].
    const double u1 = 1.0 - next_unit_float();
    const double u2 = next_unit_float();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace repro::seedctl
