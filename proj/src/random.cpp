// Copyright (c) 2026 The GFocal Authors
// SPDX-License-Identifier: Apache-2.0

#include "gfocal/random.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "gfocal/error.hpp"

namespace gfocal {

std::uint64_t Rng::below(std::uint64_t n) {
    if (n == 0) return 0;
    // rejection sampling keeps the draw unbiased
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x;
    do {
        x = engine_();
    } while (x >= limit);
    return x % n;
}

double Rng::normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::vector<std::size_t> Rng::permutation(std::size_t n) {
    std::vector<std::size_t> p(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = i;
    for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(below(i));
        std::swap(p[i - 1], p[j]);
    }
    return p;
}

std::vector<std::uint32_t> Rng::save_state() const {
    std::ostringstream os;
    os << engine_;
    std::istringstream is(os.str());
    std::vector<std::uint32_t> words;
    std::uint64_t v;
    while (is >> v) {
        words.push_back(static_cast<std::uint32_t>(v >> 32));
        words.push_back(static_cast<std::uint32_t>(v & 0xffffffffULL));
    }
    return words;
}

void Rng::load_state(const std::vector<std::uint32_t>& words) {
    if (words.size() % 2 != 0) fail(ErrorKind::Format, "rng state has odd word count");
    std::ostringstream os;
    for (std::size_t i = 0; i < words.size(); i += 2) {
        if (i) os << ' ';
        os << ((static_cast<std::uint64_t>(words[i]) << 32) | words[i + 1]);
    }
    std::istringstream is(os.str());
    is >> engine_;
    if (is.fail()) fail(ErrorKind::Format, "rng state could not be restored");
}

}  // namespace gfocal
