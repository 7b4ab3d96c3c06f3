#include "fedsim/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace fedsim {

namespace {

// splitmix64 finalizer
std::uint64_t mix64(std::uint64_t x) {
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ull;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebull;
    x ^= x >> 31;
    return x;
}

constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ull;

}  // namespace

std::uint64_t fnv1a64(const void* bytes, std::size_t len, std::uint64_t h) {
    const auto* p = static_cast<const unsigned char*>(bytes);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

std::uint64_t fnv1a64(std::string_view s, std::uint64_t h) {
    return fnv1a64(s.data(), s.size(), h);
}

RngStream::RngStream(std::uint64_t seed, std::string_view domain,
                     std::uint64_t client, std::uint64_t round) {
    std::uint64_t h = fnv1a64(&seed, sizeof seed);
    h = fnv1a64(domain, h);
    h = fnv1a64(&client, sizeof client, h);
    h = fnv1a64(&round, sizeof round, h);
    key_ = mix64(h);
}

std::uint64_t RngStream::next_u64() {
    ++counter_;
    return mix64(key_ + counter_ * kGolden);
}

std::uint64_t RngStream::below(std::uint64_t n) {
    if (n == 0) {
        throw std::invalid_argument("RngStream::below: n must be positive");
    }
    return static_cast<std::uint64_t>(
        (static_cast<__uint128_t>(next_u64()) * n) >> 64);
}

double RngStream::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform();
}

double RngStream::uniform_open() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double RngStream::normal() {
    if (have_spare_normal_) {
        have_spare_normal_ = false;
        return spare_normal_;
    }
    const double u1 = uniform_open();
    const double u2 = uniform_open();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * M_PI * u2;
    spare_normal_ = radius * std::sin(angle);
    have_spare_normal_ = true;
    return radius * std::cos(angle);
}

// Marsaglia-Tsang squeeze method; shape < 1 boosted through shape + 1.
double RngStream::gamma(double shape) {
    if (!(shape > 0.0)) {
        throw std::invalid_argument("RngStream::gamma: shape must be positive");
    }
    if (shape < 1.0) {
        const double boost = gamma(shape + 1.0);
        return boost * std::pow(uniform_open(), 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x = 0.0;
        double v = 0.0;
        do {
            x = normal();
            v = 1.0 + c * x;
        } while (v <= 0.0);
        v = v * v * v;
        const double u = uniform_open();
        if (u < 1.0 - 0.0331 * x * x * x * x) {
            return d * v;
        }
        if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) {
            return d * v;
        }
    }
}

std::vector<double> RngStream::dirichlet(double alpha, std::size_t k) {
    if (!(alpha > 0.0) || k == 0) {
        throw std::invalid_argument("RngStream::dirichlet: alpha > 0, k > 0 required");
    }
    std::vector<double> draws(k);
    for (;;) {
        double sum = 0.0;
        for (std::size_t i = 0; i < k; ++i) {
            draws[i] = gamma(alpha);
            sum += draws[i];
        }
        if (std::isfinite(sum) && sum > 0.0) {
            for (auto& d : draws) {
                d /= sum;
            }
            return draws;
        }
    }
}

std::vector<std::size_t> RngStream::permutation(std::size_t n) {
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) {
        perm[i] = i;
    }
    for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = below(i);
        std::swap(perm[i - 1], perm[j]);
    }
    return perm;
}

}  // namespace fedsim
