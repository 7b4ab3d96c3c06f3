#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

namespace fedsim {

std::uint64_t fnv1a64(const void* bytes, std::size_t len,
                      std::uint64_t h = 14695981039346656037ull);
std::uint64_t fnv1a64(std::string_view s,
                      std::uint64_t h = 14695981039346656037ull);

/// Counter-based random stream keyed by (seed, domain, client, round).
/// Streams with identical ids replay the same sequence; drawing from one
/// stream never touches another, so client tasks can run on any thread
/// layout without changing results.
class RngStream {
public:
    RngStream(std::uint64_t seed, std::string_view domain,
              std::uint64_t client = 0, std::uint64_t round = 0);

    std::uint64_t next_u64();
    std::uint64_t below(std::uint64_t n);  // uniform in [0, n), n > 0
    double uniform();                      // [0, 1)
    double uniform(double lo, double hi);
    double normal();                       // standard normal, Box-Muller
    double gamma(double shape);            // unit scale, shape > 0
    std::vector<double> dirichlet(double alpha, std::size_t k);
    std::vector<std::size_t> permutation(std::size_t n);

private:
    double uniform_open();  // (0, 1), safe for log()

    std::uint64_t key_ = 0;
    std::uint64_t counter_ = 0;
    bool have_spare_normal_ = false;
    double spare_normal_ = 0.0;
};

}  // namespace fedsim
