#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <random>

namespace cfs {

/// Philox4x32-10 block cipher (Salmon et al., "Parallel random numbers: as easy as 1, 2, 3").
struct Philox4x32 {
    using Counter = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    static Counter encrypt(Counter ctr, Key key) noexcept;
};

/// Deterministic stream of random numbers addressed by (master_seed, stream_id).
///
/// The sequential output is block i = Philox(counter = {i, stream_id}, key = master_seed),
/// so every stream is a pure function of its two ids and distinct ids never share blocks.
/// Replication r of an experiment uses base.substream(r), which makes Monte Carlo output
/// independent of how replications are spread across workers.
class RngStream {
public:
    using result_type = std::uint64_t;

    RngStream(std::uint64_t master_seed, std::uint64_t stream_id) noexcept;

    std::uint64_t master_seed() const noexcept { return seed_; }
    std::uint64_t stream_id() const noexcept { return stream_; }

    /// Child stream keyed by index; pure in (this stream's ids, index).
    RngStream substream(std::uint64_t index) const noexcept;

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }
    result_type operator()() noexcept;

    /// Uniform on the open interval (0, 1).
    double uniform() noexcept;
    double normal();
    double exponential(double rate);
    double gamma(double shape, double scale);
    std::uint64_t poisson(double mean);

    /// Random-access uniform in (0, 1): depends only on (ids, index), never on the
    /// sequential position, and never overlaps the sequential blocks.
    double uniform_at(std::uint64_t index) const noexcept;

private:
    Philox4x32::Counter block(std::uint64_t seq, bool random_access) const noexcept;

    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t next_block_ = 0;
    std::array<std::uint64_t, 2> buffer_{};
    unsigned buffered_ = 0;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

/// splitmix64 finaliser; used to derive child stream ids.
std::uint64_t mix64(std::uint64_t x) noexcept;

} // namespace cfs
