#include "cfs/rng.hpp"

#include "cfs/core.hpp"

#include <cmath>

namespace cfs {

namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) noexcept
{
    const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
    hi = static_cast<std::uint32_t>(p >> 32);
    lo = static_cast<std::uint32_t>(p);
}

inline double to_open_unit(std::uint64_t x) noexcept
{
    return (static_cast<double>(x >> 11) + 0.5) * 0x1.0p-53;
}

} // namespace

Philox4x32::Counter Philox4x32::encrypt(Counter ctr, Key key) noexcept
{
    for (int round = 0; round < 10; ++round) {
        if (round > 0) {
            key[0] += kWeyl0;
            key[1] += kWeyl1;
        }
        std::uint32_t hi0, lo0, hi1, lo1;
        mulhilo(kMul0, ctr[0], hi0, lo0);
        mulhilo(kMul1, ctr[2], hi1, lo1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
}

std::uint64_t mix64(std::uint64_t x) noexcept
{
    x ^= x >> 30;
    x *= 0xBF58476D1CE4E5B9ull;
    x ^= x >> 27;
    x *= 0x94D049BB133111EBull;
    x ^= x >> 31;
    return x;
}

RngStream::RngStream(std::uint64_t master_seed, std::uint64_t stream_id) noexcept
    : seed_(master_seed), stream_(stream_id)
{
}

RngStream RngStream::substream(std::uint64_t index) const noexcept
{
    return RngStream(seed_, mix64(stream_ ^ mix64(index + 0x9E3779B97F4A7C15ull)));
}

Philox4x32::Counter RngStream::block(std::uint64_t seq, bool random_access) const noexcept
{
    const auto hi = static_cast<std::uint32_t>(seq >> 32) | (random_access ? 0x80000000u : 0u);
    Philox4x32::Counter ctr{static_cast<std::uint32_t>(seq), hi, static_cast<std::uint32_t>(stream_),
                            static_cast<std::uint32_t>(stream_ >> 32)};
    Philox4x32::Key key{static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32)};
    return Philox4x32::encrypt(ctr, key);
}

RngStream::result_type RngStream::operator()() noexcept
{
    if (buffered_ == 0) {
        const auto out = block(next_block_++, false);
        buffer_[0] = (static_cast<std::uint64_t>(out[1]) << 32) | out[0];
        buffer_[1] = (static_cast<std::uint64_t>(out[3]) << 32) | out[2];
        buffered_ = 2;
    }
    return buffer_[2 - buffered_--];
}

double RngStream::uniform() noexcept { return to_open_unit((*this)()); }

double RngStream::normal() { return normal_(*this); }

double RngStream::exponential(double rate)
{
    if (!(rate > 0.0))
        throw Error(ErrorCode::BadParams, "exponential rate must be positive");
    return -std::log(uniform()) / rate;
}

double RngStream::gamma(double shape, double scale)
{
    if (!(shape > 0.0) || !(scale > 0.0))
        throw Error(ErrorCode::BadParams, "gamma shape and scale must be positive");
    std::gamma_distribution<double> dist(shape, scale);
    return dist(*this);
}

std::uint64_t RngStream::poisson(double mean)
{
    if (mean < 0.0)
        throw Error(ErrorCode::BadParams, "Poisson mean must be non-negative");
    if (mean == 0.0)
        return 0;
    std::poisson_distribution<std::uint64_t> dist(mean);
    return dist(*this);
}

double RngStream::uniform_at(std::uint64_t index) const noexcept
{
    const auto out = block(index, true);
    return to_open_unit((static_cast<std::uint64_t>(out[1]) << 32) | out[0]);
}

} // namespace cfs
