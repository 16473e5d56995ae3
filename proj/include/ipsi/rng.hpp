#pragma once

#include <array>
#include <cstdint>

namespace ipsi {

// Philox4x32-10 block function (Salmon et al., SC 2011).
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

// Counter-based stream keyed by (seed, stream, substream). Two streams with
// different keys are statistically independent, so work can be split across
// threads without any shared generator state.
class CounterRng {
public:
    CounterRng(std::uint64_t seed, std::uint64_t stream, std::uint32_t substream = 0);

    std::uint32_t next_u32();
    std::uint64_t next_u64();
    // Uniform on the open interval (0, 1), 53-bit resolution.
    double uniform();
    double normal();
    bool bernoulli(double p);
    // Uniform integer in [0, bound).
    std::uint64_t below(std::uint64_t bound);

private:
    void refill();

    std::array<std::uint32_t, 2> key_;
    std::array<std::uint32_t, 4> counter_;
    std::array<std::uint32_t, 4> block_{};
    int used_ = 4;
    double spare_normal_ = 0.0;
    bool has_spare_ = false;
};

// Domain-separation tags for the substream word.
namespace stream_tag {
inline constexpr std::uint32_t folds = 0x464f4c44;
inline constexpr std::uint32_t generate = 0x47454e00;
inline constexpr std::uint32_t oracle = 0x4f52434c;
inline constexpr std::uint32_t bootstrap = 0x424f4f54;
inline constexpr std::uint32_t learner = 0x4c524e00;
} // namespace stream_tag

} // namespace ipsi
