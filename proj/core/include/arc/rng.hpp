// SPDX-License-Identifier: Apache-2.0
//! \file arc/rng.hpp
//! Counter-based random streams (Philox4x32-10) and seed fan-out.
#pragma once

#include <array>
#include <cstdint>
#include <string_view>

namespace arc {

//! Raw Philox4x32-10 block function: maps (counter, key) to 128 random bits.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

//! SplitMix64 finalizer; a bijective 64-bit mixer.
std::uint64_t mix64(std::uint64_t x);

//! FNV-1a hash of a tag string (experiment ids, purposes).
std::uint64_t hash_tag(std::string_view tag);

enum class StreamPurpose : std::uint64_t {
    noise = 1,
    batch_x = 2,
    batch_y = 3,
    initial = 4,
    data = 5,
    probe = 6,
};

/*!
 * Derive a stream id from the master seed.
 *
 * stream-id = mix(mix(mix(master ^ hash(tag)) + index) + purpose). The result
 * depends only on its arguments, never on scheduling, so trajectory i draws
 * the same numbers at any thread count.
 */
std::uint64_t derive_stream_id(std::uint64_t master_seed, std::string_view tag,
                               std::uint64_t index, StreamPurpose purpose);

/*!
 * A single random stream. The stream id is the Philox key; the block
 * position is the counter, so any position is reachable in O(1).
 */
class RandomStream {
  public:
    explicit RandomStream(std::uint64_t stream_id = 0, std::uint64_t block = 0);

    std::uint64_t next_u64();
    //! Uniform on the open interval (0, 1), 53-bit resolution.
    double uniform();
    //! Standard normal deviate (Box-Muller, pairs cached).
    double normal();
    //! Unbiased integer in [0, n). Requires n > 0.
    std::uint64_t uniform_index(std::uint64_t n);

    //! Jump to an absolute block; discards buffered output.
    void jump_to(std::uint64_t block);
    void discard_blocks(std::uint64_t blocks) { jump_to(next_block_ + blocks); }

    std::uint64_t id() const { return id_; }
    //! Next block the stream will generate.
    std::uint64_t block() const { return next_block_; }

  private:
    void refill();

    std::uint64_t id_;
    std::uint64_t next_block_;
    std::array<std::uint64_t, 2> buffer_{};
    int buffered_ = 0;
    double cached_normal_ = 0.0;
    bool has_cached_normal_ = false;
};

}  // namespace arc
