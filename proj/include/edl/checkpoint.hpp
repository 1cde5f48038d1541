#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "edl/segnet.hpp"

namespace edl {

// On-disk model snapshot. Binary layout, all integers little-endian:
//   magic "EDLC", version u16, five SegNetConfig fields as u32,
//   then per parameter tensor (declaration order): rank u32, dims u32...,
//   values as f32.
inline constexpr std::uint16_t kCheckpointVersion = 1;

struct Checkpoint {
    SegNetConfig config;
    std::vector<std::vector<std::size_t>> shapes;
    std::vector<std::vector<float>> params;
};

Checkpoint make_checkpoint(SegNet& net);
SegNet to_network(const Checkpoint& checkpoint);

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

} // namespace edl
