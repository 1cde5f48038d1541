#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace edl {

// 16-bit binary PGM (P5, maxval 65535, big-endian samples per the format).
void write_pgm16(const std::filesystem::path& path, std::size_t width, std::size_t height,
                 std::span<const std::uint16_t> values);

struct Pgm16 {
    std::size_t width = 0, height = 0;
    std::vector<std::uint16_t> values;
};
Pgm16 read_pgm16(const std::filesystem::path& path);

// 8-bit binary PPM (P6, maxval 255); returned planar [3][H][W].
struct Ppm8 {
    std::size_t width = 0, height = 0;
    std::vector<std::uint8_t> rgb;
};
Ppm8 read_ppm8(const std::filesystem::path& path);
void write_ppm8(const std::filesystem::path& path, std::size_t width, std::size_t height,
                std::span<const std::uint8_t> rgb);

// uncertainty in [0,1] mapped linearly onto [0, 65535]
std::vector<std::uint16_t> uncertainty_to_pgm_values(std::span<const double> uncertainty);

} // namespace edl
