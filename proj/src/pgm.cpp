#include "edl/pgm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>

#include "edl/errors.hpp"

namespace edl {

namespace {

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, const std::string& buf) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("short write to " + path.string());
}

// Netpbm header scanner: skips whitespace and '#' comments between tokens.
struct TokenReader {
    const std::string& buf;
    std::size_t pos = 0;
    const std::string path;

    std::string token() {
        while (pos < buf.size()) {
            const char c = buf[pos];
            if (c == '#') {
                while (pos < buf.size() && buf[pos] != '\n') ++pos;
            } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
                ++pos;
            } else {
                break;
            }
        }
        const std::size_t start = pos;
        while (pos < buf.size() && !std::isspace(static_cast<unsigned char>(buf[pos]))) ++pos;
        if (start == pos) throw IoError(path + ": truncated header");
        return buf.substr(start, pos - start);
    }

    std::size_t number() {
        const std::string t = token();
        for (char c : t) {
            if (c < '0' || c > '9') throw IoError(path + ": bad header token '" + t + "'");
        }
        return static_cast<std::size_t>(std::stoull(t));
    }
};

} // namespace

void write_pgm16(const std::filesystem::path& path, std::size_t width, std::size_t height,
                 std::span<const std::uint16_t> values) {
    if (values.size() != width * height) throw IoError("write_pgm16: size mismatch");
    std::string buf = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n65535\n";
    buf.reserve(buf.size() + values.size() * 2);
    for (std::uint16_t v : values) {
        buf.push_back(static_cast<char>(v >> 8)); // most significant byte first
        buf.push_back(static_cast<char>(v & 0xff));
    }
    write_file(path, buf);
}

Pgm16 read_pgm16(const std::filesystem::path& path) {
    const std::string buf = read_file(path);
    TokenReader r{buf, 0, path.string()};
    if (r.token() != "P5") throw IoError(path.string() + ": not a binary PGM");
    Pgm16 out;
    out.width = r.number();
    out.height = r.number();
    const std::size_t maxval = r.number();
    if (maxval != 65535) throw IoError(path.string() + ": expected 16-bit maxval 65535");
    r.pos += 1; // single whitespace after maxval
    const std::size_t need = out.width * out.height * 2;
    if (buf.size() - r.pos < need) {
        throw IoError(path.string() + ": truncated pixel data at byte offset " +
                      std::to_string(buf.size()));
    }
    out.values.resize(out.width * out.height);
    const auto* p = reinterpret_cast<const unsigned char*>(buf.data() + r.pos);
    for (std::size_t i = 0; i < out.values.size(); ++i) {
        out.values[i] = static_cast<std::uint16_t>((p[2 * i] << 8) | p[2 * i + 1]);
    }
    return out;
}

Ppm8 read_ppm8(const std::filesystem::path& path) {
    const std::string buf = read_file(path);
    TokenReader r{buf, 0, path.string()};
    if (r.token() != "P6") throw IoError(path.string() + ": not a binary PPM");
    Ppm8 out;
    out.width = r.number();
    out.height = r.number();
    const std::size_t maxval = r.number();
    if (maxval != 255) throw IoError(path.string() + ": expected 8-bit maxval 255");
    r.pos += 1;
    const std::size_t plane = out.width * out.height;
    if (buf.size() - r.pos < plane * 3) {
        throw IoError(path.string() + ": truncated pixel data at byte offset " +
                      std::to_string(buf.size()));
    }
    out.rgb.resize(plane * 3);
    const auto* p = reinterpret_cast<const unsigned char*>(buf.data() + r.pos);
    // interleaved RGB on disk -> planar in memory
    for (std::size_t i = 0; i < plane; ++i) {
        out.rgb[0 * plane + i] = p[3 * i];
        out.rgb[1 * plane + i] = p[3 * i + 1];
        out.rgb[2 * plane + i] = p[3 * i + 2];
    }
    return out;
}

void write_ppm8(const std::filesystem::path& path, std::size_t width, std::size_t height,
                std::span<const std::uint8_t> rgb) {
    const std::size_t plane = width * height;
    if (rgb.size() != plane * 3) throw IoError("write_ppm8: size mismatch");
    std::string buf = "P6\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
    buf.reserve(buf.size() + plane * 3);
    for (std::size_t i = 0; i < plane; ++i) {
        buf.push_back(static_cast<char>(rgb[0 * plane + i]));
        buf.push_back(static_cast<char>(rgb[1 * plane + i]));
        buf.push_back(static_cast<char>(rgb[2 * plane + i]));
    }
    write_file(path, buf);
}

std::vector<std::uint16_t> uncertainty_to_pgm_values(std::span<const double> uncertainty) {
    std::vector<std::uint16_t> out(uncertainty.size());
    for (std::size_t i = 0; i < uncertainty.size(); ++i) {
        const double v = std::clamp(uncertainty[i], 0.0, 1.0);
        out[i] = static_cast<std::uint16_t>(std::lround(v * 65535.0));
    }
    return out;
}

} // namespace edl
