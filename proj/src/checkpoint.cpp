#include "edl/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <string>

#include "edl/errors.hpp"

namespace edl {

namespace {

constexpr char kMagic[4] = {'E', 'D', 'L', 'C'};

void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, float v) {
    const std::uint32_t bits = std::bit_cast<std::uint32_t>(v);
    put_u32(out, bits);
}

struct Reader {
    const std::string& buf;
    std::size_t pos = 0;
    const std::string path;

    void need(std::size_t n) const {
        if (pos + n > buf.size()) {
            throw IoError(path + ": truncated at byte offset " + std::to_string(buf.size()) +
                          " (needed " + std::to_string(pos + n) + ")");
        }
    }
    std::uint16_t u16() {
        need(2);
        const auto* p = reinterpret_cast<const unsigned char*>(buf.data() + pos);
        pos += 2;
        return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
    }
    std::uint32_t u32() {
        need(4);
        const auto* p = reinterpret_cast<const unsigned char*>(buf.data() + pos);
        pos += 4;
        return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
               (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
    }
    float f32() { return std::bit_cast<float>(u32()); }
};

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return buf;
}

void write_file(const std::filesystem::path& path, const std::string& buf) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("short write to " + path.string());
}

} // namespace

Checkpoint make_checkpoint(SegNet& net) {
    Checkpoint ckpt;
    ckpt.config = net.config();
    for (const Tensor* p : net.parameters()) {
        ckpt.shapes.push_back(p->shape);
        std::vector<float> vals(p->size());
        for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = static_cast<float>(p->data[i]);
        ckpt.params.push_back(std::move(vals));
    }
    return ckpt;
}

SegNet to_network(const Checkpoint& checkpoint) {
    SegNet net(checkpoint.config);
    auto params = net.parameters();
    if (params.size() != checkpoint.params.size()) {
        throw IoError("checkpoint parameter count does not match its own config");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i]->shape != checkpoint.shapes[i] ||
            params[i]->size() != checkpoint.params[i].size()) {
            throw IoError("checkpoint tensor " + std::to_string(i) + " has unexpected shape");
        }
        for (std::size_t j = 0; j < params[i]->size(); ++j) {
            params[i]->data[j] = static_cast<double>(checkpoint.params[i][j]);
        }
    }
    return net;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
    std::string buf;
    buf.append(kMagic, 4);
    put_u16(buf, kCheckpointVersion);
    put_u32(buf, static_cast<std::uint32_t>(checkpoint.config.in_channels));
    put_u32(buf, static_cast<std::uint32_t>(checkpoint.config.hidden_channels));
    put_u32(buf, static_cast<std::uint32_t>(checkpoint.config.depth));
    put_u32(buf, static_cast<std::uint32_t>(checkpoint.config.num_classes));
    put_u32(buf, static_cast<std::uint32_t>(checkpoint.config.kernel_size));
    for (std::size_t i = 0; i < checkpoint.params.size(); ++i) {
        put_u32(buf, static_cast<std::uint32_t>(checkpoint.shapes[i].size()));
        for (std::size_t d : checkpoint.shapes[i]) put_u32(buf, static_cast<std::uint32_t>(d));
        for (float v : checkpoint.params[i]) put_f32(buf, v);
    }
    write_file(path, buf);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    const std::string buf = read_file(path);
    Reader r{buf, 0, path.string()};
    r.need(4);
    if (std::memcmp(buf.data(), kMagic, 4) != 0) {
        throw IoError(path.string() + ": not a checkpoint file (bad magic)");
    }
    r.pos = 4;
    const std::uint16_t version = r.u16();
    if (version != kCheckpointVersion) {
        throw IoError(path.string() + ": checkpoint version " + std::to_string(version) +
                      " unsupported (this build reads version " +
                      std::to_string(kCheckpointVersion) + ")");
    }
    Checkpoint ckpt;
    ckpt.config.in_channels = r.u32();
    ckpt.config.hidden_channels = r.u32();
    ckpt.config.depth = r.u32();
    ckpt.config.num_classes = r.u32();
    ckpt.config.kernel_size = r.u32();
    ckpt.config.validate();

    // expected tensor count: depth conv layers, weight + bias each
    const std::size_t tensors = ckpt.config.depth * 2;
    for (std::size_t i = 0; i < tensors; ++i) {
        const std::uint32_t rank = r.u32();
        if (rank == 0 || rank > 4) {
            throw IoError(path.string() + ": tensor " + std::to_string(i) + " has bad rank " +
                          std::to_string(rank));
        }
        std::vector<std::size_t> shape(rank);
        std::size_t count = 1;
        for (std::uint32_t d = 0; d < rank; ++d) {
            shape[d] = r.u32();
            count *= shape[d];
        }
        std::vector<float> vals(count);
        for (std::size_t j = 0; j < count; ++j) vals[j] = r.f32();
        ckpt.shapes.push_back(std::move(shape));
        ckpt.params.push_back(std::move(vals));
    }
    if (r.pos != buf.size()) {
        throw IoError(path.string() + ": trailing bytes at offset " + std::to_string(r.pos));
    }
    return ckpt;
}

} // namespace edl
