#include "eml/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace eml::pipeline {

namespace {

constexpr char kMagic[4] = {'E', 'M', 'L', 'K'};

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(std::uint8_t(v & 0xFF));
    out.push_back(std::uint8_t(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(std::uint8_t((v >> (8 * i)) & 0xFF));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(std::uint8_t((v >> (8 * i)) & 0xFF));
}

struct Reader {
    const std::vector<std::uint8_t>& bytes;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > bytes.size()) throw UnsupportedFormat("truncated checkpoint");
    }
    std::uint16_t u16() {
        need(2);
        std::uint16_t v = std::uint16_t(bytes[pos]) | std::uint16_t(bytes[pos + 1]) << 8;
        pos += 2;
        return v;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t(bytes[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t(bytes[pos + i]) << (8 * i);
        pos += 8;
        return v;
    }
    std::string str(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(bytes.data() + pos), n);
        pos += n;
        return s;
    }
};

} // namespace

std::size_t TensorEntry::element_count() const {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    return n;
}

std::vector<std::uint8_t> ModelCheckpoint::serialize() const {
    std::vector<std::uint8_t> out;
    out.insert(out.end(), kMagic, kMagic + 4);
    put_u16(out, version);
    put_u32(out, std::uint32_t(descriptor.size()));
    out.insert(out.end(), descriptor.begin(), descriptor.end());
    put_u32(out, std::uint32_t(manifest.size()));
    for (const auto& e : manifest) {
        put_u32(out, std::uint32_t(e.name.size()));
        out.insert(out.end(), e.name.begin(), e.name.end());
        put_u32(out, std::uint32_t(e.dims.size()));
        for (auto d : e.dims) put_u32(out, d);
        put_u64(out, e.offset);
    }
    for (float f : payload) {
        std::uint32_t bits = std::bit_cast<std::uint32_t>(f);
        put_u32(out, bits);
    }
    return out;
}

ModelCheckpoint ModelCheckpoint::deserialize(const std::vector<std::uint8_t>& bytes) {
    Reader r{bytes};
    if (r.str(4) != std::string(kMagic, 4))
        throw UnsupportedFormat("not a checkpoint file (bad magic)");
    ModelCheckpoint ck;
    ck.version = r.u16();
    if (ck.version != 1)
        throw UnsupportedFormat("checkpoint version " + std::to_string(ck.version));
    ck.descriptor = r.str(r.u32());
    const std::uint32_t entries = r.u32();
    std::size_t total_elems = 0;
    for (std::uint32_t i = 0; i < entries; ++i) {
        TensorEntry e;
        e.name = r.str(r.u32());
        const std::uint32_t rank = r.u32();
        for (std::uint32_t d = 0; d < rank; ++d) e.dims.push_back(r.u32());
        e.offset = r.u64();
        if (e.offset != total_elems * 4)
            throw UnsupportedFormat("checkpoint tensor " + e.name + " has gap or overlap");
        total_elems += e.element_count();
        ck.manifest.push_back(std::move(e));
    }
    if (bytes.size() - r.pos != total_elems * 4)
        throw UnsupportedFormat("checkpoint payload length " +
                                std::to_string(bytes.size() - r.pos) + " != " +
                                std::to_string(total_elems * 4));
    ck.payload.resize(total_elems);
    for (std::size_t i = 0; i < total_elems; ++i)
        ck.payload[i] = std::bit_cast<float>(r.u32());
    return ck;
}

void ModelCheckpoint::save(const std::filesystem::path& path) const {
    const auto bytes = serialize();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoFailure("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    if (!out) throw IoFailure("short write to " + path.string());
}

ModelCheckpoint ModelCheckpoint::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw IoFailure("cannot open " + path.string());
    const auto size = in.tellg();
    in.seekg(0);
    std::vector<std::uint8_t> bytes(std::size_t(size));
    in.read(reinterpret_cast<char*>(bytes.data()), size);
    if (!in) throw IoFailure("short read from " + path.string());
    return deserialize(bytes);
}

ModelCheckpoint ModelCheckpoint::pack(const std::string& descriptor,
                                      const std::vector<net::ParamRef>& params) {
    ModelCheckpoint ck;
    ck.descriptor = descriptor;
    std::uint64_t offset = 0;
    for (const auto& p : params) {
        TensorEntry e;
        e.name = p.name;
        e.dims = p.shape;
        e.offset = offset;
        if (e.element_count() != p.data->size())
            throw ArchitectureMismatch("tensor " + p.name + " shape/value mismatch");
        offset += e.element_count() * 4;
        ck.manifest.push_back(std::move(e));
        for (double v : *p.data) ck.payload.push_back(float(v));
    }
    return ck;
}

void ModelCheckpoint::unpack_into(const std::vector<net::ParamRef>& params) const {
    if (params.size() != manifest.size())
        throw ArchitectureMismatch("checkpoint has " + std::to_string(manifest.size()) +
                                   " tensors, model expects " + std::to_string(params.size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const TensorEntry& e = manifest[i];
        const net::ParamRef& p = params[i];
        if (e.name != p.name)
            throw ArchitectureMismatch("tensor " + std::to_string(i) + " is " + e.name +
                                       ", expected " + p.name);
        if (e.dims != p.shape || e.element_count() != p.data->size())
            throw ArchitectureMismatch("tensor " + e.name + " shape mismatch");
        const std::size_t base = e.offset / 4;
        for (std::size_t k = 0; k < p.data->size(); ++k)
            (*p.data)[k] = double(payload[base + k]);
    }
}

} // namespace eml::pipeline
