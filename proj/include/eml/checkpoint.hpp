#ifndef EML_CHECKPOINT_HPP
#define EML_CHECKPOINT_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "eml/net.hpp"

namespace eml::pipeline {

// Serialized weights plus an architecture/training descriptor.
//
// File layout, all integers little-endian:
//   magic "EMLK" | u16 version | u32 descriptor length | descriptor (UTF-8)
//   | u32 entry count | entries | payload (f32 little-endian)
// Each entry: u32 name length | name | u32 rank | rank x u32 dims
//   | u64 byte offset into the payload.
struct TensorEntry {
    std::string name;
    std::vector<std::uint32_t> dims;
    std::uint64_t offset = 0;

    std::size_t element_count() const;
};

struct ModelCheckpoint {
    std::uint16_t version = 1;
    std::string descriptor; // JSON: architecture + training metadata
    std::vector<TensorEntry> manifest;
    std::vector<float> payload;

    std::vector<std::uint8_t> serialize() const;
    static ModelCheckpoint deserialize(const std::vector<std::uint8_t>& bytes);

    void save(const std::filesystem::path& path) const;
    static ModelCheckpoint load(const std::filesystem::path& path);

    // Snapshot of parameter tensors (f64 narrowed to f32).
    static ModelCheckpoint pack(const std::string& descriptor,
                                const std::vector<net::ParamRef>& params);
    // Writes payload values back into the tensors; names and shapes must
    // match exactly (ArchitectureMismatch otherwise).
    void unpack_into(const std::vector<net::ParamRef>& params) const;
};

} // namespace eml::pipeline

#endif
