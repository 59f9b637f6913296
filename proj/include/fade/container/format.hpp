#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "fade/model/config.hpp"

namespace fade::container {

inline constexpr std::array<std::uint8_t, 4> kMagic{'F', 'A', 'D', 'E'};
inline constexpr std::uint16_t kFormatVersion = 1;

/// Everything the decoder needs to rebuild the encoder's model and partition.
/// Serialized little-endian in declaration order, followed by the header CRC32,
/// the payload CRC32 and the concatenated bitstreams.
struct Header {
    std::uint16_t version = kFormatVersion;
    std::uint64_t original_length = 0;
    std::uint32_t streams = 0;  // effective B after any reduction for short inputs
    std::uint32_t time_steps = 0;
    std::uint32_t embed_dim = 0;
    std::uint32_t cache_dim = 0;
    std::uint32_t hgr_dim = 0;
    std::uint32_t ffn_dim = 0;
    std::uint32_t conv_kernel = 0;
    std::uint32_t variant = 0;
    double lr = 0;
    double beta1 = 0;
    double beta2 = 0;
    double eps = 0;
    std::uint64_t seed = 0;
    std::uint64_t build_fingerprint = 0;
    std::vector<std::uint64_t> stream_lengths;

    // Filled in by parse(); serialize() recomputes them.
    std::uint32_t header_crc = 0;
    std::uint32_t payload_crc = 0;

    static Header from_config(const model::ModelConfig& cfg, std::uint64_t original_length,
                              std::uint32_t streams);
    /// Model configuration recorded in the header, with the given worker count.
    model::ModelConfig model_config(std::uint32_t workers = 1) const;

    bool operator==(const Header& other) const;
};

struct Container {
    Header header;
    std::vector<std::vector<std::uint8_t>> bitstreams;

    std::uint64_t payload_size() const;
};

/// Serialized header size (including both CRCs) for B streams.
std::size_t header_size(std::uint32_t streams) noexcept;

/// Computes stream lengths and both checksums. Throws Error(format) if the
/// header and bitstreams disagree.
std::vector<std::uint8_t> serialize(const Container& c);

/// Validates magic (format), version (version), header and payload CRC
/// (checksum) and internal consistency (format), in that order.
Container parse(std::span<const std::uint8_t> bytes);

/// Header only; the payload checksum is not verified.
Header parse_header(std::span<const std::uint8_t> bytes);

void write_container(const std::filesystem::path& path, const Container& c);
Container read_container(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

/// Identifies compiler, target ISA and numeric settings of this build.
std::uint64_t build_fingerprint();

std::uint32_t crc32(std::span<const std::uint8_t> bytes, std::uint32_t seed = 0);

}  // namespace fade::container
