#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "dain/error.hpp"
#include "dain/tensor.hpp"

namespace dain {

// DAIT tensor container: magic "DAIT", u8 rank, rank x u32 little-endian
// dims, then dims-product x f32 little-endian row-major payload.

namespace detail {

inline void put_u32_le(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xFF));
    out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xFF));
    out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xFF));
    out.push_back(static_cast<std::uint8_t>((v >> 24) & 0xFF));
}

inline std::uint32_t get_u32_le(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

} // namespace detail

inline std::vector<std::uint8_t> dait_encode(const Tensor& t) {
    std::vector<std::uint8_t> out;
    out.reserve(5 + 4 * t.shape.size() + 4 * t.numel());
    out.push_back(0x44);
    out.push_back(0x41);
    out.push_back(0x49);
    out.push_back(0x54);
    if (t.rank() > 255) throw DimensionError("dait: rank exceeds u8");
    out.push_back(static_cast<std::uint8_t>(t.rank()));
    for (int d : t.shape) detail::put_u32_le(out, static_cast<std::uint32_t>(d));
    for (float v : t.data) detail::put_u32_le(out, std::bit_cast<std::uint32_t>(v));
    return out;
}

inline Tensor dait_decode(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 5 || bytes[0] != 0x44 || bytes[1] != 0x41 || bytes[2] != 0x49 || bytes[3] != 0x54)
        throw IoError("dait: bad magic");
    const int rank = bytes[4];
    std::size_t off = 5;
    if (bytes.size() < off + 4u * rank) throw IoError("dait: truncated dims");
    std::vector<int> shape(rank);
    std::size_t n = 1;
    for (int i = 0; i < rank; ++i) {
        shape[i] = static_cast<int>(detail::get_u32_le(&bytes[off]));
        n *= static_cast<std::size_t>(shape[i]);
        off += 4;
    }
    if (bytes.size() != off + 4 * n) throw IoError("dait: payload size mismatch");
    std::vector<float> data(n);
    for (std::size_t i = 0; i < n; ++i) {
        data[i] = std::bit_cast<float>(detail::get_u32_le(&bytes[off]));
        off += 4;
    }
    return Tensor(std::move(shape), std::move(data));
}

inline void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    std::FILE* f = std::fopen(path.string().c_str(), "wb");
    if (!f) throw IoError("cannot open for write: " + path.string());
    const std::size_t n = bytes.empty() ? 0 : std::fwrite(bytes.data(), 1, bytes.size(), f);
    std::fclose(f);
    if (n != bytes.size()) throw IoError("short write: " + path.string());
}

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::FILE* f = std::fopen(path.string().c_str(), "rb");
    if (!f) throw IoError("cannot open for read: " + path.string());
    std::fseek(f, 0, SEEK_END);
    const long sz = std::ftell(f);
    std::fseek(f, 0, SEEK_SET);
    std::vector<std::uint8_t> bytes(static_cast<std::size_t>(sz < 0 ? 0 : sz));
    const std::size_t n = bytes.empty() ? 0 : std::fread(bytes.data(), 1, bytes.size(), f);
    std::fclose(f);
    if (n != bytes.size()) throw IoError("short read: " + path.string());
    return bytes;
}

inline void dait_save(const Tensor& t, const std::filesystem::path& path) {
    write_file_bytes(path, dait_encode(t));
}

inline Tensor dait_load(const std::filesystem::path& path) {
    return dait_decode(read_file_bytes(path));
}

} // namespace dain
