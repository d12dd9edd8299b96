#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "modrec/errors.hpp"

// Little-endian byte packing. Values are assembled/parsed bytewise so the
// formats are identical on any host.

namespace modrec::io {

inline void put_u16(std::string& buf, std::uint16_t v) {
    buf.push_back(static_cast<char>(v & 0xff));
    buf.push_back(static_cast<char>((v >> 8) & 0xff));
}

inline void put_u32(std::string& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u64(std::string& buf, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_i32(std::string& buf, std::int32_t v) {
    put_u32(buf, static_cast<std::uint32_t>(v));
}

inline void put_f32(std::string& buf, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(buf, bits);
}

// Bounds-checked sequential reader; truncation errors carry the byte offset.
class Reader {
  public:
    Reader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}

    std::size_t offset() const { return off_; }
    std::size_t remaining() const { return size_ - off_; }

    void read_bytes(void* out, std::size_t n, const char* what) {
        if (off_ + n > size_)
            throw DataError(std::string("truncated file: reading ") + what + " needs " +
                                std::to_string(n) + " bytes at offset " + std::to_string(off_) +
                                " but only " + std::to_string(size_ - off_) + " remain",
                            off_);
        std::memcpy(out, data_ + off_, n);
        off_ += n;
    }

    std::uint16_t get_u16(const char* what) {
        std::uint8_t b[2];
        read_bytes(b, 2, what);
        return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
    }

    std::uint32_t get_u32(const char* what) {
        std::uint8_t b[4];
        read_bytes(b, 4, what);
        return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
               (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    }

    std::uint64_t get_u64(const char* what) {
        std::uint64_t v = 0;
        std::uint8_t b[8];
        read_bytes(b, 8, what);
        for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
        return v;
    }

    std::int32_t get_i32(const char* what) { return static_cast<std::int32_t>(get_u32(what)); }

    float get_f32(const char* what) {
        const std::uint32_t bits = get_u32(what);
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }

    std::string get_string(std::size_t n, const char* what) {
        std::string s(n, '\0');
        if (n) read_bytes(s.data(), n, what);
        return s;
    }

  private:
    const std::uint8_t* data_;
    std::size_t size_;
    std::size_t off_ = 0;
};

inline std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open file: " + path);
    in.seekg(0, std::ios::end);
    const auto size = in.tellg();
    in.seekg(0, std::ios::beg);
    std::vector<std::uint8_t> buf(static_cast<std::size_t>(size));
    if (size > 0) in.read(reinterpret_cast<char*>(buf.data()), size);
    if (!in) throw DataError("failed reading file: " + path);
    return buf;
}

inline void write_file(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open file for writing: " + path);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("failed writing file: " + path);
}

// FNV-1a 64-bit, used for run-manifest artifact hashes
inline std::uint64_t fnv1a64(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace modrec::io
