#pragma once

// Internal little-endian binary encoding helpers shared by the checkpoint and
// train-state writers. Not installed.

#include <bit>
#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>

namespace stairiqa::binio {

inline void put_bytes(std::string& out, const void* data, std::size_t n) {
    out.append(static_cast<const char*>(data), n);
}

inline void put_u16(std::string& out, std::uint16_t v) {
    const unsigned char b[2] = {static_cast<unsigned char>(v & 0xff), static_cast<unsigned char>(v >> 8)};
    put_bytes(out, b, 2);
}

inline void put_u32(std::string& out, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    put_bytes(out, b, 4);
}

inline void put_u64(std::string& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    put_bytes(out, b, 8);
}

inline void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

inline void put_str(std::string& out, const std::string& s) {
    put_u32(out, static_cast<std::uint32_t>(s.size()));
    put_bytes(out, s.data(), s.size());
}

class Reader {
public:
    Reader(std::string bytes, std::string path) : bytes_(std::move(bytes)), path_(std::move(path)) {}

    void read(void* dst, std::size_t n) {
        if (pos_ + n > bytes_.size()) {
            throw std::runtime_error(path_ + ": truncated file at byte " + std::to_string(pos_));
        }
        std::memcpy(dst, bytes_.data() + pos_, n);
        pos_ += n;
    }

    std::uint16_t u16() {
        unsigned char b[2];
        read(b, 2);
        return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
    }

    std::uint32_t u32() {
        unsigned char b[4];
        read(b, 4);
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
        return v;
    }

    std::uint64_t u64() {
        unsigned char b[8];
        read(b, 8);
        std::uint64_t v = 0;
        for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
        return v;
    }

    double f64() { return std::bit_cast<double>(u64()); }

    std::string str(std::size_t n) {
        std::string s(n, '\0');
        read(s.data(), n);
        return s;
    }

    std::string str() { return str(u32()); }

    bool at_end() const { return pos_ == bytes_.size(); }
    const std::string& path() const { return path_; }

private:
    std::string bytes_;
    std::string path_;
    std::size_t pos_ = 0;
};

}  // namespace stairiqa::binio
