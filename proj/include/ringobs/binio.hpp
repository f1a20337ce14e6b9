#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include "ringobs/common.hpp"

namespace ringobs {
namespace detail {

// Little-endian append/read helpers for the binary containers. Byte order is
// spelled out (not memcpy'd) so files are portable across hosts.

inline void put_u8(std::string& buf, uint8_t v) { buf.push_back(static_cast<char>(v)); }

inline void put_u32(std::string& buf, uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u64(std::string& buf, uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f64(std::string& buf, double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(buf, bits);
}

inline void put_str(std::string& buf, const std::string& s) {
    put_u64(buf, s.size());
    buf.append(s);
}

class ByteReader {
public:
    ByteReader(const char* data, size_t size) : data_(data), size_(size) {}
    explicit ByteReader(const std::string& s) : ByteReader(s.data(), s.size()) {}

    uint8_t u8() {
        need(1);
        return static_cast<uint8_t>(data_[pos_++]);
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<uint8_t>(data_[pos_++])) << (8 * i);
        return v;
    }
    uint64_t u64() {
        need(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<uint8_t>(data_[pos_++])) << (8 * i);
        return v;
    }
    double f64() {
        uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
    std::string str() {
        uint64_t n = u64();
        need(n);
        std::string s(data_ + pos_, n);
        pos_ += n;
        return s;
    }
    std::string bytes(size_t n) {
        need(n);
        std::string s(data_ + pos_, n);
        pos_ += n;
        return s;
    }
    size_t remaining() const { return size_ - pos_; }

private:
    void need(size_t n) const {
        if (pos_ + n > size_) throw data_error("binary container truncated");
    }
    const char* data_;
    size_t size_;
    size_t pos_ = 0;
};

inline void write_file(const std::string& path, const std::string& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw data_error("cannot open for writing: " + path);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw data_error("short write: " + path);
}

inline std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw data_error("cannot open: " + path);
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return bytes;
}

}  // namespace detail
}  // namespace ringobs
