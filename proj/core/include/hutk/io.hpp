#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "hutk/common.hpp"

namespace hutk {

// Little-endian binary writer. All multi-byte values are written explicitly
// byte by byte so files are identical across hosts.
class BinWriter {
public:
    explicit BinWriter(const std::string& path) : path_(path), out_(path, std::ios::binary) {
        require(out_.good(), ErrorCode::IoError, "cannot open for writing: " + path);
    }

    void bytes(const void* p, size_t n) {
        out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
        require(out_.good(), ErrorCode::IoError, "write failed: " + path_);
    }

    void magic(const char m[4]) { bytes(m, 4); }
    void u8(uint8_t v) { bytes(&v, 1); }

    void u16(uint16_t v) {
        uint8_t b[2] = {static_cast<uint8_t>(v), static_cast<uint8_t>(v >> 8)};
        bytes(b, 2);
    }

    void u32(uint32_t v) {
        uint8_t b[4];
        for (int i = 0; i < 4; ++i) {
            b[i] = static_cast<uint8_t>(v >> (8 * i));
        }
        bytes(b, 4);
    }

    void i16(int16_t v) { u16(static_cast<uint16_t>(v)); }

    void f32(float v) {
        uint32_t bits;
        std::memcpy(&bits, &v, 4);
        u32(bits);
    }

    void f32_array(const float* p, size_t n) {
        for (size_t i = 0; i < n; ++i) {
            f32(p[i]);
        }
    }

    void str(const std::string& s) { bytes(s.data(), s.size()); }

    void close() {
        out_.close();
        require(out_.good(), ErrorCode::IoError, "close failed: " + path_);
    }

private:
    std::string path_;
    std::ofstream out_;
};

// Little-endian binary reader. Any short read raises the error code supplied
// at construction (Malformed for artifact files, MalformedWav for audio).
class BinReader {
public:
    BinReader(const std::string& path, ErrorCode truncated_code)
        : path_(path), truncated_(truncated_code), in_(path, std::ios::binary) {
        require(in_.good(), ErrorCode::NotFound, "cannot open: " + path);
    }

    void bytes(void* p, size_t n) {
        in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        require(static_cast<size_t>(in_.gcount()) == n, truncated_,
                "unexpected end of file: " + path_);
    }

    bool try_bytes(void* p, size_t n) {
        in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        return static_cast<size_t>(in_.gcount()) == n;
    }

    std::string magic() {
        char m[4];
        bytes(m, 4);
        return std::string(m, 4);
    }

    uint8_t u8() {
        uint8_t v;
        bytes(&v, 1);
        return v;
    }

    uint16_t u16() {
        uint8_t b[2];
        bytes(b, 2);
        return static_cast<uint16_t>(b[0] | (b[1] << 8));
    }

    uint32_t u32() {
        uint8_t b[4];
        bytes(b, 4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<uint32_t>(b[i]) << (8 * i);
        }
        return v;
    }

    int16_t i16() { return static_cast<int16_t>(u16()); }

    float f32() {
        const uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }

    void f32_array(float* p, size_t n) {
        for (size_t i = 0; i < n; ++i) {
            p[i] = f32();
        }
    }

    std::string str(size_t n) {
        std::string s(n, '\0');
        bytes(s.data(), n);
        return s;
    }

    void skip(size_t n) {
        in_.seekg(static_cast<std::streamoff>(n), std::ios::cur);
        require(in_.good(), truncated_, "unexpected end of file: " + path_);
    }

    bool at_eof() {
        in_.peek();
        return in_.eof();
    }

    const std::string& path() const { return path_; }

private:
    std::string path_;
    ErrorCode truncated_;
    std::ifstream in_;
};

}  // namespace hutk
