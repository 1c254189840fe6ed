#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "enk/error.hpp"

// Little-endian binary primitives shared by the epoch and checkpoint file
// formats. Byte order is composed explicitly so files are identical on any
// host.
namespace enk::binio {

class Writer {
public:
    explicit Writer(const std::filesystem::path& path) : path_(path), out_(path, std::ios::binary) {
        if (!out_) throw FileError("cannot open for writing: " + path.string());
    }

    void bytes(const void* p, std::size_t n) {
        out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    }

    void u8(std::uint8_t v) { bytes(&v, 1); }

    void u16(std::uint16_t v) {
        const std::uint8_t b[2] = {std::uint8_t(v & 0xff), std::uint8_t(v >> 8)};
        bytes(b, 2);
    }

    void u32(std::uint32_t v) {
        const std::uint8_t b[4] = {std::uint8_t(v & 0xff), std::uint8_t((v >> 8) & 0xff),
                                   std::uint8_t((v >> 16) & 0xff), std::uint8_t(v >> 24)};
        bytes(b, 4);
    }

    void u64(std::uint64_t v) {
        u32(static_cast<std::uint32_t>(v & 0xffffffffULL));
        u32(static_cast<std::uint32_t>(v >> 32));
    }

    void f32(float v) {
        std::uint32_t bits;
        std::memcpy(&bits, &v, 4);
        u32(bits);
    }

    void f64(double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        u64(bits);
    }

    void magic(const char (&m)[5]) { bytes(m, 4); }

    void close() {
        out_.flush();
        if (!out_) throw FileError("write failed: " + path_.string());
        out_.close();
    }

private:
    std::filesystem::path path_;
    std::ofstream out_;
};

class Reader {
public:
    explicit Reader(const std::filesystem::path& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw FileError("cannot open for reading: " + path.string());
        buf_.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    }

    std::size_t offset() const { return pos_; }
    std::size_t remaining() const { return buf_.size() - pos_; }

    void need(std::size_t n, const char* what) {
        if (remaining() < n) throw FormatError(std::string("truncated payload reading ") + what, pos_);
    }

    void bytes(void* p, std::size_t n, const char* what) {
        need(n, what);
        std::memcpy(p, buf_.data() + pos_, n);
        pos_ += n;
    }

    std::uint8_t u8(const char* what) {
        std::uint8_t v;
        bytes(&v, 1, what);
        return v;
    }

    std::uint16_t u16(const char* what) {
        std::uint8_t b[2];
        bytes(b, 2, what);
        return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
    }

    std::uint32_t u32(const char* what) {
        std::uint8_t b[4];
        bytes(b, 4, what);
        return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
               (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    }

    std::uint64_t u64(const char* what) {
        const std::uint64_t lo = u32(what);
        const std::uint64_t hi = u32(what);
        return lo | (hi << 32);
    }

    float f32(const char* what) {
        const std::uint32_t bits = u32(what);
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }

    double f64(const char* what) {
        const std::uint64_t bits = u64(what);
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }

    void expect_magic(const char (&m)[5]) {
        const std::size_t at = pos_;
        char got[4];
        bytes(got, 4, "magic");
        if (std::memcmp(got, m, 4) != 0) throw FormatError(std::string("bad magic, expected ") + m, at);
    }

private:
    std::vector<char> buf_;
    std::size_t pos_ = 0;
};

}  // namespace enk::binio
