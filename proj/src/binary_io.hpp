#pragma once

// Little-endian primitives for the model container. Reads throw DataError on
// a short file so callers surface truncation instead of garbage.

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>

#include "confuse/errors.hpp"
#include "confuse/linalg.hpp"

namespace confuse::io {

inline void write_u8(std::ostream& out, std::uint8_t v) {
    out.put(static_cast<char>(v));
}

inline void write_u32(std::ostream& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void write_u64(std::ostream& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void write_f64(std::ostream& out, double v) {
    write_u64(out, std::bit_cast<std::uint64_t>(v));
}

inline void write_string(std::ostream& out, const std::string& s) {
    write_u32(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline void write_matrix(std::ostream& out, const Matrix& m) {
    write_u32(out, static_cast<std::uint32_t>(m.rows()));
    write_u32(out, static_cast<std::uint32_t>(m.cols()));
    for (Index i = 0; i < m.rows(); ++i)
        for (Index j = 0; j < m.cols(); ++j) write_f64(out, m(i, j));
}

[[noreturn]] inline void truncated() {
    throw DataError("truncated model file");
}

inline std::uint8_t read_u8(std::istream& in) {
    int c = in.get();
    if (c == std::char_traits<char>::eof()) truncated();
    return static_cast<std::uint8_t>(c);
}

inline std::uint32_t read_u32(std::istream& in) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(read_u8(in)) << (8 * i);
    return v;
}

inline std::uint64_t read_u64(std::istream& in) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(read_u8(in)) << (8 * i);
    return v;
}

inline double read_f64(std::istream& in) {
    return std::bit_cast<double>(read_u64(in));
}

inline std::string read_string(std::istream& in, std::uint32_t max_len = 1u << 20) {
    std::uint32_t len = read_u32(in);
    if (len > max_len) throw DataError("model file string length out of range");
    std::string s(len, '\0');
    in.read(s.data(), static_cast<std::streamsize>(len));
    if (static_cast<std::uint32_t>(in.gcount()) != len) truncated();
    return s;
}

inline Matrix read_matrix(std::istream& in, std::uint32_t max_dim = 1u << 24) {
    std::uint32_t rows = read_u32(in);
    std::uint32_t cols = read_u32(in);
    if (rows > max_dim || cols > max_dim) throw DataError("model file matrix dims out of range");
    Matrix m(static_cast<Index>(rows), static_cast<Index>(cols));
    for (Index i = 0; i < m.rows(); ++i)
        for (Index j = 0; j < m.cols(); ++j) m(i, j) = read_f64(in);
    return m;
}

}  // namespace confuse::io
