#pragma once

// Small shared utilities: deterministic RNG transforms, hashing, string and
// file helpers. Everything here is allocation-light and header-only.

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace nesypr {

using Rng = std::mt19937_64;

// Uniform double in [0, 1). Hand-rolled from raw engine bits so the stream is
// identical across standard library implementations (std::uniform_real_distribution
// is not pinned by the standard).
inline double rng_uniform(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Uniform integer in [0, n). Rejection-free modulo is fine at our scales but
// biased; use rejection sampling so the stream stays exactly uniform.
inline std::uint64_t rng_below(Rng& rng, std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("rng_below: n must be positive");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x = rng();
    while (x >= limit) x = rng();
    return x % n;
}

// Standard normal via Box-Muller (again: pinned transform, not libstdc++'s).
inline double rng_normal(Rng& rng) {
    double u1 = rng_uniform(rng);
    while (u1 <= 0.0) u1 = rng_uniform(rng);
    const double u2 = rng_uniform(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
}

template <typename T>
void shuffle_inplace(Rng& rng, std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng_below(rng, i));
        std::swap(v[i - 1], v[j]);
    }
}

// FNV-1a over raw bytes; used for state hashing and checkpoint checksums.
inline std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 1469598103934665603ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

inline std::vector<std::string> split_ws(const std::string& s) {
    std::istringstream in(s);
    std::vector<std::string> out;
    std::string tok;
    while (in >> tok) out.push_back(tok);
    return out;
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open file for writing: " + path);
    out << content;
    if (!out) throw std::runtime_error("write failed: " + path);
}

// Little-endian scalar IO for the binary formats (checkpoint, dataset).
inline void put_u32(std::string& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u64(std::string& buf, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_f64(std::string& buf, double d) {
    std::uint64_t v;
    std::memcpy(&v, &d, 8);
    put_u64(buf, v);
}
inline void put_str(std::string& buf, const std::string& s) {
    put_u32(buf, static_cast<std::uint32_t>(s.size()));
    buf.append(s);
}

// Cursor-based reader with bounds checking; throws on truncation.
struct ByteReader {
    const std::string& buf;
    std::size_t pos = 0;

    explicit ByteReader(const std::string& b) : buf(b) {}

    void need(std::size_t n) const {
        if (pos + n > buf.size()) throw std::runtime_error("truncated binary input");
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        pos += 8;
        return v;
    }
    double f64() {
        const std::uint64_t v = u64();
        double d;
        std::memcpy(&d, &v, 8);
        return d;
    }
    std::string str() {
        const std::uint32_t n = u32();
        need(n);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

}  // namespace nesypr
