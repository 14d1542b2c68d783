#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "playtest/common.hpp"

namespace playtest::io {

// Raw little-endian-host serialization for model files. Every file starts
// with a 4-byte magic and a u32 version.
class Writer {
public:
    explicit Writer(std::ostream& out) : out_(out) {}

    void header(std::string_view magic, std::uint32_t version) {
        out_.write(magic.data(), static_cast<std::streamsize>(magic.size()));
        pod(version);
    }

    template <typename T>
    void pod(const T& v) {
        static_assert(std::is_trivially_copyable_v<T>);
        out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
    }

    void string(const std::string& s) {
        pod(static_cast<std::uint64_t>(s.size()));
        out_.write(s.data(), static_cast<std::streamsize>(s.size()));
    }

    template <typename T>
    void vector(const std::vector<T>& v) {
        static_assert(std::is_trivially_copyable_v<T>);
        pod(static_cast<std::uint64_t>(v.size()));
        if (!v.empty()) out_.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(T)));
    }

private:
    std::ostream& out_;
};

class Reader {
public:
    explicit Reader(std::istream& in) : in_(in) {}

    void header(std::string_view magic, std::uint32_t version) {
        std::string got(magic.size(), '\0');
        in_.read(got.data(), static_cast<std::streamsize>(got.size()));
        if (!in_ || got != magic) throw FormatError("bad magic: expected " + std::string(magic));
        const auto v = pod<std::uint32_t>();
        if (v != version)
            throw FormatError(std::string(magic) + " version mismatch: file has " + std::to_string(v) + ", expected " +
                              std::to_string(version));
    }

    template <typename T>
    T pod() {
        static_assert(std::is_trivially_copyable_v<T>);
        T v{};
        in_.read(reinterpret_cast<char*>(&v), sizeof(T));
        if (!in_) throw FormatError("truncated model file");
        return v;
    }

    std::string string() {
        const auto n = pod<std::uint64_t>();
        if (n > (1ULL << 32)) throw FormatError("corrupt string length");
        std::string s(n, '\0');
        in_.read(s.data(), static_cast<std::streamsize>(n));
        if (!in_) throw FormatError("truncated model file");
        return s;
    }

    template <typename T>
    std::vector<T> vector() {
        const auto n = pod<std::uint64_t>();
        if (n > (1ULL << 34) / sizeof(T)) throw FormatError("corrupt vector length");
        std::vector<T> v(n);
        if (n) in_.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(T)));
        if (!in_) throw FormatError("truncated model file");
        return v;
    }

private:
    std::istream& in_;
};

}  // namespace playtest::io
