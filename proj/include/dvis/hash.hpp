#pragma once

#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>

namespace dvis {

/// 64-bit FNV-1a, used to key caches and to fingerprint inputs in manifests.
class ContentHash {
public:
    void bytes(const void* data, std::size_t size) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < size; ++i) {
            state_ ^= p[i];
            state_ *= 1099511628211ULL;
        }
    }

    template <typename T>
        requires std::is_trivially_copyable_v<T>
    void value(const T& v) {
        bytes(&v, sizeof(T));
    }

    template <typename T>
        requires std::is_trivially_copyable_v<T>
    void values(std::span<const T> v) {
        bytes(v.data(), v.size_bytes());
    }

    void text(std::string_view s) { bytes(s.data(), s.size()); }

    std::uint64_t digest() const { return state_; }

    std::string hex() const {
        char buf[17];
        std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(state_));
        return buf;
    }

private:
    std::uint64_t state_ = 14695981039346656037ULL;
};

} // namespace dvis
