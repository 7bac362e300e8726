#include "mcrc/hashing.hpp"

#include "mcrc/error.hpp"

#include <cstdio>

namespace mcrc {

const char* to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::parse: return "parse";
        case ErrorCode::integrity: return "integrity";
        case ErrorCode::config: return "config";
        case ErrorCode::usage: return "usage";
        case ErrorCode::transient: return "transient";
        case ErrorCode::permanent: return "permanent";
        case ErrorCode::exhaustion: return "exhaustion";
        case ErrorCode::validation: return "validation";
        case ErrorCode::stage_order: return "stage_order";
        case ErrorCode::conflict: return "conflict";
        case ErrorCode::not_found: return "not_found";
        case ErrorCode::unauthorized: return "unauthorized";
        case ErrorCode::export_error: return "export";
        case ErrorCode::invalid_argument: return "invalid_argument";
    }
    return "unknown";
}

std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed) {
    std::uint64_t h = seed;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string to_hex(std::uint64_t value) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
    return buf;
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace mcrc
