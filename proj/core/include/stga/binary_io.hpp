#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>

namespace stga::binio {

// Little-endian scalar I/O. Hosts are assumed little-endian; the static
// assert keeps a big-endian port from silently producing wrong files.
static_assert(std::endian::native == std::endian::little, "little-endian host required");

template <typename T>
void write(std::ostream& os, T value) {
    os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
bool read(std::istream& is, T& value) {
    return static_cast<bool>(is.read(reinterpret_cast<char*>(&value), sizeof(T)));
}

inline void write_f32(std::ostream& os, double value) { write(os, static_cast<float>(value)); }

inline bool read_f32(std::istream& is, double& value) {
    float f = 0.0f;
    if (!read(is, f)) return false;
    value = f;
    return true;
}

}  // namespace stga::binio
