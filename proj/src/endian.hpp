#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <type_traits>

namespace ladc::detail {

template <typename T>
using bits_of = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;

template <typename T>
void put_le(std::ostream& out, T value) {
    auto bits = std::bit_cast<bits_of<T>>(value);
    std::array<char, sizeof(T)> bytes{};
    for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xffU);
    out.write(bytes.data(), bytes.size());
}

// False on a short read.
template <typename T>
bool get_le(std::istream& in, T& value) {
    std::array<unsigned char, sizeof(T)> bytes{};
    in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
    if (in.gcount() != static_cast<std::streamsize>(bytes.size())) return false;
    bits_of<T> bits = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<bits_of<T>>(bytes[i]) << (8 * i);
    value = std::bit_cast<T>(bits);
    return true;
}

}  // namespace ladc::detail
