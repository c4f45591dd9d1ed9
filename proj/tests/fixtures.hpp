#pragma once

// Hand-assembled IDX byte streams (big-endian header, then raw bytes).

#include <array>
#include <cstdint>

namespace fixtures {

// magic 0x00000803, dims 1 x 2 x 2, pixels 0 128 255 64
inline constexpr std::array<std::uint8_t, 20> kImage2x2 = {
    0x00, 0x00, 0x08, 0x03,  //
    0x00, 0x00, 0x00, 0x01,  //
    0x00, 0x00, 0x00, 0x02,  //
    0x00, 0x00, 0x00, 0x02,  //
    0x00, 0x80, 0xFF, 0x40};

// magic 0x00000801, dim 3, labels 7 0 9
inline constexpr std::array<std::uint8_t, 11> kLabels3 = {
    0x00, 0x00, 0x08, 0x01,  //
    0x00, 0x00, 0x00, 0x03,  //
    0x07, 0x00, 0x09};

// magic 0x00000000
inline constexpr std::array<std::uint8_t, 9> kBadMagic = {
    0x00, 0x00, 0x00, 0x00,  //
    0x00, 0x00, 0x00, 0x01,  //
    0x05};

// declares 2 labels, carries 1
inline constexpr std::array<std::uint8_t, 9> kTruncatedLabels = {
    0x00, 0x00, 0x08, 0x01,  //
    0x00, 0x00, 0x00, 0x02,  //
    0x04};

// 3-D magic but only one dimension word
inline constexpr std::array<std::uint8_t, 8> kTruncatedHeader = {
    0x00, 0x00, 0x08, 0x03,  //
    0x00, 0x00, 0x00, 0x01};

// 0xFFFFFFFF^3 elements
inline constexpr std::array<std::uint8_t, 16> kOverflow = {
    0x00, 0x00, 0x08, 0x03,  //
    0xFF, 0xFF, 0xFF, 0xFF,  //
    0xFF, 0xFF, 0xFF, 0xFF,  //
    0xFF, 0xFF, 0xFF, 0xFF};

}  // namespace fixtures
