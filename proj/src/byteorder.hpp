#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <span>
#include <vector>

#include "partseg/volume.hpp"

namespace partseg {

inline void byteswap_inplace(std::span<std::byte> raw, std::size_t width) {
  if (width <= 1) return;
  for (std::size_t i = 0; i + width <= raw.size(); i += width) {
    std::reverse(raw.begin() + static_cast<std::ptrdiff_t>(i),
                 raw.begin() + static_cast<std::ptrdiff_t>(i + width));
  }
}

constexpr bool host_is_little() { return std::endian::native == std::endian::little; }

/// Native-order samples of `dtype` widened into f32.
inline void decode_samples(std::span<const std::byte> raw, DType dtype, std::span<float> out) {
  const std::byte* p = raw.data();
  switch (dtype) {
    case DType::u8:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(std::to_integer<std::uint8_t>(p[i]));
      break;
    case DType::u16:
      for (std::size_t i = 0; i < out.size(); ++i) {
        std::uint16_t v;
        std::memcpy(&v, p + 2 * i, 2);
        out[i] = static_cast<float>(v);
      }
      break;
    case DType::u32:
      for (std::size_t i = 0; i < out.size(); ++i) {
        std::uint32_t v;
        std::memcpy(&v, p + 4 * i, 4);
        out[i] = static_cast<float>(v);
      }
      break;
    case DType::f32:
      std::memcpy(out.data(), p, out.size() * 4);
      break;
  }
}

/// f32 samples narrowed to `dtype`, native order. Integers are rounded and clamped.
inline void encode_samples(std::span<const float> in, DType dtype, std::span<std::byte> raw) {
  std::byte* p = raw.data();
  auto narrow = [](float v, double hi) {
    const double r = std::nearbyint(static_cast<double>(v));
    return std::clamp(r, 0.0, hi);
  };
  switch (dtype) {
    case DType::u8:
      for (std::size_t i = 0; i < in.size(); ++i) p[i] = static_cast<std::byte>(static_cast<std::uint8_t>(narrow(in[i], 255.0)));
      break;
    case DType::u16:
      for (std::size_t i = 0; i < in.size(); ++i) {
        const auto v = static_cast<std::uint16_t>(narrow(in[i], 65535.0));
        std::memcpy(p + 2 * i, &v, 2);
      }
      break;
    case DType::u32:
      for (std::size_t i = 0; i < in.size(); ++i) {
        const auto v = static_cast<std::uint32_t>(narrow(in[i], 4294967295.0));
        std::memcpy(p + 4 * i, &v, 4);
      }
      break;
    case DType::f32:
      std::memcpy(p, in.data(), in.size() * 4);
      break;
  }
}

}  // namespace partseg
