/* Copyright 2026 The Ada2Net Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#pragma once

// Little-endian tensor records:
//   name   : u32 byte length + UTF-8 bytes
//   rank   : u32
//   dims   : rank x u32
//   values : numel x IEEE-754 binary32

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "ada2net/nd/tensor.hpp"

namespace ada2net::nd {

namespace wire {

inline void putU32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t getU32(std::istream& is, const char* what) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4))
    throw FormatError(std::string("truncated input while reading ") + what);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void putString(std::ostream& os, const std::string& s) {
  putU32(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string getString(std::istream& is, const char* what) {
  const auto n = getU32(is, what);
  if (n > (1u << 24)) throw FormatError(std::string("implausible string length in ") + what);
  std::string s(n, '\0');
  if (n && !is.read(s.data(), n))
    throw FormatError(std::string("truncated input while reading ") + what);
  return s;
}

inline void putF32(std::ostream& os, float v) { putU32(os, std::bit_cast<std::uint32_t>(v)); }

inline float getF32(std::istream& is, const char* what) {
  return std::bit_cast<float>(getU32(is, what));
}

}  // namespace wire

struct TensorRecord {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

template <typename T>
void writeTensor(std::ostream& os, const std::string& name, const Tensor<T>& t) {
  wire::putString(os, name);
  wire::putU32(os, static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) wire::putU32(os, static_cast<std::uint32_t>(d));
  for (T v : t.values()) wire::putF32(os, static_cast<float>(v));
}

inline TensorRecord readTensor(std::istream& is) {
  TensorRecord r;
  r.name = wire::getString(is, "tensor name");
  const auto rank = wire::getU32(is, "tensor rank");
  if (rank > 8) throw FormatError("tensor '" + r.name + "': implausible rank");
  for (std::uint32_t i = 0; i < rank; ++i) r.shape.push_back(wire::getU32(is, "tensor dims"));
  const auto n = numel(r.shape);
  if (n > (1u << 28)) throw FormatError("tensor '" + r.name + "': implausible size");
  r.values.resize(n);
  for (auto& v : r.values) v = wire::getF32(is, "tensor values");
  return r;
}

}  // namespace ada2net::nd
