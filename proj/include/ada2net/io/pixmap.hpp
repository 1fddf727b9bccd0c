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


// Binary P6 pixmaps (maxval 255) and the "file,domain" manifest that lists a
// labelled image directory. Pixel bytes map to [-1,1] as v = 2*byte/255 - 1.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "ada2net/error.hpp"
#include "ada2net/training/dataset.hpp"

namespace ada2net::io {

struct Pixmap {
  std::size_t height = 0, width = 0;
  std::vector<float> planes;  // [3,H,W] in [-1,1]
};

inline std::uint8_t toByte(float v) {
  const double scaled = std::round((static_cast<double>(v) + 1.0) * 127.5);
  return static_cast<std::uint8_t>(std::clamp(scaled, 0.0, 255.0));
}

inline float fromByte(std::uint8_t b) { return 2.0f * static_cast<float>(b) / 255.0f - 1.0f; }

inline void writePixmap(std::ostream& os, const std::vector<float>& planes, std::size_t height,
                        std::size_t width) {
  if (planes.size() != 3 * height * width)
    throw ShapeError("writePixmap: " + std::to_string(planes.size()) + " values for 3x" +
                     std::to_string(height) + "x" + std::to_string(width));
  os << "P6\n" << width << ' ' << height << "\n255\n";
  const std::size_t plane = height * width;
  std::vector<char> bytes(3 * plane);
  for (std::size_t i = 0; i < plane; ++i)
    for (std::size_t c = 0; c < 3; ++c)
      bytes[3 * i + c] = static_cast<char>(toByte(planes[c * plane + i]));
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline void writePixmap(const std::filesystem::path& path, const std::vector<float>& planes,
                        std::size_t height, std::size_t width) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open '" + path.string() + "' for writing");
  writePixmap(os, planes, height, width);
  if (!os) throw FormatError("write to '" + path.string() + "' failed");
}

namespace detail {

// Next header integer, skipping whitespace and '#' comments.
inline std::size_t headerNumber(std::istream& is, const char* what) {
  int ch;
  while ((ch = is.peek()) != EOF) {
    if (ch == '#') {
      std::string ignored;
      std::getline(is, ignored);
    } else if (std::isspace(ch)) {
      is.get();
    } else {
      break;
    }
  }
  std::size_t v = 0;
  bool any = false;
  while ((ch = is.peek()) != EOF && std::isdigit(ch)) {
    v = v * 10 + static_cast<std::size_t>(ch - '0');
    if (v > (1u << 24)) throw FormatError(std::string("pixmap: implausible ") + what);
    is.get();
    any = true;
  }
  if (!any) throw FormatError(std::string("pixmap: missing ") + what);
  return v;
}

}  // namespace detail

inline Pixmap readPixmap(std::istream& is) {
  char magic[2];
  if (!is.read(magic, 2) || magic[0] != 'P' || magic[1] != '6')
    throw FormatError("pixmap: expected binary P6 header");
  Pixmap p;
  p.width = detail::headerNumber(is, "width");
  p.height = detail::headerNumber(is, "height");
  const auto maxval = detail::headerNumber(is, "maxval");
  if (maxval != 255) throw FormatError("pixmap: maxval " + std::to_string(maxval) + ", need 255");
  if (p.width == 0 || p.height == 0) throw FormatError("pixmap: empty image");
  if (!std::isspace(is.get())) throw FormatError("pixmap: malformed header");
  const std::size_t plane = p.height * p.width;
  std::vector<char> bytes(3 * plane);
  if (!is.read(bytes.data(), static_cast<std::streamsize>(bytes.size())))
    throw FormatError("pixmap: truncated pixel data");
  p.planes.resize(3 * plane);
  for (std::size_t i = 0; i < plane; ++i)
    for (std::size_t c = 0; c < 3; ++c)
      p.planes[c * plane + i] = fromByte(static_cast<std::uint8_t>(bytes[3 * i + c]));
  return p;
}

inline Pixmap readPixmap(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open '" + path.string() + "'");
  try {
    return readPixmap(is);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

struct ManifestEntry {
  std::string file;  // relative to the manifest's directory
  std::size_t domain = 0;
};

inline constexpr const char* kManifestName = "manifest.csv";

inline void writeManifest(std::ostream& os, const std::vector<ManifestEntry>& entries) {
  os << "file,domain\n";
  for (const auto& e : entries) os << e.file << ',' << e.domain << '\n';
}

inline std::vector<ManifestEntry> readManifest(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != "file,domain")
    throw FormatError("manifest: expected header 'file,domain'");
  std::vector<ManifestEntry> entries;
  std::size_t lineNo = 1;
  while (std::getline(is, line)) {
    ++lineNo;
    if (line.empty()) continue;
    const auto comma = line.rfind(',');
    if (comma == std::string::npos || comma == 0 || comma + 1 == line.size())
      throw FormatError("manifest line " + std::to_string(lineNo) + ": expected file,domain");
    ManifestEntry e{line.substr(0, comma), 0};
    const std::string domain = line.substr(comma + 1);
    if (!std::all_of(domain.begin(), domain.end(), [](char c) { return c >= '0' && c <= '9'; }))
      throw FormatError("manifest line " + std::to_string(lineNo) + ": bad domain '" + domain +
                        "'");
    e.domain = std::stoul(domain);
    entries.push_back(std::move(e));
  }
  return entries;
}

// Loads every image of `dir`/manifest.csv. numDomains = 0 infers it as
// max(domain) + 1.
inline training::ImageSet loadImageSet(const std::filesystem::path& dir,
                                       std::size_t numDomains = 0) {
  std::ifstream is(dir / kManifestName);
  if (!is) throw FormatError("cannot open manifest '" + (dir / kManifestName).string() + "'");
  const auto entries = readManifest(is);
  if (entries.empty()) throw FormatError("manifest '" + (dir / kManifestName).string() + "' is empty");
  training::ImageSet set;
  for (const auto& e : entries) set.numDomains = std::max(set.numDomains, e.domain + 1);
  if (numDomains != 0) {
    if (set.numDomains > numDomains)
      throw ConfigError("manifest uses domain " + std::to_string(set.numDomains - 1) +
                        " but the model has " + std::to_string(numDomains) + " domains");
    set.numDomains = numDomains;
  }
  for (const auto& e : entries) {
    auto p = readPixmap(dir / e.file);
    if (set.images.empty()) {
      set.height = p.height;
      set.width = p.width;
    } else if (p.height != set.height || p.width != set.width) {
      throw ShapeError("image '" + e.file + "' is " + std::to_string(p.height) + "x" +
                       std::to_string(p.width) + ", expected " + std::to_string(set.height) +
                       "x" + std::to_string(set.width));
    }
    set.add(std::move(p.planes), e.domain);
  }
  return set;
}

}  // namespace ada2net::io
