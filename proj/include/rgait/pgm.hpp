#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "rgait/errors.hpp"
#include "rgait/frame.hpp"

namespace rgait {

// Binary PGM (P5) I/O. Frames are single-channel; foreground = maxval,
// background = 0. Binary frames round-trip bit-exactly.

namespace detail {

inline int pgm_token(std::istream& in) {
  // Skips whitespace and '#' comments, then reads one non-negative integer.
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (!std::isspace(c)) {
      break;
    }
    c = in.get();
  }
  if (c == EOF || !std::isdigit(c)) throw data_error("pgm: malformed header");
  int value = 0;
  while (c != EOF && std::isdigit(c)) {
    value = value * 10 + (c - '0');
    c = in.get();
  }
  return value;
}

}  // namespace detail

inline SilhouetteFrame read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("missing file: " + path.string());
  char magic[2] = {0, 0};
  in.read(magic, 2);
  if (magic[0] != 'P' || magic[1] != '5')
    throw data_error("not a P5 PGM image: " + path.string());
  const int w = detail::pgm_token(in);
  const int h = detail::pgm_token(in);
  const int maxval = detail::pgm_token(in);
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535)
    throw data_error("pgm: bad dimensions in " + path.string());

  SilhouetteFrame frame(h, w);
  const std::size_t n = frame.size();
  if (maxval < 256) {
    std::vector<std::uint8_t> buf(n);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n));
    if (!in) throw data_error("pgm: truncated pixel data in " + path.string());
    for (std::size_t i = 0; i < n; ++i)
      frame.pixels[i] = static_cast<float>(buf[i]) / static_cast<float>(maxval);
  } else {
    std::vector<std::uint8_t> buf(n * 2);  // big-endian 16-bit
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n * 2));
    if (!in) throw data_error("pgm: truncated pixel data in " + path.string());
    for (std::size_t i = 0; i < n; ++i) {
      const int v = (buf[2 * i] << 8) | buf[2 * i + 1];
      frame.pixels[i] = static_cast<float>(v) / static_cast<float>(maxval);
    }
  }
  return frame;
}

inline void write_pgm(const std::filesystem::path& path, const SilhouetteFrame& frame) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error("cannot write file: " + path.string());
  out << "P5\n" << frame.width << " " << frame.height << "\n255\n";
  std::vector<std::uint8_t> buf(frame.size());
  for (std::size_t i = 0; i < frame.size(); ++i) {
    const float p = std::min(1.0f, std::max(0.0f, frame.pixels[i]));
    buf[i] = static_cast<std::uint8_t>(std::lround(p * 255.0f));
  }
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw data_error("cannot write file: " + path.string());
}

}  // namespace rgait
