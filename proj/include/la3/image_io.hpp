#pragma once

// Binary netpbm (P5 grayscale / P6 RGB, maxval 255) read/write.

#include <cctype>
#include <filesystem>
#include <fstream>
#include <string>

#include "la3/augment.hpp"

namespace la3 {

inline void write_netpbm(const std::filesystem::path& path, const ImageRaster& img) {
  validate(img);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw io_error("cannot write " + path.string());
  out << (img.channels == 1 ? "P5" : "P6") << '\n' << img.width << ' ' << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (!out) throw io_error("write failed: " + path.string());
}

inline ImageRaster read_netpbm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open " + path.string());
  auto token = [&]() {
    std::string t;
    int c;
    while ((c = in.get()) != EOF) {
      if (c == '#') {
        while ((c = in.get()) != EOF && c != '\n') {}
        continue;
      }
      if (std::isspace(c)) {
        if (!t.empty()) break;
        continue;
      }
      t.push_back(static_cast<char>(c));
    }
    return t;
  };
  const std::string magic = token();
  if (magic != "P5" && magic != "P6") throw format_error(path.string() + ": not a binary PGM/PPM file");
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(token());
    h = std::stoi(token());
    maxval = std::stoi(token());
  } catch (const std::exception&) {
    throw format_error(path.string() + ": malformed header");
  }
  if (w <= 0 || h <= 0 || maxval != 255) throw format_error(path.string() + ": unsupported dimensions or maxval");
  ImageRaster img(h, w, magic == "P5" ? 1 : 3);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.pixels.size())) throw format_error(path.string() + ": truncated pixel data");
  return img;
}

}  // namespace la3
