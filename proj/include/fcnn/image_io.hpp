#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>

#include "fcnn/tensor.hpp"

namespace fcnn {

/// Writes a 1-channel tensor as binary PGM (P5). Values are clamped to
/// [0,1] and scaled to 0..255. A non-empty comment becomes a '#' header
/// line (e.g. to record the seed an artifact was produced with).
inline void write_pgm(const Tensor& img, const std::filesystem::path& path,
                      const std::string& comment = "") {
  if (img.channels() != 1)
    throw std::invalid_argument("write_pgm: expected 1 channel");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("write_pgm: cannot open " + path.string());
  os << "P5\n";
  if (!comment.empty()) os << "# " << comment << "\n";
  os << img.width() << " " << img.height() << "\n255\n";
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) {
      const double v = std::clamp(img.at(0, y, x), 0.0, 1.0);
      os.put(static_cast<char>(std::lround(v * 255.0)));
    }
  if (!os) throw std::runtime_error("write_pgm: write failed");
}

inline Tensor read_pgm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("read_pgm: cannot open " + path.string());
  std::string magic;
  is >> magic;
  if (magic != "P5") throw std::runtime_error("read_pgm: not a P5 file");
  auto skip_comments = [&] {
    is >> std::ws;
    while (is.peek() == '#') {
      std::string line;
      std::getline(is, line);
      is >> std::ws;
    }
  };
  int w, h, maxval;
  skip_comments();
  is >> w >> h;
  skip_comments();
  is >> maxval;
  is.get();  // single whitespace after header
  if (w <= 0 || h <= 0 || maxval != 255)
    throw std::runtime_error("read_pgm: unsupported header in " +
                             path.string());
  Tensor img(1, h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int c = is.get();
      if (c < 0) throw std::runtime_error("read_pgm: truncated pixel data");
      img.at(0, y, x) = c / 255.0;
    }
  return img;
}

/// Overlay: grayscale frame tinted red where prediction >= threshold,
/// written as binary PPM (P6).
inline void write_overlay_ppm(const Tensor& frame, const Tensor& prediction,
                              const std::filesystem::path& path,
                              double threshold = 0.5,
                              const std::string& comment = "") {
  if (frame.channels() != 1 || prediction.channels() != 1 ||
      frame.height() != prediction.height() ||
      frame.width() != prediction.width())
    throw std::invalid_argument("write_overlay_ppm: shape mismatch");
  std::ofstream os(path, std::ios::binary);
  if (!os)
    throw std::runtime_error("write_overlay_ppm: cannot open " + path.string());
  os << "P6\n";
  if (!comment.empty()) os << "# " << comment << "\n";
  os << frame.width() << " " << frame.height() << "\n255\n";
  for (int y = 0; y < frame.height(); ++y)
    for (int x = 0; x < frame.width(); ++x) {
      const double v = std::clamp(frame.at(0, y, x), 0.0, 1.0);
      const int g = static_cast<int>(std::lround(v * 255.0));
      if (prediction.at(0, y, x) >= threshold) {
        os.put(static_cast<char>(std::min(255, g / 2 + 128)));
        os.put(static_cast<char>(g / 2));
        os.put(static_cast<char>(g / 2));
      } else {
        os.put(static_cast<char>(g));
        os.put(static_cast<char>(g));
        os.put(static_cast<char>(g));
      }
    }
}

}  // namespace fcnn
