#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "tcra/errors.hpp"
#include "tcra/numerics/tensor.hpp"

namespace tcra {

/// Grayscale intensities round(255 * l / max(l)) in location order.
template <typename Real>
std::vector<std::uint8_t> attention_to_gray(const Tensor<Real>& weights) {
  const auto vals = weights.values();
  const Real mx = *std::max_element(vals.begin(), vals.end());
  std::vector<std::uint8_t> out(vals.size());
  for (std::size_t i = 0; i < vals.size(); ++i) {
    const double v = mx > 0 ? 255.0 * static_cast<double>(vals[i]) / static_cast<double>(mx) : 0.0;
    out[i] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
  }
  return out;
}

inline void write_pgm(const std::filesystem::path& path, std::size_t side,
                      const std::vector<std::uint8_t>& pixels) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FileError("cannot open " + path.string() + " for writing");
  os << "P5\n" << side << ' ' << side << "\n255\n";
  os.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
  if (!os) throw FileError("write failed for " + path.string());
}

struct PgmImage {
  std::size_t width = 0, height = 0;
  std::vector<std::uint8_t> pixels;
};

inline PgmImage read_pgm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FileError("cannot open " + path.string());
  std::string magic;
  int maxval = 0;
  PgmImage img;
  is >> magic >> img.width >> img.height >> maxval;
  if (magic != "P5" || maxval != 255) throw FormatError("not an 8-bit P5 image: " + path.string(), 0);
  is.get();
  img.pixels.resize(img.width * img.height);
  is.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (!is) throw FormatError("truncated PGM payload: " + path.string(), static_cast<std::size_t>(is.gcount()));
  return img;
}

/// Writes <dir>/<sample>_<subject>.csv (step,row,col,weight) and one
/// <dir>/<sample>_<subject>_<step>.pgm per step. Returns the written files.
template <typename Real>
std::vector<std::filesystem::path> dump_attention(const std::vector<Tensor<Real>>& steps, std::size_t side,
                                                  const std::filesystem::path& dir, const std::string& sample,
                                                  const std::string& subject) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw FileError("cannot create " + dir.string() + ": " + ec.message());

  std::vector<std::filesystem::path> written;
  const auto csv_path = dir / (sample + "_" + subject + ".csv");
  std::ofstream csv(csv_path);
  if (!csv) throw FileError("cannot open " + csv_path.string() + " for writing");
  csv << "step,row,col,weight\n" << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (std::size_t s = 0; s < steps.size(); ++s) {
    const auto& w = steps[s];
    if (w.size() != side * side) {
      throw DimensionError("attention map of " + std::to_string(w.size()) + " entries is not " +
                           std::to_string(side) + "x" + std::to_string(side));
    }
    for (std::size_t i = 0; i < w.size(); ++i)
      csv << s << ',' << i / side << ',' << i % side << ',' << static_cast<double>(w[i]) << '\n';
    const auto pgm = dir / (sample + "_" + subject + "_" + std::to_string(s) + ".pgm");
    write_pgm(pgm, side, attention_to_gray(w));
    written.push_back(pgm);
  }
  if (!csv) throw FileError("write failed for " + csv_path.string());
  written.insert(written.begin(), csv_path);
  return written;
}

/// Parses a CSV written by dump_attention back into per-step maps.
inline std::vector<Tensor<double>> read_attention_csv(const std::filesystem::path& path, std::size_t side) {
  std::ifstream is(path);
  if (!is) throw FileError("cannot open " + path.string());
  std::string line;
  std::getline(is, line);
  if (line != "step,row,col,weight") throw FormatError("unexpected attention CSV header", 0);
  std::vector<Tensor<double>> steps;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::size_t step = 0, row = 0, col = 0;
    double w = 0;
    char comma = 0;
    ls >> step >> comma >> row >> comma >> col >> comma >> w;
    if (!ls || row >= side || col >= side) throw FormatError("bad attention CSV row: " + line, 0);
    while (steps.size() <= step) steps.emplace_back(Shape{side * side});
    steps[step][row * side + col] = w;
  }
  return steps;
}

}  // namespace tcra
