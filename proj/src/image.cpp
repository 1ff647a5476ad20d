// Copyright (c) 2026, the cagem authors
// SPDX-License-Identifier: Apache-2.0

#include "cagem/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "cagem/errors.hpp"

namespace cagem {

void write_pgm_grid(const std::filesystem::path& path, const Matrix& images, int columns, int height,
                    int width) {
  if (columns < 1) throw DomainError("pgm grid: need at least one column");
  if (images.cols() != static_cast<Eigen::Index>(height) * width)
    throw DimensionError("pgm grid: image size does not match " + std::to_string(height) + "x" +
                         std::to_string(width));
  const int n = static_cast<int>(images.rows());
  const int cols = std::max(1, std::min(columns, n));
  const int rows = std::max(1, (n + cols - 1) / cols);
  const int W = cols * (width + 1) + 1, H = rows * (height + 1) + 1;
  std::vector<unsigned char> pix(static_cast<std::size_t>(W) * H, 0);
  for (int i = 0; i < n; ++i) {
    const int oy = (i / cols) * (height + 1) + 1, ox = (i % cols) * (width + 1) + 1;
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        const double v = std::clamp(images(i, y * width + x), 0.0, 1.0);
        pix[static_cast<std::size_t>(oy + y) * W + ox + x] =
            static_cast<unsigned char>(std::lround(v * 255.0));
      }
  }
  std::ofstream f(path, std::ios::binary);
  f << "P5\n" << W << ' ' << H << "\n255\n";
  f.write(reinterpret_cast<const char*>(pix.data()), static_cast<std::streamsize>(pix.size()));
  if (!f) throw FormatError("cannot write image " + path.string());
}

}  // namespace cagem
