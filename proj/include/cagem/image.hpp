// Copyright (c) 2026, the cagem authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>

#include "cagem/tensor.hpp"

namespace cagem {

/// Writes rows of `images` (values in [0, 1], each height*width pixels) as a
/// binary PGM grid with `columns` tiles per row and a 1-pixel gap.
void write_pgm_grid(const std::filesystem::path& path, const Matrix& images, int columns,
                    int height = 28, int width = 28);

}  // namespace cagem
