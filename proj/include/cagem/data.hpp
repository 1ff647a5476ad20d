// Copyright (c) 2026, the cagem authors
// SPDX-License-Identifier: Apache-2.0

// Dataset loading (IDX containers, optionally gzip-compressed), dynamic
// binarization and labelled-subset selection.
//
// Expected files in the dataset directory:
//   mnist:    train-images-idx3-ubyte, train-labels-idx1-ubyte,
//             t10k-images-idx3-ubyte,  t10k-labels-idx1-ubyte
//   omniglot: omniglot-train-images-idx3-float, omniglot-train-labels-idx1-ubyte,
//             omniglot-test-images-idx3-float,  omniglot-test-labels-idx1-ubyte
// Any of them may carry a ".gz" suffix instead. Image files hold unsigned
// bytes (scaled by 1/255) or big-endian float32 values in [0, 1]; label
// files hold unsigned bytes (digit or alphabet index).

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include "cagem/rng.hpp"
#include "cagem/tensor.hpp"

namespace cagem {

enum class Split { Train, Valid, Test };
const char* to_string(Split s);
Split parse_split(const std::string& name);

struct Dataset {
  Matrix images;  // N x 784, values in [0, 1]
  std::optional<IndexVector> labels;
  Split split = Split::Train;
  int classes = 0;

  Eigen::Index size() const { return images.rows(); }
};

struct DatasetTriplet {
  Dataset train;
  Dataset valid;
  Dataset test;
};

enum class IdxType : std::uint8_t { UByte = 0x08, Float32 = 0x0D };

struct IdxArray {
  IdxType type = IdxType::UByte;
  std::vector<std::uint32_t> dims;
  std::vector<double> values;  // raw values, not rescaled
};

/// Reads a plain or gzip-compressed IDX file. Throws FormatError naming the
/// file and byte offset on malformed input.
IdxArray read_idx(const std::filesystem::path& path);
void write_idx(const std::filesystem::path& path, const IdxArray& array);

/// Images as N x (rows*cols), ubyte data scaled by 1/255.
Matrix read_idx_images(const std::filesystem::path& path);
IndexVector read_idx_labels(const std::filesystem::path& path);
void write_idx_images(const std::filesystem::path& path, const Matrix& images, IdxType type,
                      int height = 28, int width = 28);
void write_idx_labels(const std::filesystem::path& path, const IndexVector& labels);

struct LoadOptions {
  /// Examples held out from the end of the training file; negative selects
  /// the dataset default (10000 for mnist, 1345 for omniglot), clipped so at
  /// least half of the file stays in training.
  long valid_size = -1;
};

/// name is "mnist" or "omniglot".
DatasetTriplet load_dataset(const std::string& name, const std::filesystem::path& dir,
                            LoadOptions options = {});

/// Number of classes used as labels: 10 for mnist, 50 for omniglot.
int dataset_classes(const std::string& name);

/// Each pixel ~ Bernoulli(intensity).
Matrix binarize(const Matrix& batch, Rng& rng);

struct LabelledSubset {
  IndexVector indices;          // into the training split
  std::map<int, int> per_class;
};

LabelledSubset draw_labelled_subset(const Dataset& train, int n_labels, std::uint64_t seed);

/// Endless sequence of labelled index batches; reshuffles after each pass.
class LabelledCycler {
 public:
  LabelledCycler() = default;
  LabelledCycler(IndexVector indices, int batch_size);

  IndexVector next(Rng& rng);

  const IndexVector& order() const { return order_; }
  std::size_t position() const { return pos_; }
  int batch_size() const { return batch_; }
  void restore(IndexVector order, std::size_t position);

 private:
  IndexVector order_;
  std::size_t pos_ = 0;
  int batch_ = 0;
};

/// Rows of `m` selected by `idx`.
Matrix gather_rows(const Matrix& m, const IndexVector& idx);

}  // namespace cagem
