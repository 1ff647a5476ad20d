// Copyright (c) 2026, the cagem authors
// SPDX-License-Identifier: Apache-2.0

#include "cagem/data.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "cagem/errors.hpp"

namespace cagem {

namespace {

std::string describe(const std::filesystem::path& path, std::size_t offset, const std::string& what) {
  return path.string() + ": " + what + " (byte offset " + std::to_string(offset) + ")";
}

std::vector<unsigned char> read_all(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw FormatError("missing data file: " + path.string());
  gzFile f = gzopen(path.string().c_str(), "rb");
  if (!f) throw FormatError("cannot open data file: " + path.string());
  std::vector<unsigned char> bytes;
  unsigned char buf[1 << 16];
  int got;
  while ((got = gzread(f, buf, sizeof buf)) > 0) bytes.insert(bytes.end(), buf, buf + got);
  const bool failed = got < 0;
  gzclose(f);
  if (failed) throw FormatError("corrupt compressed data file: " + path.string());
  return bytes;
}

std::uint32_t be32(const unsigned char* p) {
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) | p[3];
}

void put_be32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<unsigned char>(v >> s));
}

std::filesystem::path find_file(const std::filesystem::path& dir, const std::string& base) {
  const auto plain = dir / base;
  if (std::filesystem::exists(plain)) return plain;
  const auto gz = dir / (base + ".gz");
  if (std::filesystem::exists(gz)) return gz;
  throw FormatError("missing data file: " + plain.string() + " (or " + gz.string() + ")");
}

void shuffle(IndexVector& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.next_u64() % i);
    std::swap(v[i - 1], v[j]);
  }
}

Dataset make_split(const Matrix& images, const std::optional<IndexVector>& labels, Eigen::Index start,
                   Eigen::Index count, Split split, int classes) {
  Dataset d;
  d.images = images.middleRows(start, count);
  if (labels) d.labels = IndexVector(labels->begin() + start, labels->begin() + start + count);
  d.split = split;
  d.classes = classes;
  return d;
}

}  // namespace

const char* to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Valid: return "valid";
    case Split::Test: return "test";
  }
  return "?";
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::Train;
  if (name == "valid") return Split::Valid;
  if (name == "test") return Split::Test;
  throw ConfigError("unknown split '" + name + "' (expected train, valid or test)");
}

IdxArray read_idx(const std::filesystem::path& path) {
  const std::vector<unsigned char> bytes = read_all(path);
  if (bytes.size() < 4) throw FormatError(describe(path, bytes.size(), "truncated header"));
  if (bytes[0] != 0 || bytes[1] != 0)
    throw FormatError(describe(path, 0, "bad magic number, expected two zero bytes"));
  IdxArray a;
  if (bytes[2] == 0x08)
    a.type = IdxType::UByte;
  else if (bytes[2] == 0x0D)
    a.type = IdxType::Float32;
  else
    throw FormatError(describe(path, 2, "unsupported element type " + std::to_string(bytes[2])));
  const std::size_t ndims = bytes[3];
  if (ndims == 0) throw FormatError(describe(path, 3, "zero dimensions"));
  if (bytes.size() < 4 + 4 * ndims) throw FormatError(describe(path, bytes.size(), "truncated dimensions"));
  std::size_t count = 1;
  for (std::size_t d = 0; d < ndims; ++d) {
    a.dims.push_back(be32(&bytes[4 + 4 * d]));
    count *= a.dims.back();
  }
  const std::size_t offset = 4 + 4 * ndims;
  const std::size_t width = a.type == IdxType::UByte ? 1 : 4;
  if (bytes.size() != offset + count * width)
    throw FormatError(describe(path, std::min(bytes.size(), offset + count * width),
                               "payload holds " + std::to_string(bytes.size() - offset) +
                                   " bytes, header implies " + std::to_string(count * width)));
  a.values.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    if (a.type == IdxType::UByte) {
      a.values[i] = bytes[offset + i];
    } else {
      const std::uint32_t bits = be32(&bytes[offset + 4 * i]);
      a.values[i] = std::bit_cast<float>(bits);
    }
  }
  return a;
}

void write_idx(const std::filesystem::path& path, const IdxArray& a) {
  std::size_t count = 1;
  for (auto d : a.dims) count *= d;
  if (count != a.values.size()) throw DimensionError("write_idx: dims do not match value count");
  std::vector<unsigned char> out{0, 0, static_cast<unsigned char>(a.type),
                                 static_cast<unsigned char>(a.dims.size())};
  for (auto d : a.dims) put_be32(out, d);
  for (double v : a.values) {
    if (a.type == IdxType::UByte) {
      if (v < 0 || v > 255 || v != std::floor(v))
        throw DomainError("write_idx: value " + std::to_string(v) + " is not an unsigned byte");
      out.push_back(static_cast<unsigned char>(v));
    } else {
      put_be32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
  }
  const bool gz = path.extension() == ".gz";
  if (gz) {
    gzFile f = gzopen(path.string().c_str(), "wb");
    if (!f || gzwrite(f, out.data(), static_cast<unsigned>(out.size())) != static_cast<int>(out.size()))
      throw FormatError("cannot write " + path.string());
    gzclose(f);
  } else {
    std::ofstream f(path, std::ios::binary);
    f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!f) throw FormatError("cannot write " + path.string());
  }
}

Matrix read_idx_images(const std::filesystem::path& path) {
  const IdxArray a = read_idx(path);
  if (a.dims.size() != 3) throw FormatError(describe(path, 3, "image file must have 3 dimensions"));
  const Eigen::Index n = a.dims[0];
  const Eigen::Index d = static_cast<Eigen::Index>(a.dims[1]) * a.dims[2];
  Matrix m(n, d);
  const double divisor = a.type == IdxType::UByte ? 255.0 : 1.0;
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = a.values[static_cast<std::size_t>(i)] / divisor;
  if (m.size() > 0 && (m.minCoeff() < 0.0 || m.maxCoeff() > 1.0))
    throw FormatError(describe(path, 4 + 12, "pixel intensities outside [0, 1]"));
  return m;
}

IndexVector read_idx_labels(const std::filesystem::path& path) {
  const IdxArray a = read_idx(path);
  if (a.dims.size() != 1 || a.type != IdxType::UByte)
    throw FormatError(describe(path, 2, "label file must be a 1-dimensional ubyte array"));
  return IndexVector(a.values.begin(), a.values.end());
}

void write_idx_images(const std::filesystem::path& path, const Matrix& images, IdxType type,
                      int height, int width) {
  if (static_cast<Eigen::Index>(height) * width != images.cols())
    throw DimensionError("write_idx_images: image width does not match height*width");
  IdxArray a;
  a.type = type;
  a.dims = {static_cast<std::uint32_t>(images.rows()), static_cast<std::uint32_t>(height),
            static_cast<std::uint32_t>(width)};
  a.values.resize(static_cast<std::size_t>(images.size()));
  for (Eigen::Index i = 0; i < images.size(); ++i)
    a.values[static_cast<std::size_t>(i)] =
        type == IdxType::UByte ? std::round(images.data()[i] * 255.0) : images.data()[i];
  write_idx(path, a);
}

void write_idx_labels(const std::filesystem::path& path, const IndexVector& labels) {
  IdxArray a;
  a.dims = {static_cast<std::uint32_t>(labels.size())};
  a.values.assign(labels.begin(), labels.end());
  write_idx(path, a);
}

int dataset_classes(const std::string& name) {
  if (name == "mnist") return 10;
  if (name == "omniglot") return 50;
  throw ConfigError("unknown dataset '" + name + "' (expected mnist or omniglot)");
}

DatasetTriplet load_dataset(const std::string& name, const std::filesystem::path& dir,
                            LoadOptions options) {
  const int classes = dataset_classes(name);
  std::string train_img, train_lbl, test_img, test_lbl;
  long default_valid;
  if (name == "mnist") {
    train_img = "train-images-idx3-ubyte";
    train_lbl = "train-labels-idx1-ubyte";
    test_img = "t10k-images-idx3-ubyte";
    test_lbl = "t10k-labels-idx1-ubyte";
    default_valid = 10000;
  } else {
    train_img = "omniglot-train-images-idx3-float";
    train_lbl = "omniglot-train-labels-idx1-ubyte";
    test_img = "omniglot-test-images-idx3-float";
    test_lbl = "omniglot-test-labels-idx1-ubyte";
    default_valid = 1345;
  }
  const auto tr_path = find_file(dir, train_img);
  const Matrix train = read_idx_images(tr_path);
  const IndexVector train_labels = read_idx_labels(find_file(dir, train_lbl));
  const auto te_path = find_file(dir, test_img);
  const Matrix test = read_idx_images(te_path);
  const IndexVector test_labels = read_idx_labels(find_file(dir, test_lbl));
  if (train.rows() != static_cast<Eigen::Index>(train_labels.size()))
    throw FormatError(tr_path.string() + ": image and label counts differ");
  if (test.rows() != static_cast<Eigen::Index>(test_labels.size()))
    throw FormatError(te_path.string() + ": image and label counts differ");
  if (train.cols() != test.cols()) throw FormatError("train and test images differ in size");
  for (const IndexVector* l : {&train_labels, &test_labels})
    for (int y : *l)
      if (y < 0 || y >= classes)
        throw FormatError(name + ": label " + std::to_string(y) + " outside [0, " +
                          std::to_string(classes) + ")");

  long valid = options.valid_size < 0 ? default_valid : options.valid_size;
  valid = std::min<long>(valid, static_cast<long>(train.rows() / 2));
  const Eigen::Index n_train = train.rows() - valid;
  DatasetTriplet t;
  t.train = make_split(train, train_labels, 0, n_train, Split::Train, classes);
  t.valid = make_split(train, train_labels, n_train, valid, Split::Valid, classes);
  t.test = make_split(test, test_labels, 0, test.rows(), Split::Test, classes);
  return t;
}

Matrix binarize(const Matrix& batch, Rng& rng) {
  Matrix out(batch.rows(), batch.cols());
  for (Eigen::Index i = 0; i < batch.size(); ++i) {
    const double p = batch.data()[i];
    if (!(p >= 0.0 && p <= 1.0))
      throw DomainError("binarize: intensity " + std::to_string(p) + " outside [0, 1]");
    out.data()[i] = rng.uniform() < p ? 1.0 : 0.0;
  }
  return out;
}

LabelledSubset draw_labelled_subset(const Dataset& train, int n_labels, std::uint64_t seed) {
  if (!train.labels) throw ConfigError("labelled subset: dataset has no labels");
  const int c = train.classes;
  if (c < 1) throw ConfigError("labelled subset: dataset has no classes");
  if (n_labels < 1 || n_labels % c != 0)
    throw ConfigError("labelled subset: " + std::to_string(n_labels) +
                      " labels cannot be split evenly over " + std::to_string(c) + " classes");
  const int per = n_labels / c;
  std::vector<IndexVector> by_class(static_cast<std::size_t>(c));
  for (std::size_t i = 0; i < train.labels->size(); ++i)
    by_class.at(static_cast<std::size_t>((*train.labels)[i])).push_back(static_cast<int>(i));
  Rng rng(seed);
  LabelledSubset s;
  for (int k = 0; k < c; ++k) {
    IndexVector& pool = by_class[static_cast<std::size_t>(k)];
    if (static_cast<int>(pool.size()) < per)
      throw ConfigError("labelled subset: class " + std::to_string(k) + " has only " +
                        std::to_string(pool.size()) + " examples, " + std::to_string(per) + " needed");
    for (int i = 0; i < per; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.next_u64() % (pool.size() - i));
      std::swap(pool[static_cast<std::size_t>(i)], pool[j]);
      s.indices.push_back(pool[static_cast<std::size_t>(i)]);
    }
    s.per_class[k] = per;
  }
  return s;
}

LabelledCycler::LabelledCycler(IndexVector indices, int batch_size)
    : order_(std::move(indices)), batch_(batch_size) {
  if (order_.empty()) throw ConfigError("labelled cycler: no labelled examples");
  if (batch_size < 1) throw ConfigError("labelled cycler: batch size must be >= 1");
  pos_ = order_.size();  // forces a shuffle before the first batch
}

IndexVector LabelledCycler::next(Rng& rng) {
  IndexVector out;
  out.reserve(static_cast<std::size_t>(batch_));
  while (static_cast<int>(out.size()) < batch_) {
    if (pos_ >= order_.size()) {
      shuffle(order_, rng);
      pos_ = 0;
    }
    out.push_back(order_[pos_++]);
  }
  return out;
}

void LabelledCycler::restore(IndexVector order, std::size_t position) {
  if (position > order.size()) throw FormatError("labelled cycler: position past the end");
  order_ = std::move(order);
  pos_ = position;
}

Matrix gather_rows(const Matrix& m, const IndexVector& idx) {
  Matrix out(static_cast<Eigen::Index>(idx.size()), m.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= m.rows()) throw DimensionError("gather_rows: index out of range");
    out.row(static_cast<Eigen::Index>(i)) = m.row(idx[i]);
  }
  return out;
}

}  // namespace cagem
