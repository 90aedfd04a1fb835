// Copyright 2026 The structprior Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "structprior/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>

#include "structprior/error.hpp"

namespace structprior {

namespace {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIoError, "short write to " + path.string());
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& bytes, std::size_t offset, const std::filesystem::path& path) {
  if (bytes.size() < offset + 4) throw Error(ErrorCode::kTruncatedFile, path.string() + ": header ends early");
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void append_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

std::uint8_t to_byte(double v) {
  if (!(v >= 0.0 && v <= 1.0)) throw Error(ErrorCode::kInvalidArgument, "pixel value outside [0, 1]");
  return static_cast<std::uint8_t>(std::lround(v * 255.0));
}

void check_length(std::size_t actual, std::size_t expected, const std::filesystem::path& path) {
  if (actual < expected) {
    throw Error(ErrorCode::kTruncatedFile, path.string() + ": expected " + std::to_string(expected) + " bytes, found " +
                                               std::to_string(actual));
  }
  if (actual > expected) {
    throw Error(ErrorCode::kCountMismatch, path.string() + ": " + std::to_string(actual - expected) +
                                               " trailing bytes after the declared records");
  }
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                 std::size_t n_classes, std::string split) {
  const auto image_bytes = read_file(images_path);
  const auto label_bytes = read_file(labels_path);

  if (read_be32(image_bytes, 0, images_path) != idx::kImageMagic) {
    throw Error(ErrorCode::kBadMagic, images_path.string() + ": not an IDX image file");
  }
  if (read_be32(label_bytes, 0, labels_path) != idx::kLabelMagic) {
    throw Error(ErrorCode::kBadMagic, labels_path.string() + ": not an IDX label file");
  }
  const std::size_t n = read_be32(image_bytes, 4, images_path);
  const std::size_t rows = read_be32(image_bytes, 8, images_path);
  const std::size_t cols = read_be32(image_bytes, 12, images_path);
  const std::size_t n_labels = read_be32(label_bytes, 4, labels_path);
  check_length(image_bytes.size(), 16 + n * rows * cols, images_path);
  check_length(label_bytes.size(), 8 + n_labels, labels_path);
  if (n != n_labels) {
    throw Error(ErrorCode::kCountMismatch, std::to_string(n) + " images but " + std::to_string(n_labels) + " labels");
  }

  Dataset data;
  data.n_classes = n_classes;
  data.split = std::move(split);
  data.images = Tensor({n, rows, cols, 1});
  auto pixels = data.images.data();
  for (std::size_t i = 0; i < pixels.size(); ++i) pixels[i] = image_bytes[16 + i] / 255.0;
  data.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = label_bytes[8 + i];
    if (static_cast<std::size_t>(label) >= n_classes) {
      throw Error(ErrorCode::kLabelOutOfRange, labels_path.string() + ": label " + std::to_string(label) + " at index " +
                                                   std::to_string(i));
    }
    data.labels[i] = label;
  }
  return data;
}

Dataset load_cifar10(std::span<const std::filesystem::path> batch_paths, std::string split) {
  constexpr std::size_t kSide = 32;
  constexpr std::size_t kPlane = kSide * kSide;
  std::vector<std::vector<std::uint8_t>> files;
  std::size_t total = 0;
  for (const auto& path : batch_paths) {
    files.push_back(read_file(path));
    if (files.back().size() % cifar10::kRecordBytes != 0) {
      throw Error(ErrorCode::kTruncatedFile, path.string() + ": length " + std::to_string(files.back().size()) +
                                                 " is not a multiple of " + std::to_string(cifar10::kRecordBytes));
    }
    total += files.back().size() / cifar10::kRecordBytes;
  }

  Dataset data;
  data.n_classes = 10;
  data.split = std::move(split);
  data.images = Tensor({total, kSide, kSide, 3});
  data.labels.reserve(total);
  std::size_t row = 0;
  for (std::size_t f = 0; f < files.size(); ++f) {
    const auto& bytes = files[f];
    for (std::size_t offset = 0; offset < bytes.size(); offset += cifar10::kRecordBytes, ++row) {
      const int label = bytes[offset];
      if (label >= 10) {
        throw Error(ErrorCode::kLabelOutOfRange, batch_paths[f].string() + ": label " + std::to_string(label) +
                                                     " in record " + std::to_string(offset / cifar10::kRecordBytes));
      }
      data.labels.push_back(label);
      auto image = data.images.row(row);
      for (std::size_t c = 0; c < 3; ++c) {
        for (std::size_t p = 0; p < kPlane; ++p) image[p * 3 + c] = bytes[offset + 1 + c * kPlane + p] / 255.0;
      }
    }
  }
  return data;
}

void write_idx(const Dataset& data, const std::filesystem::path& images_path,
               const std::filesystem::path& labels_path) {
  if (data.images.rank() != 4 || data.images.dim(3) != 1) {
    throw Error(ErrorCode::kShapeMismatch, "IDX holds single-channel images only");
  }
  std::vector<std::uint8_t> images;
  images.reserve(16 + data.images.size());
  append_be32(images, idx::kImageMagic);
  append_be32(images, static_cast<std::uint32_t>(data.images.dim(0)));
  append_be32(images, static_cast<std::uint32_t>(data.images.dim(1)));
  append_be32(images, static_cast<std::uint32_t>(data.images.dim(2)));
  for (double v : data.images.data()) images.push_back(to_byte(v));

  std::vector<std::uint8_t> labels;
  append_be32(labels, idx::kLabelMagic);
  append_be32(labels, static_cast<std::uint32_t>(data.labels.size()));
  for (int label : data.labels) labels.push_back(static_cast<std::uint8_t>(label));
  write_file(images_path, images);
  write_file(labels_path, labels);
}

void write_cifar10(const Dataset& data, const std::filesystem::path& path) {
  if (data.images.rank() != 4 || data.images.dim(1) != 32 || data.images.dim(2) != 32 || data.images.dim(3) != 3) {
    throw Error(ErrorCode::kShapeMismatch, "CIFAR-10 records are 32x32x3");
  }
  constexpr std::size_t kPlane = 1024;
  std::vector<std::uint8_t> bytes;
  bytes.reserve(data.size() * cifar10::kRecordBytes);
  for (std::size_t i = 0; i < data.size(); ++i) {
    bytes.push_back(static_cast<std::uint8_t>(data.labels[i]));
    const auto image = data.images.row(i);
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t p = 0; p < kPlane; ++p) bytes.push_back(to_byte(image[p * 3 + c]));
    }
  }
  write_file(path, bytes);
}

std::vector<std::size_t> class_counts(const Dataset& data) {
  std::vector<std::size_t> counts(data.n_classes, 0);
  for (int label : data.labels) ++counts.at(static_cast<std::size_t>(label));
  return counts;
}

Dataset subset(const Dataset& data, std::span<const std::size_t> indices) {
  Dataset out;
  out.n_classes = data.n_classes;
  out.split = data.split;
  out.images = gather_rows(data.images, indices);
  out.labels.reserve(indices.size());
  for (std::size_t i : indices) out.labels.push_back(data.labels[i]);
  return out;
}

ClassExemplars sample_exemplars(SeededRng rng, const Dataset& data, std::size_t n_per_class) {
  std::vector<std::vector<std::size_t>> by_class(data.n_classes);
  for (std::size_t i = 0; i < data.size(); ++i) by_class[static_cast<std::size_t>(data.labels[i])].push_back(i);

  ClassExemplars out;
  for (std::size_t c = 0; c < data.n_classes; ++c) {
    auto& pool = by_class[c];
    if (pool.size() < n_per_class) {
      throw Error(ErrorCode::kInsufficientClassExamples, "class " + std::to_string(c) + " has " +
                                                             std::to_string(pool.size()) + " examples, need " +
                                                             std::to_string(n_per_class));
    }
    // Partial Fisher-Yates: the first n_per_class slots become the sample.
    for (std::size_t i = 0; i < n_per_class; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
      std::swap(pool[i], pool[j]);
    }
    pool.resize(n_per_class);
    out.images.push_back(gather_rows(data.images, pool));
    out.indices.push_back(std::move(pool));
  }
  return out;
}

Dataset binary_subset(const Dataset& data, int class_a, int class_b, std::size_t n_per_class) {
  if (class_a == class_b) throw Error(ErrorCode::kInvalidTask, "binary task needs two distinct classes");
  for (int c : {class_a, class_b}) {
    if (c < 0 || static_cast<std::size_t>(c) >= data.n_classes) {
      throw Error(ErrorCode::kLabelOutOfRange, "class " + std::to_string(c) + " not in dataset");
    }
  }
  std::vector<std::size_t> chosen;
  std::size_t taken_a = 0, taken_b = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.labels[i] == class_a && taken_a < n_per_class) {
      chosen.push_back(i);
      ++taken_a;
    } else if (data.labels[i] == class_b && taken_b < n_per_class) {
      chosen.push_back(i);
      ++taken_b;
    }
  }
  if (taken_a < n_per_class || taken_b < n_per_class) {
    throw Error(ErrorCode::kInsufficientClassExamples, "binary task needs " + std::to_string(n_per_class) +
                                                           " examples of each class");
  }
  Dataset out = subset(data, chosen);
  for (int& label : out.labels) label = label == class_a ? 0 : 1;
  out.n_classes = 2;
  return out;
}

Dataset stratified_subsample(SeededRng rng, const Dataset& data, std::size_t n_total) {
  if (n_total >= data.size()) return data;
  const auto counts = class_counts(data);
  std::vector<std::size_t> quota(data.n_classes);
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < data.n_classes; ++c) {
    quota[c] = counts[c] * n_total / data.size();
    assigned += quota[c];
  }
  for (std::size_t c = 0; assigned < n_total; c = (c + 1) % data.n_classes) {
    if (quota[c] < counts[c]) {
      ++quota[c];
      ++assigned;
    }
  }
  std::vector<std::vector<std::size_t>> by_class(data.n_classes);
  for (std::size_t i = 0; i < data.size(); ++i) by_class[static_cast<std::size_t>(data.labels[i])].push_back(i);
  std::vector<std::size_t> chosen;
  for (std::size_t c = 0; c < data.n_classes; ++c) {
    auto& pool = by_class[c];
    for (std::size_t i = 0; i < quota[c]; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
      std::swap(pool[i], pool[j]);
    }
    chosen.insert(chosen.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(quota[c]));
  }
  std::sort(chosen.begin(), chosen.end());
  return subset(data, chosen);
}

}  // namespace structprior
