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

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "structprior/rng.hpp"
#include "structprior/tensor.hpp"

namespace structprior {

/// Labelled images, (N, H, W, C) with pixel values in [0, 1].
struct Dataset {
  Tensor images;
  std::vector<int> labels;
  std::size_t n_classes = 0;
  std::string split;

  std::size_t size() const noexcept { return labels.size(); }
  Shape image_shape() const { return Shape(images.shape().begin() + 1, images.shape().end()); }
};

/// Exemplar images per class: images[j] is (n_per_class, H, W, C) and
/// indices[j] the dataset rows they came from.
struct ClassExemplars {
  std::vector<std::vector<std::size_t>> indices;
  std::vector<Tensor> images;

  std::size_t n_classes() const noexcept { return images.size(); }
};

namespace idx {
inline constexpr std::uint32_t kImageMagic = 0x00000803;
inline constexpr std::uint32_t kLabelMagic = 0x00000801;
}  // namespace idx

namespace cifar10 {
inline constexpr std::size_t kRecordBytes = 3073;
inline constexpr int kAutomobile = 1;
inline constexpr int kBird = 2;
}  // namespace cifar10

namespace fashion_mnist {
inline constexpr int kTrouser = 1;
inline constexpr int kShirt = 6;
}  // namespace fashion_mnist

/// Uncompressed IDX image/label pair (MNIST, Fashion-MNIST).
Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                 std::size_t n_classes = 10, std::string split = "train");

/// CIFAR-10 binary batches: records of one label byte then 1024 red, 1024
/// green and 1024 blue bytes, each plane row-major 32x32.
Dataset load_cifar10(std::span<const std::filesystem::path> batch_paths, std::string split = "train");

/// Pixels are written as round(255 * value); loading then writing a file
/// reproduces it byte for byte.
void write_idx(const Dataset& data, const std::filesystem::path& images_path,
               const std::filesystem::path& labels_path);
void write_cifar10(const Dataset& data, const std::filesystem::path& path);

std::vector<std::size_t> class_counts(const Dataset& data);

Dataset subset(const Dataset& data, std::span<const std::size_t> indices);

/// `n_per_class` distinct examples of every class, drawn without replacement.
ClassExemplars sample_exemplars(SeededRng rng, const Dataset& data, std::size_t n_per_class);

/// First `n_per_class` examples of each class in dataset order; `class_a`
/// maps to label 0 and `class_b` to label 1.
Dataset binary_subset(const Dataset& data, int class_a, int class_b, std::size_t n_per_class);

/// Class-proportional random subsample of `n_total` examples, kept in
/// dataset order. Returns the full set when n_total >= size.
Dataset stratified_subsample(SeededRng rng, const Dataset& data, std::size_t n_total);

}  // namespace structprior
