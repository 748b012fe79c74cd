#pragma once

// Desk-scale image classification data: a seeded synthetic generator of
// translated patterns, CSV and IDX loaders, normalization and the
// translation transform used to probe shift sensitivity.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

namespace hypflow {

/// Grayscale image stored row-major (height rows of width pixels).
struct ImageSample {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> pixels;
  int label = 0;

  double at(std::size_t row, std::size_t col) const { return pixels[row * width + col]; }
};

/// Train, validation and test samples are held in separate lists, so the
/// splits are disjoint by construction.
struct Dataset {
  std::size_t width = 0;
  std::size_t height = 0;
  int num_classes = 0;
  std::vector<ImageSample> train;
  std::vector<ImageSample> val;
  std::vector<ImageSample> test;
  bool normalized = false;
  double mean = 0.0;  // statistics applied by normalize()
  double stddev = 1.0;
  nlohmann::json metadata = nlohmann::json::object();
};

/// Four classes of patterns (horizontal bar, vertical bar, diagonal stroke,
/// square blob) at uniformly random offsets that keep a 2-pixel margin, plus
/// N(0, 0.05^2) pixel noise clipped to [0, 1]. Sample i carries label
/// i mod classes. Requires size >= 10 and 1 <= classes <= 4.
Dataset synth_generate(std::uint64_t seed, std::size_t n_train, std::size_t n_test,
                       std::size_t size = 12, int classes = 4);

enum class TranslateMode { zero_pad, circular };

/// out(i, j) = img(i - dk, j - dj); vacated pixels are zero, or wrap around
/// in circular mode.
ImageSample translate(const ImageSample& img, int dk, int dj,
                      TranslateMode mode = TranslateMode::zero_pad);

/// Standardizes every split with the mean and standard deviation of all
/// train pixels. Throws PreconditionError if the train split is empty or
/// constant.
Dataset normalize(const Dataset& ds);

/// CSV with header "label,p0,p1,..." and square images. All rows go to the
/// train split. num_classes = 0 infers max label + 1; otherwise labels at or
/// above it raise ParseError.
Dataset load_csv(const std::filesystem::path& path, int num_classes = 0);
void write_csv(const std::filesystem::path& path, const std::vector<ImageSample>& samples);

/// IDX image (magic 0x00000803) and label (0x00000801) files. Pixels are
/// scaled to [0, 1]; all samples go to the train split. Errors carry the
/// byte offset.
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 int num_classes = 10);

/// Writes `ds.metadata` plus shape and split sizes as JSON.
void write_metadata(const std::filesystem::path& path, const Dataset& ds);

}  // namespace hypflow
