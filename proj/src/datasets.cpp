#include "hypflow/datasets.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "hypflow/error.hpp"
#include "hypflow/random.hpp"

namespace hypflow {
namespace {

constexpr double kNoiseSigma = 0.05;
constexpr int kMargin = 2;

struct Pattern {
  int rows;
  int cols;
  bool (*on)(int r, int c);
};

const std::array<Pattern, 4> kPatterns{{
    {2, 6, [](int, int) { return true; }},
    {6, 2, [](int, int) { return true; }},
    {5, 6, [](int r, int c) { return c == r || c == r + 1; }},
    {3, 3, [](int, int) { return true; }},
}};

ImageSample draw(Rng& rng, std::size_t size, int label) {
  const Pattern& p = kPatterns[static_cast<std::size_t>(label)];
  const int S = static_cast<int>(size);
  const int r0 = kMargin + static_cast<int>(rng.below(static_cast<std::uint64_t>(S - 2 * kMargin - p.rows + 1)));
  const int c0 = kMargin + static_cast<int>(rng.below(static_cast<std::uint64_t>(S - 2 * kMargin - p.cols + 1)));
  ImageSample img{size, size, std::vector<double>(size * size, 0.0), label};
  for (int r = 0; r < p.rows; ++r)
    for (int c = 0; c < p.cols; ++c)
      if (p.on(r, c)) img.pixels[static_cast<std::size_t>((r0 + r) * S + c0 + c)] = 1.0;
  for (double& v : img.pixels) v = std::clamp(v + kNoiseSigma * rng.normal(), 0.0, 1.0);
  return img;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& b, std::size_t offset,
                        const std::string& what) {
  if (offset + 4 > b.size()) throw ParseError(what + ": truncated header", offset);
  return (std::uint32_t{b[offset]} << 24) | (std::uint32_t{b[offset + 1]} << 16) |
         (std::uint32_t{b[offset + 2]} << 8) | std::uint32_t{b[offset + 3]};
}

void standardize(std::vector<ImageSample>& split, double mean, double sd) {
  for (ImageSample& s : split)
    for (double& v : s.pixels) v = (v - mean) / sd;
}

}  // namespace

Dataset synth_generate(std::uint64_t seed, std::size_t n_train, std::size_t n_test,
                       std::size_t size, int classes) {
  if (size < 10) throw PreconditionError("synthetic images need size >= 10");
  if (classes < 1 || classes > static_cast<int>(kPatterns.size()))
    throw PreconditionError("synthetic task supports 1 to 4 classes");
  Rng rng(seed);
  Dataset ds;
  ds.width = ds.height = size;
  ds.num_classes = classes;
  for (std::size_t i = 0; i < n_train; ++i)
    ds.train.push_back(draw(rng, size, static_cast<int>(i % static_cast<std::size_t>(classes))));
  for (std::size_t i = 0; i < n_test; ++i)
    ds.test.push_back(draw(rng, size, static_cast<int>(i % static_cast<std::size_t>(classes))));
  ds.metadata = {{"generator", "synth"},   {"seed", seed},       {"n_train", n_train},
                 {"n_test", n_test},       {"size", size},       {"classes", classes},
                 {"noise_sigma", kNoiseSigma}, {"margin", kMargin}};
  return ds;
}

ImageSample translate(const ImageSample& img, int dk, int dj, TranslateMode mode) {
  ImageSample out = img;
  const int H = static_cast<int>(img.height), W = static_cast<int>(img.width);
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j) {
      int si = i - dk, sj = j - dj;
      double v = 0.0;
      if (mode == TranslateMode::circular) {
        si = ((si % H) + H) % H;
        sj = ((sj % W) + W) % W;
        v = img.pixels[static_cast<std::size_t>(si * W + sj)];
      } else if (si >= 0 && si < H && sj >= 0 && sj < W) {
        v = img.pixels[static_cast<std::size_t>(si * W + sj)];
      }
      out.pixels[static_cast<std::size_t>(i * W + j)] = v;
    }
  return out;
}

Dataset normalize(const Dataset& ds) {
  if (ds.train.empty()) throw PreconditionError("cannot normalize without train samples");
  double sum = 0.0;
  std::size_t count = 0;
  for (const ImageSample& s : ds.train)
    for (double v : s.pixels) {
      sum += v;
      ++count;
    }
  const double mean = sum / static_cast<double>(count);
  double ss = 0.0;
  for (const ImageSample& s : ds.train)
    for (double v : s.pixels) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(count));
  if (!(sd > 0.0)) throw PreconditionError("train pixels are constant; cannot normalize");
  Dataset out = ds;
  standardize(out.train, mean, sd);
  standardize(out.val, mean, sd);
  standardize(out.test, mean, sd);
  out.normalized = true;
  out.mean = mean;
  out.stddev = sd;
  out.metadata["normalization"] = {{"mean", mean}, {"std", sd}};
  return out;
}

Dataset load_csv(const std::filesystem::path& path, int num_classes) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::string line;
  std::size_t lineno = 1;
  if (!std::getline(in, line)) throw ParseError("empty CSV file", lineno);
  std::size_t pixels = 0;
  {
    std::istringstream hs(line);
    std::string tok;
    std::getline(hs, tok, ',');
    if (tok != "label") throw ParseError("CSV header must start with 'label'", lineno);
    while (std::getline(hs, tok, ',')) {
      if (tok != "p" + std::to_string(pixels)) throw ParseError("unexpected column '" + tok + "'", lineno);
      ++pixels;
    }
  }
  const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(pixels))));
  if (pixels == 0 || side * side != pixels) throw ParseError("pixel count is not a square", lineno);
  Dataset ds;
  ds.width = ds.height = side;
  int max_label = -1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string tok;
    ImageSample s{side, side, std::vector<double>(pixels), 0};
    std::getline(ls, tok, ',');
    char* end = nullptr;
    const long label = std::strtol(tok.c_str(), &end, 10);
    if (end == tok.c_str() || *end != '\0' || label < 0) throw ParseError("bad label '" + tok + "'", lineno);
    if (num_classes > 0 && label >= num_classes)
      throw ParseError("label " + tok + " out of range", lineno);
    s.label = static_cast<int>(label);
    for (std::size_t k = 0; k < pixels; ++k) {
      if (!std::getline(ls, tok, ',')) throw ParseError("row has too few pixels", lineno);
      s.pixels[k] = std::strtod(tok.c_str(), &end);
      if (end == tok.c_str() || *end != '\0') throw ParseError("bad pixel '" + tok + "'", lineno);
    }
    if (std::getline(ls, tok, ',')) throw ParseError("row has too many fields", lineno);
    max_label = std::max(max_label, s.label);
    ds.train.push_back(std::move(s));
  }
  ds.num_classes = num_classes > 0 ? num_classes : max_label + 1;
  ds.metadata = {{"source", "csv"}, {"path", path.string()}};
  return ds;
}

void write_csv(const std::filesystem::path& path, const std::vector<ImageSample>& samples) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  const std::size_t pixels = samples.empty() ? 0 : samples.front().pixels.size();
  out << "label";
  for (std::size_t k = 0; k < pixels; ++k) out << ",p" << k;
  out << '\n';
  char buf[32];
  for (const ImageSample& s : samples) {
    if (s.pixels.size() != pixels) throw PreconditionError("samples differ in size");
    out << s.label;
    for (double v : s.pixels) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out << ',' << buf;
    }
    out << '\n';
  }
}

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 int num_classes) {
  const std::vector<std::uint8_t> ib = read_file(images);
  const std::vector<std::uint8_t> lb = read_file(labels);
  if (read_be32(ib, 0, "image file") != 0x00000803u)
    throw ParseError("image file has a bad magic number", 0);
  if (read_be32(lb, 0, "label file") != 0x00000801u)
    throw ParseError("label file has a bad magic number", 0);
  const std::uint32_t count = read_be32(ib, 4, "image file");
  const std::uint32_t rows = read_be32(ib, 8, "image file");
  const std::uint32_t cols = read_be32(ib, 12, "image file");
  const std::uint32_t lcount = read_be32(lb, 4, "label file");
  if (count != lcount)
    throw ParseError("image count " + std::to_string(count) + " differs from label count " +
                         std::to_string(lcount),
                     4);
  const std::size_t pix = static_cast<std::size_t>(rows) * cols;
  const std::size_t need = 16 + static_cast<std::size_t>(count) * pix;
  if (ib.size() < need) throw ParseError("image file truncated", ib.size());
  if (lb.size() < 8 + static_cast<std::size_t>(count)) throw ParseError("label file truncated", lb.size());
  Dataset ds;
  ds.width = cols;
  ds.height = rows;
  ds.num_classes = num_classes;
  ds.train.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const int label = lb[8 + i];
    if (label >= num_classes) throw ParseError("label " + std::to_string(label) + " out of range", 8 + i);
    ImageSample s{cols, rows, std::vector<double>(pix), label};
    const std::size_t base = 16 + i * pix;
    for (std::size_t k = 0; k < pix; ++k) s.pixels[k] = ib[base + k] / 255.0;
    ds.train.push_back(std::move(s));
  }
  ds.metadata = {{"source", "idx"}, {"images", images.string()}, {"labels", labels.string()}};
  return ds;
}

void write_metadata(const std::filesystem::path& path, const Dataset& ds) {
  nlohmann::json j = ds.metadata;
  j["width"] = ds.width;
  j["height"] = ds.height;
  j["num_classes"] = ds.num_classes;
  j["splits"] = {{"train", ds.train.size()}, {"val", ds.val.size()}, {"test", ds.test.size()}};
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace hypflow
