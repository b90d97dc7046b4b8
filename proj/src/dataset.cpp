#include "rvit/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "rvit/error.hpp"
#include "rvit/rng.hpp"

namespace rvit::data {

std::vector<std::size_t> Dataset::indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < splits.size(); ++i)
    if (splits[i] == split) out.push_back(i);
  return out;
}

Dataset Dataset::subset(const std::vector<std::size_t>& idx) const {
  Dataset d;
  d.seed = seed;
  for (std::size_t i : idx) {
    d.images.push_back(images.at(i));
    d.labels.push_back(labels.at(i));
    d.splits.push_back(splits.at(i));
  }
  return d;
}

const std::vector<std::string>& shape_class_names() {
  static const std::vector<std::string> names = {"circle", "square",  "triangle", "cross",    "ring",
                                                 "h-bar",  "v-bar",   "diamond",  "checker",  "dot-grid"};
  return names;
}

namespace {

double luminance(const double* rgb) { return 0.299 * rgb[0] + 0.587 * rgb[1] + 0.114 * rgb[2]; }

// Shape membership in normalized coordinates (u, v), unit half-extent.
bool inside(int label, double u, double v) {
  const double au = std::abs(u), av = std::abs(v);
  switch (label) {
    case 0: return u * u + v * v <= 1.0;
    case 1: return au <= 0.8 && av <= 0.8;
    case 2: return v <= 0.8 && v >= -0.9 && au <= 0.9 * (v + 0.9) / 1.7;
    case 3: return (au <= 0.25 && av <= 1.0) || (av <= 0.25 && au <= 1.0);
    case 4: {
      const double r2 = u * u + v * v;
      return r2 <= 1.0 && r2 >= 0.55 * 0.55;
    }
    case 5: return av <= 0.25 && au <= 1.0;
    case 6: return au <= 0.25 && av <= 1.0;
    case 7: return au + av <= 1.0;
    case 8: {
      if (au > 1.0 || av > 1.0) return false;
      const int cu = static_cast<int>(std::floor((u + 1.0) * 2.0));
      const int cv = static_cast<int>(std::floor((v + 1.0) * 2.0));
      return (cu + cv) % 2 == 0;
    }
    case 9: {
      if (au > 1.1 || av > 1.1) return false;
      auto nearest = [](double x) { return std::clamp(std::round(x / 0.7), -1.0, 1.0) * 0.7; };
      const double du = u - nearest(u), dv = v - nearest(v);
      return du * du + dv * dv <= 0.22 * 0.22;
    }
    default: return false;
  }
}

}  // namespace

Tensor render_shape(int label, std::uint64_t key) {
  Stream rng(key);
  double bg[3], fg[3];
  for (double& c : bg) c = 0.4 * rng.uniform();
  do {
    for (double& c : fg) c = 0.5 + 0.5 * rng.uniform();
  } while (std::abs(luminance(fg) - luminance(bg)) < 0.3);
  const double scale = 7.0 + 4.0 * rng.uniform();
  const double cx = 15.5 + (rng.uniform() * 2.0 - 1.0) * 3.0;
  const double cy = 15.5 + (rng.uniform() * 2.0 - 1.0) * 3.0;

  Tensor img({kImageSize, kImageSize, kChannels});
  for (int y = 0; y < kImageSize; ++y)
    for (int x = 0; x < kImageSize; ++x) {
      const bool in = inside(label, (x - cx) / scale, (y - cy) / scale);
      const double* col = in ? fg : bg;
      for (int c = 0; c < kChannels; ++c) {
        const double v = col[c] + 0.05 * rng.normal();
        img[(static_cast<std::size_t>(y) * kImageSize + static_cast<std::size_t>(x)) * kChannels +
            static_cast<std::size_t>(c)] = std::clamp(v, 0.0, 1.0);
      }
    }
  return img;
}

Dataset generate_shapes_dataset(int n, std::uint64_t seed) {
  if (n <= 0 || n % kClasses != 0)
    throw InputError("dataset size must be a positive multiple of 10, got " + std::to_string(n));
  Dataset d;
  d.seed = seed;
  d.images.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const int label = i % kClasses;
    const std::uint64_t key = derive(seed, {static_cast<std::uint64_t>(Domain::dataset), static_cast<std::uint64_t>(i)});
    d.images.push_back(render_shape(label, key));
    d.labels.push_back(label);
    d.splits.push_back((i / kClasses) % 5 == 4 ? Split::test : Split::train);
  }
  return d;
}

Dataset load_record_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open record file " + path);
  constexpr std::size_t kPixels = kImageSize * kImageSize;
  constexpr std::size_t kRecord = 1 + kPixels * kChannels;
  std::vector<unsigned char> buf(kRecord);
  Dataset d;
  std::size_t i = 0;
  while (in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(kRecord))) {
    Tensor img({kImageSize, kImageSize, kChannels});
    for (std::size_t c = 0; c < kChannels; ++c)
      for (std::size_t p = 0; p < kPixels; ++p) img[p * kChannels + c] = buf[1 + c * kPixels + p] / 255.0;
    if (buf[0] >= kClasses) throw FormatError(path + ": label " + std::to_string(buf[0]) + " out of range");
    d.images.push_back(std::move(img));
    d.labels.push_back(buf[0]);
    d.splits.push_back(i % 5 == 4 ? Split::test : Split::train);
    ++i;
  }
  if (in.gcount() != 0) throw FormatError(path + ": trailing partial record");
  return d;
}

}  // namespace rvit::data
