#include "ncdiff/dataset.hpp"

#include <algorithm>
#include <filesystem>
#include <stdexcept>

#include "ncdiff/image_io.hpp"
#include "ncdiff/log.hpp"

namespace fs = std::filesystem;

namespace ncdiff {

std::string DatasetManifest::path(size_t i) const { return (fs::path(root) / files.at(i)).string(); }

DatasetManifest build_manifest(const std::string& root, int64_t crop, const std::string& split, uint64_t seed) {
  if (!fs::is_directory(root)) throw std::runtime_error("dataset root is not a directory: " + root);
  if (crop < 1) throw std::invalid_argument("crop must be >= 1");

  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext != ".png") continue;
    names.push_back(entry.path().filename().string());
  }
  std::sort(names.begin(), names.end());

  DatasetManifest m;
  m.root = root;
  m.split = split;
  m.crop = crop;
  for (const std::string& name : names) {
    try {
      const Image img = read_png((fs::path(root) / name).string());
      if (img.height() < crop || img.width() < crop) {
        log_warn("dataset: " + name + " is smaller than the " + std::to_string(crop) + "px crop; skipped");
        continue;
      }
    } catch (const std::exception& e) {
      log_warn("dataset: " + name + " failed to decode (" + e.what() + "); skipped");
      continue;
    }
    m.files.push_back(name);
  }

  // Fisher-Yates on the sorted list: the order depends only on the seed and
  // the surviving file set, never on directory enumeration order.
  Rng rng(seed);
  for (size_t i = m.files.size(); i > 1; --i) {
    const size_t j = static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(i) - 1));
    std::swap(m.files[i - 1], m.files[j]);
  }
  return m;
}

Image load_image_channels(const std::string& path, int64_t channels) {
  Image img = read_png(path);
  if (img.channels() == channels) return img;
  if (img.channels() == 1 && channels == 3) {
    Image out = Image::unit(3, img.height(), img.width());
    const int64_t plane = img.height() * img.width();
    for (int64_t c = 0; c < 3; ++c)
      std::copy(img.data.data(), img.data.data() + plane, out.data.data() + c * plane);
    return out;
  }
  if (img.channels() == 3 && channels == 1) {
    Image out = Image::unit(1, img.height(), img.width());
    const int64_t plane = img.height() * img.width();
    const double* src = img.data.data();
    for (int64_t i = 0; i < plane; ++i) out.data.data()[i] = (src[i] + src[plane + i] + src[2 * plane + i]) / 3.0;
    return out;
  }
  throw std::runtime_error(path + ": cannot adapt " + std::to_string(img.channels()) + " channels to " +
                           std::to_string(channels));
}

Tensor random_crop(const Image& img, int64_t crop, Rng& rng) {
  if (img.height() < crop || img.width() < crop)
    throw std::invalid_argument("image smaller than crop " + std::to_string(crop));
  const int64_t y = rng.uniform_int(0, img.height() - crop);
  const int64_t x = rng.uniform_int(0, img.width() - crop);
  Tensor out({img.channels(), crop, crop});
  for (int64_t c = 0; c < img.channels(); ++c)
    for (int64_t r = 0; r < crop; ++r) {
      const double* src = img.data.data() + (c * img.height() + y + r) * img.width() + x;
      std::copy(src, src + crop, out.data() + (c * crop + r) * crop);
    }
  return out;
}

std::vector<Tensor> load_crop_set(const DatasetManifest& manifest, int64_t channels, int64_t count, Rng& rng) {
  if (manifest.files.empty()) throw std::runtime_error("dataset is empty: " + manifest.root);
  std::vector<Tensor> crops;
  crops.reserve(static_cast<size_t>(count));
  // Decoded images are not cached: desk-scale sets are small and the cycle
  // order must match the manifest exactly.
  for (int64_t i = 0; i < count; ++i) {
    const Image img = load_image_channels(manifest.path(static_cast<size_t>(i) % manifest.files.size()), channels);
    crops.push_back(random_crop(img, manifest.crop, rng));
  }
  return crops;
}

}  // namespace ncdiff
