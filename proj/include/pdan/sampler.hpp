#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "pdan/degrade.hpp"
#include "pdan/image.hpp"
#include "pdan/rng.hpp"

namespace pdan {

struct DatasetEntry {
  std::string hr_path;
  std::string lr_path;  // empty: degrade on the fly
};

/// Manifest: one record per line, `hr_path <tab> lr_path(optional)`.
inline std::vector<DatasetEntry> read_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read manifest '" + path + "'");
  std::vector<DatasetEntry> entries;
  std::string line;
  while (std::getline(f, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    DatasetEntry e;
    e.hr_path = tab == std::string::npos ? line : line.substr(0, tab);
    if (tab != std::string::npos) e.lr_path = line.substr(tab + 1);
    entries.push_back(std::move(e));
  }
  if (entries.empty()) throw ValidationError("manifest '" + path + "' lists no images");
  return entries;
}

/// All .png files of a directory, sorted by name.
inline std::vector<DatasetEntry> scan_directory(const std::string& dir) {
  std::vector<DatasetEntry> entries;
  if (!std::filesystem::is_directory(dir)) throw IoError("'" + dir + "' is not a directory");
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".png")
      entries.push_back(DatasetEntry{e.path().string(), ""});
  std::sort(entries.begin(), entries.end(),
            [](const auto& a, const auto& b) { return a.hr_path < b.hr_path; });
  if (entries.empty()) throw ValidationError("directory '" + dir + "' holds no .png images");
  return entries;
}

struct LoadedPair {
  std::string name;
  Image hr;
  Image lr;
};

/// Loads HR images (cropped to a multiple of the scale) and their LR mates:
/// from disk when the manifest names one, degraded per spec otherwise. LR
/// values are snapped to the 8-bit grid, mirroring on-disk LR files.
inline std::vector<LoadedPair> load_pairs(const std::vector<DatasetEntry>& entries,
                                          const DegradationSpec& spec) {
  std::vector<LoadedPair> pairs;
  pairs.reserve(entries.size());
  for (const auto& e : entries) {
    LoadedPair p;
    p.name = std::filesystem::path(e.hr_path).stem().string();
    p.hr = crop_modulo(read_png(e.hr_path), spec.scale);
    p.lr = e.lr_path.empty() ? quantize_u8(degrade(p.hr, spec)) : read_png(e.lr_path);
    if (p.lr.height() * spec.scale != p.hr.height() || p.lr.width() * spec.scale != p.hr.width())
      throw ValidationError("LR/HR sizes inconsistent for '" + e.hr_path + "'");
    pairs.push_back(std::move(p));
  }
  return pairs;
}

// ---------------------------------------------------------------------------
// Dihedral augmentation: op = 4*flip + k means "flip horizontally first (if
// flip), then rotate 90 degrees counterclockwise k times".

template <typename T>
Tensor<T> rotate90_ccw(const Tensor<T>& chw) {
  const int C = chw.extent(0), H = chw.extent(1), W = chw.extent(2);
  Tensor<T> out(Shape{C, W, H});
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x)
        out[(static_cast<long long>(c) * W + (W - 1 - x)) * H + y] =
            chw[(static_cast<long long>(c) * H + y) * W + x];
  return out;
}

template <typename T>
Tensor<T> flip_horizontal(const Tensor<T>& chw) {
  const int C = chw.extent(0), H = chw.extent(1), W = chw.extent(2);
  Tensor<T> out(chw.shape());
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x)
        out[(static_cast<long long>(c) * H + y) * W + (W - 1 - x)] =
            chw[(static_cast<long long>(c) * H + y) * W + x];
  return out;
}

template <typename T>
Tensor<T> apply_dihedral(const Tensor<T>& chw, int op) {
  require(op >= 0 && op < 8, "dihedral op must be in [0,8)");
  Tensor<T> t = (op >= 4) ? flip_horizontal(chw) : chw;
  for (int k = 0; k < op % 4; ++k) t = rotate90_ccw(t);
  return t;
}

/// The op that undoes apply_dihedral(., op). Rotations invert to the
/// complementary rotation; each flip-then-rotate op is a reflection and thus
/// its own inverse.
inline int dihedral_inverse(int op) {
  const int k = op % 4, f = op / 4;
  if (f == 0) return (4 - k) % 4;
  return op;
}

// ---------------------------------------------------------------------------

/// One training mini-batch: LR patches (B,3,p,p) and the aligned HR patches
/// (B,3,p*s,p*s), one of the 8 dihedral augmentations applied identically to
/// both.
struct SampleBatch {
  Tensor<float> lr;
  Tensor<float> hr;
  struct Record {
    int image;
    int x0, y0;  // LR patch origin
    int aug;
  };
  std::vector<Record> records;
};

/// Uniformly samples aligned patch pairs. Images too small for an LR patch
/// are skipped (reported once on stderr); deterministic under the rng state.
inline SampleBatch sample_batch(const std::vector<LoadedPair>& pairs, int batch, int patch,
                                int scale, Rng& rng) {
  require(batch > 0 && patch > 0, "batch and patch must be positive");
  std::vector<int> eligible;
  for (size_t i = 0; i < pairs.size(); ++i) {
    if (pairs[i].lr.height() >= patch && pairs[i].lr.width() >= patch) {
      eligible.push_back(static_cast<int>(i));
    } else {
      static bool warned = false;
      if (!warned) {
        std::cerr << "sample_batch: skipping image(s) smaller than the patch size\n";
        warned = true;
      }
    }
  }
  require(!eligible.empty(), "no image is large enough for the requested patch size");

  SampleBatch out;
  out.lr = Tensor<float>(Shape{batch, 3, patch, patch});
  out.hr = Tensor<float>(Shape{batch, 3, patch * scale, patch * scale});
  const long long lr_sample = 3LL * patch * patch;
  const long long hr_sample = 3LL * patch * scale * patch * scale;
  for (int b = 0; b < batch; ++b) {
    const int idx = eligible[static_cast<size_t>(rng.uniform_below(eligible.size()))];
    const LoadedPair& p = pairs[static_cast<size_t>(idx)];
    const int x0 = static_cast<int>(rng.uniform_below(p.lr.width() - patch + 1));
    const int y0 = static_cast<int>(rng.uniform_below(p.lr.height() - patch + 1));
    const int aug = static_cast<int>(rng.uniform_below(8));

    Tensor<float> lr_patch(Shape{3, patch, patch});
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < patch; ++y)
        for (int x = 0; x < patch; ++x)
          lr_patch[(static_cast<long long>(c) * patch + y) * patch + x] =
              p.lr.at(c, y0 + y, x0 + x);
    const int hp = patch * scale;
    Tensor<float> hr_patch(Shape{3, hp, hp});
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < hp; ++y)
        for (int x = 0; x < hp; ++x)
          hr_patch[(static_cast<long long>(c) * hp + y) * hp + x] =
              p.hr.at(c, y0 * scale + y, x0 * scale + x);

    lr_patch = apply_dihedral(lr_patch, aug);
    hr_patch = apply_dihedral(hr_patch, aug);
    std::copy_n(lr_patch.data(), lr_sample, out.lr.data() + b * lr_sample);
    std::copy_n(hr_patch.data(), hr_sample, out.hr.data() + b * hr_sample);
    out.records.push_back(SampleBatch::Record{idx, x0, y0, aug});
  }
  return out;
}

}  // namespace pdan
