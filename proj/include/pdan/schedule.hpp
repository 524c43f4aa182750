#pragma once

#include <string>
#include <vector>

#include "pdan/common.hpp"

namespace pdan {

struct DenseLayerSpec {
  int index;         // 1-based layer index i
  int in_channels;   // concatenation width entering the layer
  int out_channels;  // bottleneck target and group-conv width
  int groups;
};

/// Pyramidal dense growth arithmetic: layer j appends g0 + g*(j-1) channels,
/// so the input width of layer i is c0 + (i-1)*g0 + g*(i-1)*(i-2)/2 in closed
/// form. Group counts grow linearly as i+1 and must divide the layer width.
struct GrowthSchedule {
  int c0 = 16;
  int g0 = 32;
  int g = 16;
  int layers = 4;

  int output_channels(int j) const { return g0 + g * (j - 1); }
  int input_channels(int i) const { return c0 + (i - 1) * g0 + g * (i - 1) * (i - 2) / 2; }
  int groups_for(int i) const { return i + 1; }

  /// Fixed-growth comparison variant: every layer appends g0 channels.
  static int fixed_input_channels(int c0, int g0, int i) { return c0 + (i - 1) * g0; }
  static int fixed_output_channels(int g0) { return g0; }

  /// Width of the concatenation of the block input and every layer output.
  int concat_width() const {
    int w = c0;
    for (int j = 1; j <= layers; ++j) w += output_channels(j);
    return w;
  }

  void validate() const {
    require(c0 > 0 && g0 > 0 && g >= 0 && layers > 0, "growth schedule fields must be positive");
    (void)table();
  }

  /// Per-layer (input, output, groups) table; rejects any layer whose width
  /// the group count does not divide, naming the offending layer.
  std::vector<DenseLayerSpec> table() const {
    std::vector<DenseLayerSpec> rows;
    rows.reserve(static_cast<size_t>(layers));
    for (int i = 1; i <= layers; ++i) {
      const int out = output_channels(i);
      const int groups = groups_for(i);
      if (out % groups != 0)
        throw ValidationError("growth schedule: layer " + std::to_string(i) + " width " +
                              std::to_string(out) + " not divisible by group count " +
                              std::to_string(groups));
      rows.push_back(DenseLayerSpec{i, input_channels(i), out, groups});
    }
    return rows;
  }

  bool operator==(const GrowthSchedule&) const = default;
};

}  // namespace pdan
