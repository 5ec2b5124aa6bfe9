#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace switchnet {

/// height x width x channels, row-major with the channel axis fastest.
struct RealTensor {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> data;

  static RealTensor zeros(int h, int w, int c) {
    return RealTensor{h, w, c, std::vector<double>(static_cast<std::size_t>(h) * w * c, 0.0)};
  }

  std::size_t size() const { return data.size(); }
  std::size_t index(int i, int j, int c) const {
    return (static_cast<std::size_t>(i) * width + j) * channels + c;
  }
  double& at(int i, int j, int c = 0) { return data[index(i, j, c)]; }
  double at(int i, int j, int c = 0) const { return data[index(i, j, c)]; }

  bool same_shape(const RealTensor& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }
  std::string shape_string() const {
    return std::to_string(height) + "x" + std::to_string(width) + "x" + std::to_string(channels);
  }
};

}  // namespace switchnet
