#include "repforge/imaging.hpp"

#include <stdexcept>

#include "repforge/dataset.hpp"

namespace repforge {

LayoutDims layout_dims(ImageLayout layout) {
  switch (layout) {
    case ImageLayout::square84:
      return {84, 84, 1};
    case ImageLayout::rect:
      return {9, 784, 1};
    case ImageLayout::channels:
      return {3, 784, 3};
  }
  throw std::invalid_argument("layout_dims: unknown layout");
}

const char* layout_name(ImageLayout layout) {
  switch (layout) {
    case ImageLayout::square84:
      return "square84";
    case ImageLayout::rect:
      return "rect";
    case ImageLayout::channels:
      return "channels";
  }
  return "?";
}

ImageLayout parse_layout(const std::string& name, bool* disjoint) {
  if (disjoint) *disjoint = false;
  if (name == "square84") return ImageLayout::square84;
  if (name == "rect") return ImageLayout::rect;
  if (name == "rect-disj") {
    if (disjoint) *disjoint = true;
    return ImageLayout::rect;
  }
  if (name == "channels") return ImageLayout::channels;
  throw std::invalid_argument(
      "unknown layout '" + name +
      "' (valid: square84, rect, rect-disj, channels)");
}

InputImage format_rep(const Tensor& padded, ImageLayout layout, RepMeta meta) {
  if (padded.rank() != 2 || padded.extent(0) != kNumFeatures ||
      padded.extent(1) != kTargetLength) {
    throw std::invalid_argument("format_rep: expected 9x784 matrix, got " +
                                shape_str(padded.shape()));
  }
  InputImage img;
  img.layout = layout;
  img.meta = std::move(meta);
  switch (layout) {
    case ImageLayout::square84:
      img.data = padded.reshape({84, 84, 1});
      break;
    case ImageLayout::rect:
      img.data = padded.reshape({9, 784, 1});
      break;
    case ImageLayout::channels: {
      Tensor out({3, 784, 3});
      for (std::size_t c = 0; c < 3; ++c) {
        for (std::size_t y = 0; y < 3; ++y) {
          for (std::size_t x = 0; x < 784; ++x) {
            out.at(y, x, c) = padded.at(3 * c + y, x);
          }
        }
      }
      img.data = std::move(out);
      break;
    }
  }
  return img;
}

}  // namespace repforge
