#pragma once

#include <string>

#include "repforge/tensor.hpp"

namespace repforge {

// The three input formattings of a standardized 9x784 rep matrix.
enum class ImageLayout { square84, rect, channels };

struct LayoutDims {
  std::size_t h = 0, w = 0, c = 0;
};

LayoutDims layout_dims(ImageLayout layout);  // 84x84x1, 9x784x1, 3x784x3

const char* layout_name(ImageLayout layout);

// Accepts "square84" | "rect" | "rect-disj" | "channels"; "rect-disj" maps to
// the rect layout with *disjoint set to true (conv1 stride [3,1]).
ImageLayout parse_layout(const std::string& name, bool* disjoint = nullptr);

struct RepMeta {
  std::string set_id;
  std::size_t rep_index = 0;
  std::size_t label = 0;
};

struct InputImage {
  Tensor data;  // H x W x C per layout
  ImageLayout layout = ImageLayout::rect;
  RepMeta meta;
};

// square84: row-major reshape of the 9x784 matrix to 84x84 (feature row r,
// time t -> flat 784r + t). rect: identity plane. channels: channel c holds
// feature rows {3c, 3c+1, 3c+2}, so c0 = local acc, c1 = world acc, c2 =
// Euler angles.
InputImage format_rep(const Tensor& padded, ImageLayout layout,
                      RepMeta meta = {});

}  // namespace repforge
