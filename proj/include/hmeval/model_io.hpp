#pragma once

#include <filesystem>
#include <iosfwd>

#include "hmeval/model.hpp"

namespace hmeval {

// Binary model container, all integers and floats little-endian:
//
//   "HBM1"
//   u32 input rank, u32 extents[rank]
//   u32 n, f64 shift[n], f64 scale[n]     input standardization, n = 0 for none
//   u32 layer count
//   per layer: u8 tag, shape header (u32 extents), f64 parameters
//
// tags / headers:
//   1 Linear    in, out                                   w[out][in], b[out]
//   2 Conv2D    in_ch, out_ch, kernel_h, kernel_w, stride, padding
//                                                         w[out][in][kh][kw], b[out]
//   3 MaxPool2D window, stride
//   4 ReLU      -
//   5 Flatten   -
void write_model(const Model& model, std::ostream& out);
Model read_model(std::istream& in);

void save_model(const Model& model, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);

}  // namespace hmeval
