#pragma once

#include "promptcount/tensor.hpp"

#include <cstdint>
#include <string>

namespace pc {

// Binary PPM (P6, maxval 255). Images are (3,H,W) doubles in [0,1]; values
// are quantized to 8 bits on write.
void save_ppm(const std::string& path, const Tensor& image);
Tensor load_ppm(const std::string& path);

// Binary PGM (P5), used for density visualizations.
void save_pgm(const std::string& path, const std::vector<uint8_t>& gray, int h, int w);

// Density map file: magic "PDM1", two u32 little-endian (h, w), then h*w f32
// little-endian row-major.
void save_pdm(const std::string& path, const Tensor& density);
Tensor load_pdm(const std::string& path);

// Snap a tensor's values through float32 so a PDM round trip is lossless.
Tensor snap_f32(const Tensor& t);

// FNV-1a 64-bit over a file's bytes, as 16 hex digits.
std::string file_checksum(const std::string& path);

}  // namespace pc
