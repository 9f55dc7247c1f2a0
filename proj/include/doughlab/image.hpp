#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "doughlab/sim.hpp"

namespace dough::img {

struct Image {
  int w = 0, h = 0;
  std::vector<uint8_t> rgb;  // 3 bytes per pixel, row-major

  static Image blank(int w, int h, uint8_t r = 16, uint8_t g = 16, uint8_t b = 20);
};

// Observation channels to color: dough -> warm, tools -> green, statics -> blue.
Image obs_to_image(const sim::Observation& obs, int upscale = 4);

Image hstrip(const std::vector<Image>& panels, int sep = 2);
Image grid(const std::vector<Image>& panels, int cols, int sep = 2);

void write_ppm(const Image& im, const std::string& path);

}  // namespace dough::img
