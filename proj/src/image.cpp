#include "doughlab/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace dough::img {

Image Image::blank(int w, int h, uint8_t r, uint8_t g, uint8_t b) {
  Image im;
  im.w = w;
  im.h = h;
  im.rgb.resize(static_cast<size_t>(w) * h * 3);
  for (int i = 0; i < w * h; ++i) {
    im.rgb[static_cast<size_t>(i) * 3] = r;
    im.rgb[static_cast<size_t>(i) * 3 + 1] = g;
    im.rgb[static_cast<size_t>(i) * 3 + 2] = b;
  }
  return im;
}

Image obs_to_image(const sim::Observation& obs, int upscale) {
  int R = obs.res;
  Image im = Image::blank(R * upscale, R * upscale);
  for (int r = 0; r < R; ++r) {
    for (int c = 0; c < R; ++c) {
      double dough = obs.at(0, r, c);
      double tool = obs.at(1, r, c);
      double stat = obs.at(2, r, c);
      double red = 20 + 225 * std::min(1.0, dough * 1.3) + 40 * tool;
      double green = 16 + 120 * dough + 200 * tool;
      double blue = 24 + 40 * dough + 210 * stat;
      uint8_t r8 = static_cast<uint8_t>(std::clamp(red, 0.0, 255.0));
      uint8_t g8 = static_cast<uint8_t>(std::clamp(green, 0.0, 255.0));
      uint8_t b8 = static_cast<uint8_t>(std::clamp(blue, 0.0, 255.0));
      for (int ur = 0; ur < upscale; ++ur) {
        for (int uc = 0; uc < upscale; ++uc) {
          size_t p = (static_cast<size_t>(r * upscale + ur) * im.w + (c * upscale + uc)) * 3;
          im.rgb[p] = r8;
          im.rgb[p + 1] = g8;
          im.rgb[p + 2] = b8;
        }
      }
    }
  }
  return im;
}

Image hstrip(const std::vector<Image>& panels, int sep) {
  if (panels.empty()) return Image::blank(1, 1);
  int h = 0, w = 0;
  for (const auto& p : panels) {
    h = std::max(h, p.h);
    w += p.w;
  }
  w += sep * (static_cast<int>(panels.size()) - 1);
  Image out = Image::blank(w, h, 40, 40, 46);
  int x0 = 0;
  for (const auto& p : panels) {
    for (int r = 0; r < p.h; ++r)
      for (int c = 0; c < p.w; ++c)
        for (int ch = 0; ch < 3; ++ch)
          out.rgb[(static_cast<size_t>(r) * out.w + x0 + c) * 3 + ch] =
              p.rgb[(static_cast<size_t>(r) * p.w + c) * 3 + ch];
    x0 += p.w + sep;
  }
  return out;
}

Image grid(const std::vector<Image>& panels, int cols, int sep) {
  if (panels.empty()) return Image::blank(1, 1);
  cols = std::max(1, cols);
  int rows = (static_cast<int>(panels.size()) + cols - 1) / cols;
  int pw = panels[0].w, ph = panels[0].h;
  Image out = Image::blank(cols * pw + sep * (cols - 1), rows * ph + sep * (rows - 1), 40, 40, 46);
  for (size_t i = 0; i < panels.size(); ++i) {
    int gr = static_cast<int>(i) / cols, gc = static_cast<int>(i) % cols;
    int y0 = gr * (ph + sep), x0 = gc * (pw + sep);
    const Image& p = panels[i];
    for (int r = 0; r < p.h; ++r)
      for (int c = 0; c < p.w; ++c)
        for (int ch = 0; ch < 3; ++ch)
          out.rgb[(static_cast<size_t>(y0 + r) * out.w + x0 + c) * 3 + ch] =
              p.rgb[(static_cast<size_t>(r) * p.w + c) * 3 + ch];
  }
  return out;
}

void write_ppm(const Image& im, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail("cannot write image: " + path);
  out << "P6\n" << im.w << " " << im.h << "\n255\n";
  out.write(reinterpret_cast<const char*>(im.rgb.data()), static_cast<std::streamsize>(im.rgb.size()));
  if (!out) fail("image write failed: " + path);
}

}  // namespace dough::img
