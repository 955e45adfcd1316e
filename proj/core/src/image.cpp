#include "fineray/image.hpp"

#include <fstream>

namespace fineray {

void write_ppm(const std::string& path, const Image& img) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("write_ppm: cannot open " + path);
  f << "P6\n" << img.width << " " << img.height << "\n255\n";
  std::vector<unsigned char> buf(img.rgb.size());
  for (size_t i = 0; i < img.rgb.size(); ++i) buf[i] = quantize8(img.rgb[i]);
  f.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!f) throw Error("write_ppm: short write to " + path);
}

Image read_ppm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("read_ppm: cannot open " + path);
  std::string magic;
  f >> magic;
  if (magic != "P6") throw Error("read_ppm: " + path + " is not a binary PPM");
  int w = 0, h = 0, maxval = 0;
  f >> w >> h >> maxval;
  if (!f || w < 1 || h < 1 || maxval != 255)
    throw Error("read_ppm: bad header in " + path);
  f.get();  // single whitespace after header
  Image img(h, w);
  std::vector<unsigned char> buf(img.rgb.size());
  f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (f.gcount() != static_cast<std::streamsize>(buf.size()))
    throw Error("read_ppm: truncated pixel data in " + path);
  for (size_t i = 0; i < buf.size(); ++i) img.rgb[i] = buf[i] / 255.0;
  return img;
}

}  // namespace fineray
