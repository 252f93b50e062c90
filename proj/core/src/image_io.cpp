#include "augsynth/image_io.hpp"

#include <atomic>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "augsynth/error.hpp"

namespace augsynth {

const char* pnm_extension(int channels) { return channels == 3 ? "ppm" : "pgm"; }

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  // Unique per writer so concurrent writers of the same file never share a temp.
  static std::atomic<unsigned long> counter{0};
  const auto tmp = path.string() + ".tmp" + std::to_string(counter.fetch_add(1));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("write failed for " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

void write_pnm(const Image& image, const std::filesystem::path& path) {
  if (image.channels() != 1 && image.channels() != 3)
    throw DataError("netpbm supports 1 or 3 channels, got " + std::to_string(image.channels()));
  std::ostringstream out;
  out << (image.channels() == 1 ? "P5" : "P6") << '\n' << image.width() << ' ' << image.height() << "\n255\n";
  std::string body(image.size(), '\0');
  const auto px = image.pixels();
  for (std::size_t i = 0; i < px.size(); ++i) {
    const float c = std::isfinite(px[i]) ? std::fmin(1.0f, std::fmax(0.0f, px[i])) : 0.0f;
    body[i] = static_cast<char>(static_cast<unsigned char>(std::nearbyint(c * 255.0f)));
  }
  out << body;
  write_file_atomic(path, out.str());
}

Image read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open image " + path.string());
  std::string magic;
  int width = 0, height = 0, maxval = 0;
  in >> magic >> width >> height >> maxval;
  if (!in || (magic != "P5" && magic != "P6") || maxval != 255 || width <= 0 || height <= 0)
    throw DataError("unsupported or malformed netpbm header in " + path.string());
  in.get();  // single whitespace after maxval
  const int channels = magic == "P5" ? 1 : 3;
  std::string body(static_cast<std::size_t>(width) * height * channels, '\0');
  in.read(body.data(), static_cast<std::streamsize>(body.size()));
  if (in.gcount() != static_cast<std::streamsize>(body.size())) throw DataError("truncated image " + path.string());
  std::vector<float> px(body.size());
  for (std::size_t i = 0; i < body.size(); ++i) px[i] = static_cast<float>(static_cast<unsigned char>(body[i])) / 255.0f;
  return Image(height, width, channels, std::move(px));
}

}  // namespace augsynth
