#include "augsynth/nn/serialize.hpp"

#include <cstdint>
#include <fstream>

#include "augsynth/error.hpp"

namespace augsynth::nn {
namespace {
constexpr std::uint32_t kMagic = 0x41534731;  // "ASG1"

template <class T>
void put(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw DataError("truncated parameter file");
  return v;
}
}  // namespace

void save_params(const ParamList& params, const std::filesystem::path& path) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    put(out, kMagic);
    put(out, static_cast<std::uint32_t>(params.size()));
    for (const auto* p : params) {
      put(out, static_cast<std::uint32_t>(p->name.size()));
      out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
      put(out, static_cast<std::int64_t>(p->value.rows()));
      put(out, static_cast<std::int64_t>(p->value.cols()));
      out.write(reinterpret_cast<const char*>(p->value.data()),
                static_cast<std::streamsize>(p->value.size() * sizeof(float)));
    }
    if (!out) throw DataError("write failed for " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

void load_params(const ParamList& params, const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  if (get<std::uint32_t>(in) != kMagic) throw DataError(path.string() + " is not a parameter file");
  const auto count = get<std::uint32_t>(in);
  if (count != params.size())
    throw DataError(path.string() + ": expected " + std::to_string(params.size()) + " tensors, found " +
                    std::to_string(count));
  for (auto* p : params) {
    const auto len = get<std::uint32_t>(in);
    std::string name(len, '\0');
    in.read(name.data(), len);
    const auto rows = get<std::int64_t>(in);
    const auto cols = get<std::int64_t>(in);
    if (name != p->name || rows != p->value.rows() || cols != p->value.cols())
      throw DataError(path.string() + ": tensor mismatch at " + p->name + " (file has " + name + ")");
    in.read(reinterpret_cast<char*>(p->value.data()), static_cast<std::streamsize>(p->value.size() * sizeof(float)));
    if (!in) throw DataError("truncated parameter file " + path.string());
  }
}

}  // namespace augsynth::nn
