#include "fineray/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace fineray {

static_assert(std::endian::native == std::endian::little,
              "checkpoint container assumes a little-endian host");

namespace fs = std::filesystem;

namespace {

constexpr char kMagic[8] = {'F', 'R', 'C', 'K', 'P', 'T', '0', '1'};

void write_u32(std::ostream& os, uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), 4);
}
uint32_t read_u32(std::istream& is) {
  uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 4);
  return v;
}

}  // namespace

void save_checkpoint(const std::string& dir, const Checkpoint& ckpt) {
  fs::create_directories(dir);
  fs::path bin = fs::path(dir) / "params.bin";
  fs::path man = fs::path(dir) / "manifest.txt";
  fs::path bin_tmp = bin.string() + ".tmp";
  fs::path man_tmp = man.string() + ".tmp";

  {
    std::ofstream f(bin_tmp, std::ios::binary);
    if (!f) throw Error("save_checkpoint: cannot write " + bin_tmp.string());
    f.write(kMagic, sizeof(kMagic));
    write_u32(f, static_cast<uint32_t>(ckpt.tensors.size()));
    for (const auto& [name, t] : ckpt.tensors) {
      write_u32(f, static_cast<uint32_t>(name.size()));
      f.write(name.data(), static_cast<std::streamsize>(name.size()));
      write_u32(f, static_cast<uint32_t>(t.shape.size()));
      for (int d : t.shape) write_u32(f, static_cast<uint32_t>(d));
      f.write(reinterpret_cast<const char*>(t.data.data()),
              static_cast<std::streamsize>(t.data.size() * sizeof(float)));
    }
    if (!f) throw Error("save_checkpoint: short write to " + bin_tmp.string());
  }
  {
    std::ofstream f(man_tmp);
    if (!f) throw Error("save_checkpoint: cannot write " + man_tmp.string());
    f << "fineray-checkpoint 1\n";
    for (const auto& [k, v] : ckpt.meta) f << k << ": " << v << "\n";
  }
  fs::rename(bin_tmp, bin);
  fs::rename(man_tmp, man);
}

Checkpoint load_checkpoint(const std::string& dir) {
  fs::path bin = fs::path(dir) / "params.bin";
  fs::path man = fs::path(dir) / "manifest.txt";
  std::ifstream f(bin, std::ios::binary);
  if (!f) throw Error("load_checkpoint: cannot open " + bin.string());
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, kMagic, 8) != 0)
    throw Error("load_checkpoint: bad magic in " + bin.string());

  Checkpoint ckpt;
  uint32_t count = read_u32(f);
  for (uint32_t i = 0; i < count; ++i) {
    uint32_t nlen = read_u32(f);
    if (!f || nlen > 4096) throw Error("load_checkpoint: corrupt tensor name");
    std::string name(nlen, '\0');
    f.read(name.data(), nlen);
    uint32_t rank = read_u32(f);
    if (!f || rank > 8) throw Error("load_checkpoint: corrupt rank for " + name);
    std::vector<int> shape(rank);
    for (uint32_t d = 0; d < rank; ++d) shape[d] = static_cast<int>(read_u32(f));
    Tensor<float> t = Tensor<float>::zeros(shape);
    f.read(reinterpret_cast<char*>(t.data.data()),
           static_cast<std::streamsize>(t.data.size() * sizeof(float)));
    if (!f) throw Error("load_checkpoint: truncated data for " + name);
    ckpt.tensors.emplace_back(std::move(name), std::move(t));
  }

  std::ifstream mf(man);
  if (!mf) throw Error("load_checkpoint: cannot open " + man.string());
  std::string line;
  if (!std::getline(mf, line) || line != "fineray-checkpoint 1")
    throw Error("load_checkpoint: bad manifest header in " + man.string());
  while (std::getline(mf, line)) {
    if (line.empty()) continue;
    size_t sep = line.find(": ");
    if (sep == std::string::npos)
      throw Error("load_checkpoint: malformed manifest line '" + line + "'");
    ckpt.meta.emplace_back(line.substr(0, sep), line.substr(sep + 2));
  }
  return ckpt;
}

}  // namespace fineray
