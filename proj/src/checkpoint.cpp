#include "fsmix/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "fsmix/common.hpp"

namespace fsmix {

namespace {
constexpr char kMagic[8] = {'F', 'S', 'M', 'X', 'A', 'R', 'C', '1'};

template <class T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw IoError("archive: truncated file");
  return v;
}
}  // namespace

bool Archive::has(const std::string& name) const {
  for (const auto& [n, t] : arrays)
    if (n == name) return true;
  return false;
}

const Tensor& Archive::get(const std::string& name) const {
  for (const auto& [n, t] : arrays)
    if (n == name) return t;
  throw IoError("archive: missing array '" + name + "'");
}

void Archive::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("archive: cannot open for writing: " + path);
  os.write(kMagic, sizeof(kMagic));
  const std::string m = manifest.dump();
  write_pod<uint64_t>(os, m.size());
  os.write(m.data(), static_cast<std::streamsize>(m.size()));
  write_pod<uint64_t>(os, arrays.size());
  for (const auto& [name, t] : arrays) {
    write_pod<uint32_t>(os, static_cast<uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod<uint32_t>(os, static_cast<uint32_t>(t.ndim()));
    for (int i = 0; i < t.ndim(); ++i) write_pod<int64_t>(os, t.dim(i));
    os.write(reinterpret_cast<const char*>(t.ptr()),
             static_cast<std::streamsize>(t.numel() * sizeof(double)));
  }
  if (!os) throw IoError("archive: write failed: " + path);
}

Archive Archive::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("archive: cannot open: " + path);
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw IoError("archive: bad magic in " + path);
  Archive a;
  const uint64_t mlen = read_pod<uint64_t>(is);
  std::string m(mlen, '\0');
  is.read(m.data(), static_cast<std::streamsize>(mlen));
  if (!is) throw IoError("archive: truncated manifest");
  a.manifest = nlohmann::json::parse(m);
  const uint64_t count = read_pod<uint64_t>(is);
  for (uint64_t i = 0; i < count; ++i) {
    const uint32_t nlen = read_pod<uint32_t>(is);
    std::string name(nlen, '\0');
    is.read(name.data(), nlen);
    const uint32_t nd = read_pod<uint32_t>(is);
    std::vector<int64_t> shape(nd);
    for (uint32_t d = 0; d < nd; ++d) shape[d] = read_pod<int64_t>(is);
    Tensor t(shape);
    is.read(reinterpret_cast<char*>(t.ptr()),
            static_cast<std::streamsize>(t.numel() * sizeof(double)));
    if (!is) throw IoError("archive: truncated array '" + name + "'");
    a.arrays.emplace_back(std::move(name), std::move(t));
  }
  return a;
}

}  // namespace fsmix
