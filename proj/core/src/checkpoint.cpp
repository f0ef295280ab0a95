#include "slm/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace slm {

namespace {

constexpr char kMagic[8] = {'S', 'L', 'M', 'C', 'K', 'P', 'T', '1'};

static_assert(std::endian::native == std::endian::little,
              "checkpoint code assumes a little-endian host");

template <typename T>
void write_pod(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const std::vector<NamedTensor>& entries,
                     const std::string& meta_json) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("checkpoint: cannot open for writing: " + path);
  os.write(kMagic, sizeof(kMagic));
  write_pod<std::uint64_t>(os, meta_json.size());
  os.write(meta_json.data(), static_cast<std::streamsize>(meta_json.size()));
  write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    write_pod<std::uint16_t>(os, static_cast<std::uint16_t>(e.name.size()));
    os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    write_pod<std::uint8_t>(os, static_cast<std::uint8_t>(e.tensor.shape().size()));
    for (int d : e.tensor.shape()) write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(d));
    write_pod<std::uint8_t>(os, e.trainable ? 1 : 0);
    os.write(reinterpret_cast<const char*>(e.tensor.data().data()),
             static_cast<std::streamsize>(e.tensor.size() * sizeof(double)));
  }
  if (!os) throw std::runtime_error("checkpoint: write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open: " + path);
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  Checkpoint ck;
  auto meta_len = read_pod<std::uint64_t>(is);
  ck.meta_json.resize(meta_len);
  is.read(ck.meta_json.data(), static_cast<std::streamsize>(meta_len));
  auto count = read_pod<std::uint32_t>(is);
  for (std::uint32_t i = 0; i < count; ++i) {
    auto name_len = read_pod<std::uint16_t>(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    auto ndim = read_pod<std::uint8_t>(is);
    std::vector<int> shape(ndim);
    for (auto& d : shape) d = static_cast<int>(read_pod<std::uint32_t>(is));
    (void)read_pod<std::uint8_t>(is);  // trainable flag, not needed on load
    std::vector<double> data(shape_numel(shape));
    is.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(double)));
    if (!is) throw std::runtime_error("checkpoint: truncated tensor data in " + path);
    ck.tensors.emplace(name, Tensor::from_data(shape, std::move(data)));
  }
  return ck;
}

}  // namespace slm
