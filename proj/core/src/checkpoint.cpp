#include "stal/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace stal::nn {

namespace {

static_assert(std::endian::native == std::endian::little,
              "container I/O assumes a little-endian host");

constexpr char kMagic[4] = {'S', 'T', 'L', 'C'};

void write_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint32_t read_u32(std::istream& is, const char* what) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!is) throw std::runtime_error(std::string("container: truncated ") + what);
  return v;
}

}  // namespace

void write_container(std::ostream& os, const std::vector<NamedTensor>& tensors) {
  os.write(kMagic, 4);
  write_u32(os, kContainerVersion);
  for (const NamedTensor& t : tensors) {
    write_u32(os, static_cast<std::uint32_t>(t.name.size()));
    os.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    write_u32(os, static_cast<std::uint32_t>(t.value.rank()));
    for (int d : t.value.shape()) write_u32(os, static_cast<std::uint32_t>(d));
    os.write(reinterpret_cast<const char*>(t.value.data()),
             static_cast<std::streamsize>(t.value.size() * sizeof(double)));
  }
  if (!os) throw std::runtime_error("container: write failed");
}

std::vector<NamedTensor> read_container(std::istream& is) {
  char magic[4] = {};
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0) {
    throw std::runtime_error("container: bad magic bytes (expected STLC)");
  }
  const std::uint32_t version = read_u32(is, "version");
  if (version != kContainerVersion) {
    throw std::runtime_error("container: unsupported format version " + std::to_string(version));
  }

  std::vector<NamedTensor> tensors;
  while (true) {
    std::uint32_t name_len = 0;
    is.read(reinterpret_cast<char*>(&name_len), sizeof name_len);
    if (is.eof()) break;
    if (!is) throw std::runtime_error("container: truncated record header");

    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    if (!is) throw std::runtime_error("container: truncated tensor name");

    const std::uint32_t rank = read_u32(is, "rank");
    if (rank > 5) throw std::runtime_error("container: tensor rank > 5 for " + name);
    std::vector<int> shape(rank);
    for (std::uint32_t i = 0; i < rank; ++i) {
      shape[i] = static_cast<int>(read_u32(is, "extent"));
    }
    Tensor t(shape);
    is.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!is) throw std::runtime_error("container: truncated payload for " + name);
    tensors.push_back({std::move(name), std::move(t)});
  }
  return tensors;
}

void save_container(const std::string& path, const std::vector<NamedTensor>& tensors) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("container: cannot open for writing: " + path);
  write_container(os, tensors);
}

std::vector<NamedTensor> load_container(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("container: cannot open: " + path);
  return read_container(is);
}

void save_checkpoint(const std::string& path, const std::vector<Param*>& params) {
  std::vector<NamedTensor> tensors;
  tensors.reserve(params.size());
  for (const Param* p : params) tensors.push_back({p->name, p->value});
  save_container(path, tensors);
}

void load_checkpoint(const std::string& path, const std::vector<Param*>& params) {
  std::vector<NamedTensor> tensors = load_container(path);
  std::set<std::string> used;
  for (Param* p : params) {
    const NamedTensor* found = nullptr;
    for (const NamedTensor& t : tensors) {
      if (t.name == p->name) {
        found = &t;
        break;
      }
    }
    if (!found) {
      throw std::runtime_error("checkpoint mismatch: missing parameter " + p->name);
    }
    if (found->value.shape() != p->value.shape()) {
      std::ostringstream os;
      os << "checkpoint mismatch: parameter " << p->name << " has shape "
         << found->value.shape_str() << ", model expects " << p->value.shape_str();
      throw std::runtime_error(os.str());
    }
    p->value = found->value;
    used.insert(p->name);
  }
  for (const NamedTensor& t : tensors) {
    if (!used.count(t.name)) {
      throw std::runtime_error("checkpoint mismatch: unknown parameter " + t.name);
    }
  }
}

}  // namespace stal::nn
