#include "cato/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <unordered_map>

#include "byte_io.hpp"
#include "cato/error.hpp"

namespace cato {
namespace {

constexpr char kMagic[5] = {'C', 'A', 'T', 'O', '1'};

using detail::get_u64;
using detail::put_f64;
using detail::put_u64;

}  // namespace

void write_tensor_file(const std::filesystem::path& path, const std::vector<NamedTensor>& records) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
  os.write(kMagic, sizeof kMagic);
  for (const auto& rec : records) {
    put_u64(os, rec.name.size());
    os.write(rec.name.data(), static_cast<std::streamsize>(rec.name.size()));
    put_u64(os, rec.tensor.rank());
    for (std::size_t d : rec.tensor.shape()) put_u64(os, d);
    for (double v : rec.tensor.data()) put_f64(os, v);
  }
  if (!os) throw IoError("write failed for '" + path.string() + "'");
}

std::vector<NamedTensor> read_tensor_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path.string() + "'");
  char magic[5];
  if (!is.read(magic, 5) || std::memcmp(magic, kMagic, 5) != 0) {
    throw IoError("'" + path.string() + "' is not a CATO1 file");
  }
  std::vector<NamedTensor> out;
  std::uint64_t name_len = 0;
  while (get_u64(is, name_len)) {
    if (name_len > (1u << 20)) throw IoError("corrupt record name length in '" + path.string() + "'");
    std::string name(name_len, '\0');
    std::uint64_t rank = 0;
    if (!is.read(name.data(), static_cast<std::streamsize>(name_len)) || !get_u64(is, rank) || rank > 16) {
      throw IoError("truncated record header in '" + path.string() + "'");
    }
    Shape shape(rank);
    for (auto& d : shape) {
      std::uint64_t v = 0;
      if (!get_u64(is, v)) throw IoError("truncated dims in '" + path.string() + "'");
      d = static_cast<std::size_t>(v);
    }
    std::vector<double> data(shape_numel(shape));
    for (double& v : data) {
      std::uint64_t bits = 0;
      if (!get_u64(is, bits)) throw IoError("truncated payload for '" + name + "' in '" + path.string() + "'");
      v = std::bit_cast<double>(bits);
    }
    out.push_back({std::move(name), Tensor(std::move(shape), std::move(data))});
  }
  return out;
}

void save_parameters(const std::filesystem::path& path, const std::vector<Parameter*>& params) {
  std::vector<NamedTensor> recs;
  recs.reserve(params.size());
  for (const Parameter* p : params) recs.push_back({p->name, p->value});
  write_tensor_file(path, recs);
}

void load_parameters(const std::filesystem::path& path, const std::vector<Parameter*>& params) {
  std::unordered_map<std::string, Tensor> by_name;
  for (auto& rec : read_tensor_file(path)) by_name.emplace(std::move(rec.name), std::move(rec.tensor));
  for (Parameter* p : params) {
    auto it = by_name.find(p->name);
    if (it == by_name.end()) throw ShapeError("checkpoint lacks parameter '" + p->name + "'");
    if (it->second.shape() != p->value.shape()) {
      throw ShapeError("checkpoint parameter '" + p->name + "' has shape " + shape_str(it->second.shape()) +
                       ", model expects " + shape_str(p->value.shape()));
    }
    p->value = it->second;
  }
}

std::string file_digest(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path.string() + "'");
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 14];
  while (is.read(buf, sizeof buf) || is.gcount() > 0) {
    for (std::streamsize i = 0; i < is.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

}  // namespace cato
