#include "xing/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "xing/image_io.hpp"

namespace xing {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

namespace {

constexpr char kMagic[4] = {'X', 'G', 'P', 'P'};
constexpr std::uint32_t kMaxRank = 8;

template <class T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T get(std::ifstream& in, const std::filesystem::path& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw IoError("truncated checkpoint: " + path.string());
  return v;
}

}  // namespace

void save_tensors(const std::filesystem::path& path, const TensorMap& tensors) {
  // Write-then-rename so an interrupted save never clobbers a good file.
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(kMagic, 4);
    put<std::uint32_t>(out, kCheckpointVersion);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) {
      put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
      out.write(name.data(), static_cast<std::streamsize>(name.size()));
      put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
      for (std::size_t d : t.shape()) put<std::uint64_t>(out, d);
      out.write(reinterpret_cast<const char*>(t.data().data()),
                static_cast<std::streamsize>(t.numel() * sizeof(double)));
    }
    out.flush();
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

TensorMap load_tensors(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) throw IoError("not an XGPP checkpoint: " + path.string());
  const auto version = get<std::uint32_t>(in, path);
  if (version != kCheckpointVersion) {
    throw IoError("unsupported checkpoint version " + std::to_string(version) + ": " + path.string());
  }
  const auto count = get<std::uint32_t>(in, path);
  TensorMap out;
  for (std::uint32_t r = 0; r < count; ++r) {
    const auto len = get<std::uint32_t>(in, path);
    if (len > 4096) throw IoError("corrupt record name in " + path.string());
    std::string name(len, '\0');
    in.read(name.data(), len);
    const auto rank = get<std::uint32_t>(in, path);
    if (rank == 0 || rank > kMaxRank) throw IoError("corrupt rank for '" + name + "' in " + path.string());
    Shape shape(rank);
    for (auto& d : shape) {
      d = static_cast<std::size_t>(get<std::uint64_t>(in, path));
      if (d == 0 || d > (1ULL << 32)) throw IoError("corrupt shape for '" + name + "' in " + path.string());
    }
    std::vector<double> data(numel(shape));
    in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(double)));
    if (!in) throw IoError("truncated checkpoint: " + path.string());
    if (!out.emplace(name, Tensor(std::move(shape), std::move(data))).second) {
      throw IoError("duplicate record '" + name + "' in " + path.string());
    }
  }
  return out;
}

void load_into(ParamStore& store, const TensorMap& tensors) {
  for (Parameter* p : store.all()) {
    const auto it = tensors.find(p->name);
    if (it == tensors.end()) throw IoError("checkpoint is missing parameter '" + p->name + "'");
    if (it->second.shape() != p->value.shape()) {
      throw IoError("checkpoint shape " + to_string(it->second.shape()) + " for '" + p->name +
                    "' does not match model shape " + to_string(p->value.shape()));
    }
    const auto d = it->second.data();
    p->assign({d.begin(), d.end()});
  }
}

void add_params(TensorMap& out, const ParamStore& store) {
  for (const Parameter* p : store.all()) out.insert_or_assign(p->name, p->value);
}

}  // namespace xing
