#include "adprog/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <sstream>

#include "adprog/error.hpp"
#include "adprog/text_io.hpp"

namespace adprog {
namespace {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

constexpr char kMagic[8] = {'A', 'D', 'P', 'C', 'K', 'P', 'T', '\0'};

class Writer {
 public:
  template <class T>
  void put(T value) {
    out_.append(reinterpret_cast<const char*>(&value), sizeof(T));
  }
  void bytes(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
  void name(const std::string& s) {
    if (s.size() > 0xFFFF) throw InputError("checkpoint: name too long");
    put(static_cast<std::uint16_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void doubles(std::span<const double> v) { bytes(v.data(), v.size() * sizeof(double)); }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& data) : data_(data) {}
  void bytes(void* dst, std::size_t n) {
    if (n > data_.size() - pos_) throw InputError("checkpoint: truncated");
    std::memcpy(dst, data_.data() + pos_, n);
    pos_ += n;
  }
  template <class T>
  T get() {
    T value{};
    bytes(&value, sizeof(T));
    return value;
  }
  std::string name() {
    std::string s(get<std::uint16_t>(), '\0');
    bytes(s.data(), s.size());
    return s;
  }
  std::vector<double> doubles(std::uint64_t n) {
    if (n > (data_.size() - pos_) / sizeof(double)) throw InputError("checkpoint: truncated");
    std::vector<double> v(n);
    bytes(v.data(), n * sizeof(double));
    return v;
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  const std::string& data_;
  std::size_t pos_ = 0;
};

}  // namespace

const Tensor& Checkpoint::tensor(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return t;
  throw InputError("checkpoint: no tensor named " + name);
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.put(kCheckpointVersion);
  const nlohmann::json header = {{"kind", ckpt.kind},      {"architecture", ckpt.architecture},
                                 {"epoch", ckpt.epoch},    {"fold", ckpt.fold},
                                 {"rng_state", ckpt.rng_state}, {"meta", ckpt.meta}};
  const std::string text = header.dump();
  w.put(static_cast<std::uint64_t>(text.size()));
  w.bytes(text.data(), text.size());
  w.put(static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, t] : ckpt.tensors) {
    w.name(name);
    if (t.rank() > 255) throw InputError("checkpoint: rank too large");
    w.put(static_cast<std::uint8_t>(t.rank()));
    for (std::size_t d : t.shape()) w.put(static_cast<std::uint64_t>(d));
    w.doubles(t.values());
  }
  w.put(static_cast<std::uint32_t>(ckpt.moments.size()));
  for (const auto& [name, m] : ckpt.moments) {
    w.name(name);
    w.put(m.step);
    w.put(static_cast<std::uint64_t>(m.m.size()));
    w.doubles(m.m);
    w.doubles(m.v);
  }
  return w.take();
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  char magic[8];
  r.bytes(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof magic) != 0) throw InputError("checkpoint: bad magic");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw InputError("checkpoint: unsupported format version " + std::to_string(version));
  }
  const auto header_len = r.get<std::uint64_t>();
  if (header_len > bytes.size()) throw InputError("checkpoint: truncated");
  std::string text(header_len, '\0');
  r.bytes(text.data(), text.size());
  Checkpoint ckpt;
  try {
    const nlohmann::json header = nlohmann::json::parse(text);
    ckpt.kind = header.at("kind").get<std::string>();
    ckpt.architecture = header.at("architecture");
    ckpt.epoch = header.at("epoch").get<std::uint64_t>();
    ckpt.fold = header.at("fold").get<std::uint64_t>();
    ckpt.rng_state = header.at("rng_state").get<std::string>();
    ckpt.meta = header.at("meta");
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("checkpoint: bad header: ") + e.what());
  }
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.name();
    const auto rank = r.get<std::uint8_t>();
    Shape shape(rank);
    for (auto& d : shape) d = r.get<std::uint64_t>();
    ckpt.tensors.emplace_back(std::move(name), Tensor(shape, r.doubles(shape_numel(shape))));
  }
  const auto moment_count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < moment_count; ++i) {
    std::string name = r.name();
    AdamMoments m;
    m.step = r.get<std::uint64_t>();
    const auto n = r.get<std::uint64_t>();
    m.m = r.doubles(n);
    m.v = r.doubles(n);
    ckpt.moments.emplace(std::move(name), std::move(m));
  }
  if (!r.done()) throw InputError("checkpoint: trailing bytes");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_file(path, serialize_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return deserialize_checkpoint(read_file(path)); }

std::vector<std::pair<std::string, Tensor>> snapshot(const ParamList& params) {
  std::vector<std::pair<std::string, Tensor>> out;
  out.reserve(params.size());
  for (const NamedParam& p : params) out.emplace_back(p.name, p.tensor.detach());
  return out;
}

void load_params(const ParamList& params, const std::vector<std::pair<std::string, Tensor>>& tensors) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& [name, t] : tensors) by_name[name] = &t;
  for (const NamedParam& p : params) {
    const auto it = by_name.find(p.name);
    if (it == by_name.end()) throw InputError("checkpoint: missing tensor " + p.name);
    if (it->second->shape() != p.tensor.shape()) {
      throw DimensionError("checkpoint: tensor " + p.name + " has shape " + shape_str(it->second->shape()) +
                           ", model expects " + shape_str(p.tensor.shape()));
    }
    Tensor target = p.tensor;
    const auto src = it->second->values();
    std::copy(src.begin(), src.end(), target.mutable_values().begin());
  }
}

std::string rng_to_string(const Rng& rng) {
  std::ostringstream ss;
  ss << rng;
  return ss.str();
}

Rng rng_from_string(const std::string& state) {
  Rng rng;
  std::istringstream ss(state);
  ss >> rng;
  if (!ss) throw InputError("checkpoint: unreadable rng state");
  return rng;
}

}  // namespace adprog
