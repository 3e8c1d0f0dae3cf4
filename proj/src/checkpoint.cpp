#include "tnhg/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace tnhg::nn {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string_view take(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw std::runtime_error("checkpoint truncated");
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

const NamedTensor* Checkpoint::find(std::string_view name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

std::string serialize_checkpoint(const nlohmann::json& header, const std::vector<const Parameter*>& params) {
  std::string out(kCheckpointMagic);
  put<std::uint32_t>(out, kCheckpointVersion);
  const std::string h = header.dump();
  put<std::uint64_t>(out, h.size());
  out += h;
  put<std::uint64_t>(out, params.size());
  for (const auto* p : params) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p->name.size()));
    out += p->name;
    put<std::uint64_t>(out, static_cast<std::uint64_t>(p->value.rows()));
    put<std::uint64_t>(out, static_cast<std::uint64_t>(p->value.cols()));
    for (Index r = 0; r < p->value.rows(); ++r) {
      for (Index c = 0; c < p->value.cols(); ++c) put<double>(out, p->value(r, c));
    }
  }
  return out;
}

Checkpoint parse_checkpoint(std::string_view bytes) {
  Reader in(bytes);
  if (in.take(kCheckpointMagic.size()) != kCheckpointMagic) throw std::runtime_error("not a checkpoint file");
  if (const auto v = in.get<std::uint32_t>(); v != kCheckpointVersion) {
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(v));
  }
  Checkpoint ckpt;
  const auto header_len = in.get<std::uint64_t>();
  ckpt.header = nlohmann::json::parse(in.take(header_len));
  const auto count = in.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = std::string(in.take(in.get<std::uint32_t>()));
    const auto rows = static_cast<Index>(in.get<std::uint64_t>());
    const auto cols = static_cast<Index>(in.get<std::uint64_t>());
    t.value.resize(rows, cols);
    for (Index r = 0; r < rows; ++r) {
      for (Index c = 0; c < cols; ++c) t.value(r, c) = in.get<double>();
    }
    ckpt.tensors.push_back(std::move(t));
  }
  if (!in.done()) throw std::runtime_error("trailing bytes after checkpoint tensors");
  return ckpt;
}

void restore_parameters(const Checkpoint& ckpt, const ParameterList& params) {
  for (auto* p : params) {
    const auto* t = ckpt.find(p->name);
    if (!t) throw std::runtime_error("checkpoint has no tensor named " + p->name);
    if (t->value.rows() != p->value.rows() || t->value.cols() != p->value.cols()) {
      throw std::runtime_error("shape mismatch for tensor " + p->name);
    }
    p->value = t->value;
    p->zero_grad();
  }
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::string& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("short write to " + path);
}

}  // namespace tnhg::nn
