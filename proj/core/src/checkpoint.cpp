#include "lscm/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "lscm/errors.hpp"

namespace lscm {

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  void need(std::size_t n, const char* what) const {
    if (remaining() < n) throw CorruptCheckpointError(std::string("truncated ") + what, pos_);
  }

  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }

  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }

  std::string_view take(std::size_t n, const char* what) {
    need(n, what);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return &t;
  return nullptr;
}

std::string encode_checkpoint(const Checkpoint& ckpt) {
  std::string out(kCheckpointMagic, 4);
  out.push_back(static_cast<char>(ckpt.version));
  std::set<std::string> seen;
  for (const auto& [name, t] : ckpt.tensors) {
    if (!seen.insert(name).second) throw ContractError("duplicate checkpoint tensor name '" + name + "'");
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    for (double v : t.data()) put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  put_u64(out, ckpt.iteration);
  return out;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  Reader r(bytes);
  const auto magic = r.take(4, "magic");
  if (std::memcmp(magic.data(), kCheckpointMagic, 4) != 0) throw CorruptCheckpointError("bad magic", 0);
  const auto version = static_cast<std::uint8_t>(r.take(1, "version")[0]);
  if (version != kCheckpointVersion) {
    throw CorruptCheckpointError("unsupported version " + std::to_string(version), 4);
  }
  Checkpoint ck;
  ck.version = version;
  std::set<std::string> seen;
  while (r.remaining() > 8) {
    const std::size_t start = r.offset();
    const std::uint32_t name_len = r.u32("name length");
    std::string name(r.take(name_len, "name"));
    if (!seen.insert(name).second) throw CorruptCheckpointError("duplicate tensor '" + name + "'", start);
    const std::uint32_t ndim = r.u32("ndim");
    Shape shape;
    for (std::uint32_t i = 0; i < ndim; ++i) {
      const std::uint32_t d = r.u32("dims");
      if (d == 0) throw CorruptCheckpointError("zero extent in tensor '" + name + "'", r.offset() - 4);
      shape.push_back(d);
    }
    const std::size_t n = shape_numel(shape);
    // payload plus the trailing iteration counter must still fit
    if (n > (r.remaining() - std::min<std::size_t>(r.remaining(), 8)) / 8) {
      throw CorruptCheckpointError("truncated payload of tensor '" + name + "'", r.offset());
    }
    std::vector<double> data(n);
    for (std::size_t i = 0; i < n; ++i) data[i] = std::bit_cast<double>(r.u64("payload"));
    ck.tensors.emplace_back(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  if (r.remaining() != 8) throw CorruptCheckpointError("missing iteration counter", r.offset());
  ck.iteration = r.u64("iteration");
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const std::string bytes = encode_checkpoint(ckpt);
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write checkpoint " + tmp);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("write failed for " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place at " + path.string() + ": " + ec.message());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read checkpoint " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return decode_checkpoint(ss.str());
}

}  // namespace lscm
