#include "lino/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <unordered_set>

#include "lino/errors.hpp"

namespace lino::training {

namespace {

constexpr char kMagic[8] = {'L', 'I', 'N', 'O', 'C', 'K', 'P', 'T'};
constexpr std::uint8_t kFloat64 = 1;

template <class T>
void put(std::vector<std::uint8_t>& out, T v) {
  std::uint8_t buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  out.insert(out.end(), buf, buf + sizeof(T));
}

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& b, std::size_t limit) : b_(b), limit_(limit) {}

  template <class T>
  T get() {
    need(sizeof(T));
    std::uint8_t buf[sizeof(T)];
    std::memcpy(buf, b_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
    pos_ += sizeof(T);
    T v;
    std::memcpy(&v, buf, sizeof(T));
    return v;
  }

  std::string bytes(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > limit_) throw IntegrityError("checkpoint truncated");
  }
  const std::vector<std::uint8_t>& b_;
  std::size_t limit_;
  std::size_t pos_ = 0;
};

}  // namespace

std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t n) {
  std::uint64_t h = 1469598103934665603ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 1099511628211ULL;
  }
  return h;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  std::vector<std::uint8_t> out(kMagic, kMagic + 8);
  put<std::uint32_t>(out, Checkpoint::kVersion);
  const std::string cfg = ckpt.config.to_text();
  put<std::uint64_t>(out, cfg.size());
  out.insert(out.end(), cfg.begin(), cfg.end());
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.params.size()));
  for (const auto& [name, t] : ckpt.params.entries()) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    out.push_back(kFloat64);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (auto e : t.shape()) put<std::uint64_t>(out, e);
    for (double v : t.data()) put<double>(out, v);
  }
  put<std::uint64_t>(out, fnv1a64(out.data(), out.size()));
  return out;
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 8 + 4 + 8) throw IntegrityError("checkpoint truncated");
  if (std::memcmp(bytes.data(), kMagic, 8) != 0) throw IntegrityError("not a checkpoint (bad magic)");
  const std::size_t body = bytes.size() - 8;
  {
    Reader tail(bytes, bytes.size());
    (void)tail.bytes(body);
    const auto stored = tail.get<std::uint64_t>();
    if (stored != fnv1a64(bytes.data(), body)) throw IntegrityError("checkpoint checksum mismatch (corrupt or truncated file)");
  }
  Reader r(bytes, body);
  (void)r.bytes(8);
  const auto version = r.get<std::uint32_t>();
  if (version != Checkpoint::kVersion) {
    throw IntegrityError("checkpoint version " + std::to_string(version) + " unsupported (expected " +
                         std::to_string(Checkpoint::kVersion) + ")");
  }
  Checkpoint ck;
  const auto cfg_len = r.get<std::uint64_t>();
  ck.config = LiNoConfig::from_text(r.bytes(cfg_len));
  const auto count = r.get<std::uint32_t>();
  std::unordered_set<std::string> seen;
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto name_len = r.get<std::uint32_t>();
    std::string name = r.bytes(name_len);
    if (!seen.insert(name).second) throw IntegrityError("tensor '" + name + "' appears twice");
    const auto dtype = r.get<std::uint8_t>();
    if (dtype != kFloat64) throw IntegrityError("tensor '" + name + "' has unsupported dtype");
    const auto rank = r.get<std::uint32_t>();
    if (rank == 0 || rank > 8) throw IntegrityError("tensor '" + name + "' has invalid rank");
    Shape shape(rank);
    std::size_t numel = 1;
    for (auto& e : shape) {
      e = static_cast<std::size_t>(r.get<std::uint64_t>());
      if (e == 0 || e > (std::size_t{1} << 32)) throw IntegrityError("tensor '" + name + "' has invalid extent");
      numel *= e;
    }
    std::vector<double> data(numel);
    for (auto& v : data) v = r.get<double>();
    ck.params.add(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  if (r.pos() != body) throw IntegrityError("trailing bytes after tensor table");
  check_params(ck.params, ck.config);
  return ck;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  const auto bytes = encode_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

LiNoParams load_params(const std::string& path, const LiNoConfig& expected) {
  Checkpoint ck = load_checkpoint(path);
  check_params(ck.params, expected);
  return std::move(ck.params);
}

}  // namespace lino::training
