#include "fusenet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "fusenet/errors.hpp"

namespace fusenet::io {

namespace {

constexpr char kMagic[8] = {'F', 'U', 'S', 'E', 'N', 'E', 'T', 'C'};

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_bytes(std::string& out, const std::string& s) {
  put_u64(out, s.size());
  out += s;
}

class Reader {
 public:
  Reader(const std::string& bytes, std::string origin) : bytes_(bytes), origin_(std::move(origin)) {}

  std::uint64_t u64() { return uint(8); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(uint(4)); }

  std::string bytes(std::uint64_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  void need(std::uint64_t n) const {
    if (n > bytes_.size() - pos_) throw DataError(origin_ + ": checkpoint is truncated");
  }

 private:
  std::uint64_t uint(int width) {
    need(width);
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += width;
    return v;
  }

  const std::string& bytes_;
  std::string origin_;
  std::size_t pos_ = 0;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

const Blob* Checkpoint::find(const std::string& name) const {
  for (const auto& b : blobs) {
    if (b.name == name) return &b;
  }
  return nullptr;
}

const std::string& Checkpoint::value(const std::string& key) const {
  auto it = config.find(key);
  if (it == config.end()) throw DataError("checkpoint config has no key '" + key + "'");
  return it->second;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::string out(kMagic, sizeof(kMagic));
  put_u32(out, ckpt.version);
  put_bytes(out, format_key_values(ckpt.config));
  put_u64(out, ckpt.blobs.size());
  for (const auto& b : ckpt.blobs) {
    if (nd::shape_numel(b.shape) != b.data.size()) {
      throw std::invalid_argument("checkpoint blob '" + b.name + "' data does not match its shape");
    }
    put_bytes(out, b.name);
    put_u64(out, b.shape.size());
    for (auto d : b.shape) put_u64(out, d);
    put_u64(out, b.data.size());
    for (float f : b.data) put_u32(out, std::bit_cast<std::uint32_t>(f));
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot open '" + path.string() + "' for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw DataError("failed writing '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open checkpoint '" + path.string() + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  const std::string bytes = ss.str();
  const std::string origin = path.string();
  Reader r(bytes, origin);
  if (r.bytes(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic))) {
    throw DataError(origin + ": not a fusenet checkpoint");
  }
  Checkpoint ckpt;
  ckpt.version = r.u32();
  if (ckpt.version != Checkpoint::kFormatVersion) {
    throw DataError(origin + ": unsupported checkpoint version " + std::to_string(ckpt.version));
  }
  ckpt.config = parse_key_values(r.bytes(r.u64()), origin);
  const std::uint64_t n = r.u64();
  for (std::uint64_t i = 0; i < n; ++i) {
    Blob b;
    b.name = r.bytes(r.u64());
    const std::uint64_t ndim = r.u64();
    r.need(ndim * 8);
    for (std::uint64_t d = 0; d < ndim; ++d) b.shape.push_back(r.u64());
    const std::uint64_t count = r.u64();
    if (count != nd::shape_numel(b.shape)) throw DataError(origin + ": blob '" + b.name + "' has inconsistent extents");
    r.need(count * 4);
    b.data.resize(count);
    for (auto& v : b.data) v = std::bit_cast<float>(r.u32());
    ckpt.blobs.push_back(std::move(b));
  }
  return ckpt;
}

std::map<std::string, std::string> parse_key_values(const std::string& text, const std::string& origin) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key=value, got '" + line + "'");
    }
    std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
    kv[key] = trim(line.substr(eq + 1));
  }
  return kv;
}

std::string format_key_values(const std::map<std::string, std::string>& kv) {
  std::string out;
  for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
  return out;
}

}  // namespace fusenet::io
