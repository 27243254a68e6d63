#include "gait/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "gait/error.hpp"

namespace gait {
namespace {

constexpr std::array<char, 8> kMagic = {'G', 'A', 'I', 'T', 'H', 'B', 'S', '\0'};
constexpr std::uint8_t kF32 = 1, kF64 = 2;

class Writer {
 public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    buf_.insert(buf_.end(), s.begin(), s.end());
  }
  void raw(const char* p, std::size_t n) { buf_.insert(buf_.end(), p, p + n); }
  const std::string& bytes() const { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  Reader(std::string bytes, std::string where) : buf_(std::move(bytes)), where_(std::move(where)) {}

  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(buf_[pos_++]);
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(u8()) << (8 * i);
    return v;
  }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == buf_.size(); }
  bool starts_with_magic() const {
    return buf_.size() >= kMagic.size() && std::memcmp(buf_.data(), kMagic.data(), kMagic.size()) == 0;
  }
  void skip(std::size_t n) {
    need(n);
    pos_ += n;
  }

 private:
  void need(std::size_t n) const {
    if (buf_.size() - pos_ < n) throw DataError(where_ + ": truncated checkpoint");
  }
  std::string buf_;
  std::string where_;
  std::size_t pos_ = 0;
};

}  // namespace

const CheckpointTensor* CheckpointFile::find(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t;
  return nullptr;
}

void write_checkpoint_file(const std::filesystem::path& path, const CheckpointFile& file) {
  Writer w;
  w.raw(kMagic.data(), kMagic.size());
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(file.meta.size()));
  for (const auto& [k, v] : file.meta) {
    w.str(k);
    w.str(v);
  }
  w.u32(static_cast<std::uint32_t>(file.tensors.size()));
  for (const auto& t : file.tensors) {
    w.str(t.name);
    w.u8(t.is_f64 ? kF64 : kF32);
    w.u32(static_cast<std::uint32_t>(t.shape.size()));
    std::size_t n = 1;
    for (int d : t.shape) {
      w.u64(static_cast<std::uint64_t>(d));
      n *= static_cast<std::size_t>(d);
    }
    if (t.is_f64) {
      if (t.f64.size() != n) throw std::invalid_argument("checkpoint tensor " + t.name + ": size mismatch");
      for (double v : t.f64) w.u64(std::bit_cast<std::uint64_t>(v));
    } else {
      if (t.f32.size() != n) throw std::invalid_argument("checkpoint tensor " + t.name + ": size mismatch");
      for (float v : t.f32) w.u32(std::bit_cast<std::uint32_t>(v));
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
  if (!out) throw DataError("failed writing checkpoint " + path.string());
}

CheckpointFile read_checkpoint_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Reader r(std::move(bytes), path.string());
  if (!r.starts_with_magic()) throw DataError("not a checkpoint");
  r.skip(kMagic.size());
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw DataError(path.string() + ": unsupported checkpoint version " + std::to_string(version));

  CheckpointFile file;
  const std::uint32_t n_meta = r.u32();
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    std::string k = r.str();
    file.meta[k] = r.str();
  }
  const std::uint32_t n_tensors = r.u32();
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    CheckpointTensor t;
    t.name = r.str();
    const std::uint8_t dtype = r.u8();
    if (dtype != kF32 && dtype != kF64) throw DataError(path.string() + ": corrupt tensor dtype");
    t.is_f64 = dtype == kF64;
    const std::uint32_t rank = r.u32();
    std::size_t n = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      const std::uint64_t dim = r.u64();
      if (dim > (1u << 30)) throw DataError(path.string() + ": corrupt tensor shape");
      t.shape.push_back(static_cast<int>(dim));
      n *= static_cast<std::size_t>(dim);
    }
    if (t.is_f64) {
      t.f64.resize(n);
      for (auto& v : t.f64) v = std::bit_cast<double>(r.u64());
    } else {
      t.f32.resize(n);
      for (auto& v : t.f32) v = std::bit_cast<float>(r.u32());
    }
    file.tensors.push_back(std::move(t));
  }
  if (!r.done()) throw DataError(path.string() + ": trailing bytes after checkpoint");
  return file;
}

}  // namespace gait
