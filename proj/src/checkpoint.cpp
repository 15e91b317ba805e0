#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "masd/io.hpp"

namespace masd {
namespace {

constexpr char kMagic[8] = {'M', 'A', 'S', 'D', 'C', 'K', 'P', 'T'};
constexpr char kTrailer[8] = {'M', 'A', 'S', 'D', 'E', 'N', 'D', '\0'};

template <class T>
void put_le(std::string& out, T value) {
  static_assert(std::is_unsigned_v<T>);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<char>((value >> (8 * i)) & 0xFF));
  }
}

class Reader {
 public:
  explicit Reader(std::string data) : data_(std::move(data)) {}

  template <class T>
  T get() {
    need(sizeof(T));
    T value = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      value |= static_cast<T>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    return value;
  }

  std::string bytes(std::size_t n) {
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool at_end() const { return pos_ == data_.size(); }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw CheckpointError("corrupt checkpoint: truncated");
  }
  std::string data_;
  std::size_t pos_ = 0;
};

}  // namespace

bool NamedArray::operator==(const NamedArray& other) const {
  if (dtype != other.dtype || rows != other.rows || cols != other.cols) return false;
  if (dtype == DType::kU64) return u64 == other.u64;
  if (f64.size() != other.f64.size()) return false;
  // Bitwise comparison so that round-trip checks are exact, NaN payloads included.
  return std::memcmp(f64.data(), other.f64.data(), f64.size() * sizeof(double)) == 0;
}

bool Checkpoint::operator==(const Checkpoint& other) const {
  return version == other.version && arrays == other.arrays;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  std::string buf(kMagic, sizeof kMagic);
  put_le<std::uint32_t>(buf, checkpoint.version);
  put_le<std::uint64_t>(buf, checkpoint.arrays.size());
  for (const auto& [name, arr] : checkpoint.arrays) {
    const std::uint64_t n = arr.rows * arr.cols;
    const std::size_t stored = arr.dtype == NamedArray::DType::kF64 ? arr.f64.size() : arr.u64.size();
    if (stored != n) throw CheckpointError("array '" + name + "' has inconsistent shape");
    put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(name.size()));
    buf += name;
    buf.push_back(static_cast<char>(arr.dtype));
    put_le<std::uint64_t>(buf, arr.rows);
    put_le<std::uint64_t>(buf, arr.cols);
    for (std::uint64_t i = 0; i < n; ++i) {
      put_le<std::uint64_t>(buf, arr.dtype == NamedArray::DType::kF64
                                     ? std::bit_cast<std::uint64_t>(arr.f64[i])
                                     : arr.u64[i]);
    }
  }
  buf.append(kTrailer, sizeof kTrailer);

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write " + tmp.string());
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw CheckpointError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  Reader r(std::string(std::istreambuf_iterator<char>(in), {}));
  if (r.bytes(sizeof kMagic) != std::string(kMagic, sizeof kMagic)) {
    throw CheckpointError("corrupt checkpoint: bad magic");
  }
  Checkpoint ck;
  ck.version = r.get<std::uint32_t>();
  if (ck.version != kCheckpointVersion) {
    throw CheckpointError("checkpoint version " + std::to_string(ck.version) +
                          " is not supported (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  const auto count = r.get<std::uint64_t>();
  for (std::uint64_t a = 0; a < count; ++a) {
    const auto name_len = r.get<std::uint32_t>();
    std::string name = r.bytes(name_len);
    NamedArray arr;
    const auto dtype = r.get<std::uint8_t>();
    if (dtype != 'd' && dtype != 'u') throw CheckpointError("corrupt checkpoint: bad dtype");
    arr.dtype = static_cast<NamedArray::DType>(dtype);
    arr.rows = r.get<std::uint64_t>();
    arr.cols = r.get<std::uint64_t>();
    const std::uint64_t n = arr.rows * arr.cols;
    if ((arr.cols != 0 && n / arr.cols != arr.rows) || n > r.remaining() / 8) {
      throw CheckpointError("corrupt checkpoint: truncated array '" + name + "'");
    }
    if (arr.dtype == NamedArray::DType::kF64) {
      arr.f64.reserve(n);
      for (std::uint64_t i = 0; i < n; ++i) arr.f64.push_back(std::bit_cast<double>(r.get<std::uint64_t>()));
    } else {
      arr.u64.reserve(n);
      for (std::uint64_t i = 0; i < n; ++i) arr.u64.push_back(r.get<std::uint64_t>());
    }
    ck.arrays.emplace(std::move(name), std::move(arr));
  }
  if (r.bytes(sizeof kTrailer) != std::string(kTrailer, sizeof kTrailer) || !r.at_end()) {
    throw CheckpointError("corrupt checkpoint: bad trailer");
  }
  return ck;
}

}  // namespace masd
