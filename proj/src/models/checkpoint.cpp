#include "qkd/models/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <unordered_map>

#include "qkd/errors.hpp"
#include "qkd/signal/audio.hpp"

namespace qkd {

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint payloads are written in native little-endian order");

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::span<const char> bytes) : bytes_(bytes) {}

  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::span<const char> take(std::size_t n, const char* what) {
    need(n, what);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n, const char* what) {
    if (pos_ + n > bytes_.size()) {
      throw FormatError(std::string("checkpoint truncated while reading ") + what);
    }
  }

  std::span<const char> bytes_;
  std::size_t pos_ = 0;
};

std::uint32_t crc_of(std::span<const char> bytes) {
  return static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size())));
}

}  // namespace

std::string encode_checkpoint(const std::vector<CheckpointRecord>& records) {
  std::string out = "RDKD";
  put<std::uint16_t>(out, kCheckpointVersion);
  for (const auto& r : records) {
    if (r.name.size() > 0xffff) throw FormatError("checkpoint record name too long");
    if (r.shape.size() > 0xff) throw FormatError("checkpoint record rank too large");
    if (numel(r.shape) != r.values.size()) {
      throw ShapeError("checkpoint record '" + r.name + "' shape/value mismatch");
    }
    put<std::uint16_t>(out, static_cast<std::uint16_t>(r.name.size()));
    out += r.name;
    put<std::uint8_t>(out, static_cast<std::uint8_t>(r.dtype));
    put<std::uint8_t>(out, static_cast<std::uint8_t>(r.shape.size()));
    for (auto d : r.shape) put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    for (double v : r.values) {
      if (r.dtype == DType::kF32) {
        put<float>(out, static_cast<float>(v));
      } else {
        put<double>(out, v);
      }
    }
  }
  put<std::uint32_t>(out, crc_of(out));
  return out;
}

std::vector<CheckpointRecord> decode_checkpoint(std::span<const char> bytes) {
  if (bytes.size() < 10 || std::memcmp(bytes.data(), "RDKD", 4) != 0) {
    throw FormatError("not an RDKD checkpoint (bad magic)");
  }
  const auto body = bytes.first(bytes.size() - 4);
  std::uint32_t stored;
  std::memcpy(&stored, bytes.data() + body.size(), 4);
  if (crc_of(body) != stored) throw FormatError("checkpoint CRC32 mismatch");
  Reader in(body.subspan(4));
  const auto version = in.get<std::uint16_t>("version");
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  std::vector<CheckpointRecord> records;
  while (!in.done()) {
    CheckpointRecord r;
    const auto len = in.get<std::uint16_t>("name length");
    const auto name = in.take(len, "name");
    r.name.assign(name.begin(), name.end());
    const auto dtype = in.get<std::uint8_t>("dtype");
    if (dtype > 1) throw FormatError("record '" + r.name + "': unknown dtype " + std::to_string(dtype));
    r.dtype = static_cast<DType>(dtype);
    const auto rank = in.get<std::uint8_t>("rank");
    for (int i = 0; i < rank; ++i) r.shape.push_back(in.get<std::uint32_t>("dims"));
    const std::size_t n = numel(r.shape);
    r.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      r.values[i] = r.dtype == DType::kF32 ? static_cast<double>(in.get<float>("payload"))
                                           : in.get<double>("payload");
    }
    records.push_back(std::move(r));
  }
  return records;
}

void write_checkpoint(const std::filesystem::path& path,
                      const std::vector<CheckpointRecord>& records) {
  const auto bytes = encode_checkpoint(records);
  write_file_atomic(path, std::span<const char>(bytes.data(), bytes.size()));
}

std::vector<CheckpointRecord> read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(path.string() + ": cannot open checkpoint");
  const std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_checkpoint(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::vector<CheckpointRecord> to_records(const nn::ParamList& params, DType dtype) {
  std::vector<CheckpointRecord> out;
  out.reserve(params.size());
  for (const auto& p : params) {
    out.push_back({p.name, dtype, p.tensor.shape(),
                   std::vector<double>(p.tensor.values().begin(), p.tensor.values().end())});
  }
  return out;
}

void load_params(const nn::ParamList& params, const std::vector<CheckpointRecord>& records) {
  std::unordered_map<std::string, const CheckpointRecord*> by_name;
  for (const auto& r : records) by_name[r.name] = &r;
  for (const auto& p : params) {
    const auto it = by_name.find(p.name);
    if (it == by_name.end()) throw FormatError("checkpoint lacks parameter '" + p.name + "'");
    const auto& r = *it->second;
    if (r.shape != p.tensor.shape()) {
      throw FormatError("checkpoint parameter '" + p.name + "' has shape " + to_string(r.shape) +
                        ", model expects " + to_string(p.tensor.shape()));
    }
    Tensor t = p.tensor;
    std::copy(r.values.begin(), r.values.end(), t.mutable_values().begin());
  }
}

}  // namespace qkd
