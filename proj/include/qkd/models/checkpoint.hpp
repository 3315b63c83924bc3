#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "qkd/tensor/nn.hpp"

namespace qkd {

inline constexpr std::uint16_t kCheckpointVersion = 1;

enum class DType : std::uint8_t { kF32 = 0, kF64 = 1 };

struct CheckpointRecord {
  std::string name;
  DType dtype = DType::kF64;
  Shape shape;
  std::vector<double> values;
};

/// "RDKD", u16 version, then per record: u16 name length, name bytes,
/// u8 dtype, u8 rank, u32 dims, little-endian payload; trailing CRC32 of
/// everything before it.
std::string encode_checkpoint(const std::vector<CheckpointRecord>& records);
/// Throws FormatError for a bad magic, unknown version or dtype, a
/// truncated record or a CRC mismatch.
std::vector<CheckpointRecord> decode_checkpoint(std::span<const char> bytes);

void write_checkpoint(const std::filesystem::path& path,
                      const std::vector<CheckpointRecord>& records);
std::vector<CheckpointRecord> read_checkpoint(const std::filesystem::path& path);

std::vector<CheckpointRecord> to_records(const nn::ParamList& params, DType dtype);

/// Copies record values into the named parameters. Every parameter must be
/// present with a matching shape (FormatError otherwise); extra records are
/// ignored. f32 records load at f32 precision.
void load_params(const nn::ParamList& params, const std::vector<CheckpointRecord>& records);

}  // namespace qkd
