#pragma once

#include "causalchips/core/tensor.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace causalchips::record {

// File layout (all integers little-endian):
//   header (16 B): magic "CIRC", version u16, flags u16, record_count u64
//   record: payload_len u64, crc32c u32 of payload, payload =
//     [key_len u16, key bytes, dtype u8 (0 = float32), ndim u8,
//      dims ndim x u32, raw float32 data row-major]
//   index section: entry_count u32, entries = [key_len u16, key,
//     offset u64 (absolute, to the payload_len field)]
//   footer trailer (16 B): index_offset u64, magic "CIDX", crc32c u32 of the
//     index section
// The record_count field is a placeholder rewritten when the writer closes.

constexpr uint16_t kFormatVersion = 1;
constexpr size_t kHeaderBytes = 16;
constexpr size_t kFooterBytes = 16;
constexpr size_t kRecordFrameBytes = 12; // payload_len + crc

/// Handle describing a closed record file.
struct RecordFile {
  std::string path;
  uint16_t version = kFormatVersion;
  uint64_t count = 0;
  std::vector<std::pair<std::string, uint64_t>> index; // key -> absolute offset, write order
};

class RecordWriter {
public:
  explicit RecordWriter(const std::string& path);
  ~RecordWriter();
  RecordWriter(const RecordWriter&) = delete;
  RecordWriter& operator=(const RecordWriter&) = delete;

  void add(const std::string& key, const ImageTensor& tensor);
  /// Writes index + footer, rewrites the header count. Idempotent.
  RecordFile close();

private:
  struct Impl;
  Impl* impl_;
};

/// Writes the whole stream and closes. Errors: DuplicateKey, EmptyInput, IoError.
RecordFile write_records(const std::vector<std::pair<std::string, ImageTensor>>& entries,
                         const std::string& path);

/// Streams records in write order, verifying each CRC.
void read_sequential(const std::string& path,
                     const std::function<void(const std::string&, const ImageTensor&)>& fn);

/// Random access through the footer index.
class RecordReader {
public:
  explicit RecordReader(const std::string& path); // errors: IndexMissing, CorruptFile
  const RecordFile& info() const { return info_; }
  std::vector<std::string> keys() const; // in write order
  bool contains(const std::string& key) const { return offsets_.count(key) > 0; }
  ImageTensor read(const std::string& key) const; // KeyNotFound, CrcMismatch
  std::vector<ImageTensor> read_by_keys(const std::vector<std::string>& keys) const;

private:
  RecordFile info_;
  std::map<std::string, uint64_t> offsets_;
};

struct ValidationFinding {
  enum class Kind { crc_mismatch, bad_framing, truncated, index_missing, index_bad_entry, count_mismatch };
  Kind kind;
  uint64_t record_ordinal = 0; // meaningful for per-record findings
  std::string detail;
};

struct ValidationReport {
  uint64_t total_bytes = 0;
  uint64_t records_seen = 0;
  uint64_t records_ok = 0;
  bool index_ok = false;
  std::vector<ValidationFinding> findings;
  bool all_ok() const { return findings.empty(); }
};

/// Never throws for content problems; findings carry them. IoError if unreadable.
ValidationReport validate(const std::string& path);

} // namespace causalchips::record
