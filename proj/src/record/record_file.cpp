#include "causalchips/record/record_file.hpp"

#include "causalchips/core/crc32c.hpp"
#include "causalchips/core/error.hpp"

#include <cstring>
#include <fstream>
#include <set>

namespace causalchips::record {

namespace {

constexpr char kMagic[4] = {'C', 'I', 'R', 'C'};
constexpr char kIndexMagic[4] = {'C', 'I', 'D', 'X'};

void put_u16(std::string& buf, uint16_t v) {
  buf.push_back(static_cast<char>(v & 0xFF));
  buf.push_back(static_cast<char>((v >> 8) & 0xFF));
}
void put_u32(std::string& buf, uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
void put_u64(std::string& buf, uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

uint16_t get_u16(const uint8_t* p) { return static_cast<uint16_t>(p[0] | (p[1] << 8)); }
uint32_t get_u32(const uint8_t* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}
uint64_t get_u64(const uint8_t* p) {
  uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

std::string encode_payload(const std::string& key, const ImageTensor& t) {
  if (key.empty()) fail(Errc::invalid_argument, "empty record key");
  if (key.size() > 0xFFFF) fail(Errc::invalid_argument, "key longer than 65535 bytes");
  check_tensor(t);
  std::string payload;
  payload.reserve(2 + key.size() + 2 + 4 * t.dims.size() + 4 * t.data.size());
  put_u16(payload, static_cast<uint16_t>(key.size()));
  payload.append(key);
  payload.push_back(0); // dtype float32
  payload.push_back(static_cast<char>(t.dims.size()));
  for (uint32_t d : t.dims) put_u32(payload, d);
  static_assert(sizeof(float) == 4);
  const size_t data_off = payload.size();
  payload.resize(payload.size() + 4 * t.data.size());
  // float32 raw bytes; assumes little-endian host (checked at file open elsewhere)
  std::memcpy(payload.data() + data_off, t.data.data(), 4 * t.data.size());
  return payload;
}

struct ParsedPayload {
  std::string key;
  ImageTensor tensor;
};

ParsedPayload decode_payload(const uint8_t* p, size_t len, uint64_t ordinal) {
  auto bad = [&](const std::string& what) {
    fail(Errc::corrupt_file, "record " + std::to_string(ordinal) + ": " + what);
  };
  if (len < 4) bad("payload too short");
  const uint16_t key_len = get_u16(p);
  size_t off = 2;
  if (off + key_len + 2 > len) bad("key overruns payload");
  ParsedPayload out;
  out.key.assign(reinterpret_cast<const char*>(p + off), key_len);
  off += key_len;
  const uint8_t dtype = p[off++];
  if (dtype != 0) bad("unknown dtype " + std::to_string(dtype));
  const uint8_t ndim = p[off++];
  if (ndim < 1 || ndim > 5) bad("bad ndim " + std::to_string(ndim));
  if (off + 4ull * ndim > len) bad("dims overrun payload");
  out.tensor.dims.resize(ndim);
  for (int i = 0; i < ndim; ++i, off += 4) out.tensor.dims[i] = get_u32(p + off);
  const size_t n = dims_product(out.tensor.dims);
  if (off + 4 * n != len) bad("data length mismatch");
  out.tensor.data.resize(n);
  std::memcpy(out.tensor.data.data(), p + off, 4 * n);
  return out;
}

std::vector<uint8_t> read_all(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::io_error, "cannot open " + path);
  in.seekg(0, std::ios::end);
  const auto size = in.tellg();
  in.seekg(0);
  std::vector<uint8_t> buf(static_cast<size_t>(size));
  if (size > 0) in.read(reinterpret_cast<char*>(buf.data()), size);
  if (!in) fail(Errc::io_error, "read failed: " + path);
  return buf;
}

struct Header {
  uint16_t version;
  uint64_t count;
};

Header parse_header(const std::vector<uint8_t>& buf, const std::string& path) {
  if (buf.size() < kHeaderBytes) fail(Errc::truncated_file, path + ": shorter than header");
  if (std::memcmp(buf.data(), kMagic, 4) != 0) fail(Errc::corrupt_file, path + ": bad magic");
  Header h;
  h.version = get_u16(buf.data() + 4);
  if (h.version != kFormatVersion)
    fail(Errc::unsupported_format, path + ": version " + std::to_string(h.version));
  h.count = get_u64(buf.data() + 8);
  return h;
}

// Footer parse; returns false when absent/garbled instead of throwing.
bool parse_footer(const std::vector<uint8_t>& buf, uint64_t& index_offset, std::string& why) {
  if (buf.size() < kHeaderBytes + kFooterBytes) {
    why = "file too short for footer";
    return false;
  }
  const uint8_t* f = buf.data() + buf.size() - kFooterBytes;
  if (std::memcmp(f + 8, kIndexMagic, 4) != 0) {
    why = "footer magic missing";
    return false;
  }
  index_offset = get_u64(f);
  if (index_offset < kHeaderBytes || index_offset > buf.size() - kFooterBytes) {
    why = "index offset out of range";
    return false;
  }
  const uint32_t want = get_u32(f + 12);
  const uint32_t got =
      crc32c(buf.data() + index_offset, buf.size() - kFooterBytes - index_offset);
  if (want != got) {
    why = "index crc mismatch";
    return false;
  }
  return true;
}

std::vector<std::pair<std::string, uint64_t>> parse_index(const std::vector<uint8_t>& buf,
                                                          uint64_t index_offset) {
  const uint8_t* p = buf.data() + index_offset;
  const uint8_t* end = buf.data() + buf.size() - kFooterBytes;
  if (p + 4 > end) fail(Errc::corrupt_file, "index section too short");
  const uint32_t n = get_u32(p);
  p += 4;
  std::vector<std::pair<std::string, uint64_t>> out;
  out.reserve(n);
  for (uint32_t i = 0; i < n; ++i) {
    if (p + 2 > end) fail(Errc::corrupt_file, "index entry overruns section");
    const uint16_t klen = get_u16(p);
    p += 2;
    if (p + klen + 8 > end) fail(Errc::corrupt_file, "index entry overruns section");
    std::string key(reinterpret_cast<const char*>(p), klen);
    p += klen;
    out.emplace_back(std::move(key), get_u64(p));
    p += 8;
  }
  return out;
}

} // namespace

struct RecordWriter::Impl {
  std::string path;
  std::ofstream out;
  std::set<std::string> seen;
  std::vector<std::pair<std::string, uint64_t>> index;
  uint64_t offset = 0;
  bool closed = false;
};

RecordWriter::RecordWriter(const std::string& path) : impl_(new Impl) {
  impl_->path = path;
  impl_->out.open(path, std::ios::binary | std::ios::trunc);
  if (!impl_->out) {
    delete impl_;
    impl_ = nullptr;
    fail(Errc::io_error, "cannot create " + path);
  }
  std::string header;
  header.append(kMagic, 4);
  put_u16(header, kFormatVersion);
  put_u16(header, 0); // flags
  put_u64(header, 0); // record count placeholder
  impl_->out.write(header.data(), static_cast<std::streamsize>(header.size()));
  impl_->offset = kHeaderBytes;
}

RecordWriter::~RecordWriter() {
  if (impl_ && !impl_->closed) {
    try {
      close();
    } catch (...) {
    }
  }
  delete impl_;
}

void RecordWriter::add(const std::string& key, const ImageTensor& tensor) {
  if (impl_->closed) fail(Errc::io_error, "writer already closed");
  if (!impl_->seen.insert(key).second) fail(Errc::duplicate_key, "key '" + key + "' written twice");
  const std::string payload = encode_payload(key, tensor);
  std::string frame;
  put_u64(frame, payload.size());
  put_u32(frame, crc32c(payload.data(), payload.size()));
  impl_->out.write(frame.data(), static_cast<std::streamsize>(frame.size()));
  impl_->out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!impl_->out) fail(Errc::io_error, "write failed: " + impl_->path);
  impl_->index.emplace_back(key, impl_->offset);
  impl_->offset += kRecordFrameBytes + payload.size();
}

RecordFile RecordWriter::close() {
  if (!impl_->closed) {
    if (impl_->index.empty()) fail(Errc::empty_input, "no records written");
    std::string index_section;
    put_u32(index_section, static_cast<uint32_t>(impl_->index.size()));
    for (const auto& [key, off] : impl_->index) {
      put_u16(index_section, static_cast<uint16_t>(key.size()));
      index_section.append(key);
      put_u64(index_section, off);
    }
    const uint64_t index_offset = impl_->offset;
    std::string tail;
    tail.reserve(index_section.size() + kFooterBytes);
    tail.append(index_section);
    put_u64(tail, index_offset);
    tail.append(kIndexMagic, 4);
    put_u32(tail, crc32c(index_section.data(), index_section.size()));
    impl_->out.write(tail.data(), static_cast<std::streamsize>(tail.size()));
    // rewrite the header count
    impl_->out.seekp(8);
    std::string count;
    put_u64(count, impl_->index.size());
    impl_->out.write(count.data(), 8);
    impl_->out.flush();
    if (!impl_->out) fail(Errc::io_error, "finalize failed: " + impl_->path);
    impl_->out.close();
    impl_->closed = true;
  }
  RecordFile rf;
  rf.path = impl_->path;
  rf.count = impl_->index.size();
  rf.index = impl_->index;
  return rf;
}

RecordFile write_records(const std::vector<std::pair<std::string, ImageTensor>>& entries,
                         const std::string& path) {
  if (entries.empty()) fail(Errc::empty_input, "no records to write");
  RecordWriter w(path);
  for (const auto& [key, tensor] : entries) w.add(key, tensor);
  return w.close();
}

void read_sequential(const std::string& path,
                     const std::function<void(const std::string&, const ImageTensor&)>& fn) {
  const auto buf = read_all(path);
  const Header h = parse_header(buf, path);
  size_t off = kHeaderBytes;
  for (uint64_t i = 0; i < h.count; ++i) {
    if (off + kRecordFrameBytes > buf.size())
      fail(Errc::truncated_file, path + ": record " + std::to_string(i) + " frame cut off");
    const uint64_t plen = get_u64(buf.data() + off);
    const uint32_t want = get_u32(buf.data() + off + 8);
    if (off + kRecordFrameBytes + plen > buf.size())
      fail(Errc::truncated_file, path + ": record " + std::to_string(i) + " payload cut off");
    const uint8_t* payload = buf.data() + off + kRecordFrameBytes;
    if (crc32c(payload, plen) != want)
      fail(Errc::crc_mismatch, path + ": record " + std::to_string(i));
    auto parsed = decode_payload(payload, plen, i);
    fn(parsed.key, parsed.tensor);
    off += kRecordFrameBytes + plen;
  }
}

RecordReader::RecordReader(const std::string& path) {
  const auto buf = read_all(path);
  const Header h = parse_header(buf, path);
  uint64_t index_offset = 0;
  std::string why;
  if (!parse_footer(buf, index_offset, why)) fail(Errc::index_missing, path + ": " + why);
  info_.path = path;
  info_.version = h.version;
  info_.count = h.count;
  info_.index = parse_index(buf, index_offset);
  for (const auto& [key, off] : info_.index) offsets_[key] = off;
}

std::vector<std::string> RecordReader::keys() const {
  std::vector<std::string> out;
  out.reserve(info_.index.size());
  for (const auto& [key, off] : info_.index) out.push_back(key);
  return out;
}

ImageTensor RecordReader::read(const std::string& key) const {
  const auto it = offsets_.find(key);
  if (it == offsets_.end()) fail(Errc::key_not_found, "key '" + key + "' not in index");
  std::ifstream in(info_.path, std::ios::binary);
  if (!in) fail(Errc::io_error, "cannot open " + info_.path);
  in.seekg(static_cast<std::streamoff>(it->second));
  uint8_t frame[kRecordFrameBytes];
  in.read(reinterpret_cast<char*>(frame), kRecordFrameBytes);
  if (!in) fail(Errc::truncated_file, info_.path + ": frame at offset " + std::to_string(it->second));
  const uint64_t plen = get_u64(frame);
  const uint32_t want = get_u32(frame + 8);
  std::vector<uint8_t> payload(plen);
  in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(plen));
  if (!in) fail(Errc::truncated_file, info_.path + ": payload for key '" + key + "'");
  if (crc32c(payload.data(), plen) != want)
    fail(Errc::crc_mismatch, info_.path + ": key '" + key + "'");
  auto parsed = decode_payload(payload.data(), plen, 0);
  if (parsed.key != key)
    fail(Errc::corrupt_file, info_.path + ": index points '" + key + "' at record '" + parsed.key + "'");
  return std::move(parsed.tensor);
}

std::vector<ImageTensor> RecordReader::read_by_keys(const std::vector<std::string>& keys) const {
  // repeated keys are read once and copied
  std::map<std::string, ImageTensor> cache;
  std::vector<ImageTensor> out;
  out.reserve(keys.size());
  for (const auto& key : keys) {
    auto it = cache.find(key);
    if (it == cache.end()) it = cache.emplace(key, read(key)).first;
    out.push_back(it->second);
  }
  return out;
}

ValidationReport validate(const std::string& path) {
  const auto buf = read_all(path);
  ValidationReport rep;
  rep.total_bytes = buf.size();
  auto add = [&](ValidationFinding::Kind kind, uint64_t ordinal, std::string detail) {
    rep.findings.push_back({kind, ordinal, std::move(detail)});
  };

  Header h;
  try {
    h = parse_header(buf, path);
  } catch (const Error& e) {
    add(ValidationFinding::Kind::truncated, 0, e.what());
    return rep;
  }

  uint64_t index_offset = 0;
  std::string why;
  rep.index_ok = parse_footer(buf, index_offset, why);
  if (!rep.index_ok) add(ValidationFinding::Kind::index_missing, 0, why);

  // walk records: up to the index section when the footer is intact,
  // otherwise up to the header count
  const size_t region_end = rep.index_ok ? index_offset : buf.size();
  size_t off = kHeaderBytes;
  struct Walked {
    std::string key;
    uint64_t offset;
    bool ok;
  };
  std::vector<Walked> walked;
  while (off < region_end && (rep.index_ok || walked.size() < h.count)) {
    const uint64_t ordinal = walked.size();
    if (off + kRecordFrameBytes > region_end) {
      add(ValidationFinding::Kind::bad_framing, ordinal, "frame cut off");
      break;
    }
    const uint64_t plen = get_u64(buf.data() + off);
    if (off + kRecordFrameBytes + plen > region_end) {
      add(ValidationFinding::Kind::bad_framing, ordinal,
          "payload length " + std::to_string(plen) + " overruns file");
      break;
    }
    const uint32_t want = get_u32(buf.data() + off + 8);
    const uint8_t* payload = buf.data() + off + kRecordFrameBytes;
    rep.records_seen++;
    if (crc32c(payload, plen) != want) {
      add(ValidationFinding::Kind::crc_mismatch, ordinal, "payload crc mismatch");
      walked.push_back({"", off, false});
    } else {
      try {
        auto parsed = decode_payload(payload, plen, ordinal);
        rep.records_ok++;
        walked.push_back({std::move(parsed.key), off, true});
      } catch (const Error& e) {
        add(ValidationFinding::Kind::bad_framing, ordinal, e.what());
        walked.push_back({"", off, false});
      }
    }
    off += kRecordFrameBytes + plen;
  }

  if (h.count != walked.size())
    add(ValidationFinding::Kind::count_mismatch, 0,
        "header count " + std::to_string(h.count) + ", walked " + std::to_string(walked.size()));

  if (rep.index_ok) {
    try {
      auto index = parse_index(buf, index_offset);
      if (index.size() != walked.size())
        add(ValidationFinding::Kind::index_bad_entry, 0,
            "index has " + std::to_string(index.size()) + " entries, file has " +
                std::to_string(walked.size()) + " records");
      const size_t n = std::min(index.size(), walked.size());
      for (size_t i = 0; i < n; ++i) {
        if (index[i].second != walked[i].offset)
          add(ValidationFinding::Kind::index_bad_entry, i, "offset mismatch for '" + index[i].first + "'");
        else if (walked[i].ok && index[i].first != walked[i].key)
          add(ValidationFinding::Kind::index_bad_entry, i, "key mismatch for '" + index[i].first + "'");
      }
    } catch (const Error& e) {
      add(ValidationFinding::Kind::index_bad_entry, 0, e.what());
    }
  }
  return rep;
}

} // namespace causalchips::record
