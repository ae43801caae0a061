#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "causalchips/core/crc32c.hpp"
#include "causalchips/core/rng.hpp"
#include "causalchips/record/record_file.hpp"
#include "test_util.hpp"

#include <cstring>
#include <fstream>

using namespace causalchips;
using namespace causalchips::record;
using testutil::TempDir;
using testutil::error_code_of;

namespace {

ImageTensor random_tensor(Rng& rng) {
  const int ndim = 1 + static_cast<int>(rng.uniform_int(5));
  std::vector<uint32_t> dims(ndim);
  for (auto& d : dims) d = 1 + static_cast<uint32_t>(rng.uniform_int(16));
  ImageTensor t(dims);
  for (auto& v : t.data) v = static_cast<float>(rng.normal());
  return t;
}

std::vector<uint8_t> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::vector<uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void dump(const std::string& path, const std::vector<uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

uint64_t rd_u64(const uint8_t* p) {
  uint64_t v;
  std::memcpy(&v, p, 8);
  return v;
}
uint32_t rd_u32(const uint8_t* p) {
  uint32_t v;
  std::memcpy(&v, p, 4);
  return v;
}

} // namespace

TEST_CASE("crc32c known vectors") {
  // RFC 3720 test vector: 32 zero bytes
  std::vector<uint8_t> zeros(32, 0);
  CHECK(crc32c(zeros.data(), zeros.size()) == 0x8A9136AAu);
  const char* s = "123456789";
  CHECK(crc32c(s, 9) == 0xE3069283u);
}

TEST_CASE("write then read_sequential round-trips bit-exactly") {
  TempDir tmp("rec_roundtrip");
  Rng rng(42);
  std::vector<std::pair<std::string, ImageTensor>> entries;
  for (int i = 0; i < 50; ++i) entries.emplace_back("k" + std::to_string(i), random_tensor(rng));
  const RecordFile rf = write_records(entries, tmp.path("a.circ"));
  CHECK(rf.count == 50);

  size_t i = 0;
  read_sequential(tmp.path("a.circ"), [&](const std::string& key, const ImageTensor& t) {
    REQUIRE(i < entries.size());
    CHECK(key == entries[i].first);
    CHECK(t.dims == entries[i].second.dims);
    REQUIRE(t.data.size() == entries[i].second.data.size());
    CHECK(std::memcmp(t.data.data(), entries[i].second.data.data(), 4 * t.data.size()) == 0);
    ++i;
  });
  CHECK(i == 50);
}

TEST_CASE("read_by_keys honors request order and repeats") {
  TempDir tmp("rec_bykeys");
  ImageTensor t1({2, 2, 1}), t2({2, 2, 1});
  t1.data = {1, 2, 3, 4};
  t2.data = {5, 6, 7, 8};
  write_records({{"k1", t1}, {"k2", t2}}, tmp.path("a.circ"));

  RecordReader reader(tmp.path("a.circ"));
  const auto got = reader.read_by_keys({"k2", "k1", "k2"});
  REQUIRE(got.size() == 3);
  CHECK(got[0].data == t2.data);
  CHECK(got[1].data == t1.data);
  CHECK(got[2].data == t2.data);

  CHECK(error_code_of([&] { reader.read("nope"); }) == Errc::key_not_found);

  // all keys in file order equals the sequential payloads
  const auto all = reader.read_by_keys(reader.keys());
  size_t i = 0;
  read_sequential(tmp.path("a.circ"), [&](const std::string&, const ImageTensor& t) {
    CHECK(all[i].data == t.data);
    ++i;
  });
}

TEST_CASE("duplicate key and empty stream are rejected") {
  TempDir tmp("rec_errors");
  ImageTensor t({1});
  t.data = {1.0f};
  CHECK(error_code_of([&] { write_records({{"a", t}, {"a", t}}, tmp.path("dup.circ")); }) ==
        Errc::duplicate_key);
  CHECK(error_code_of([&] { write_records({}, tmp.path("empty.circ")); }) == Errc::empty_input);
}

TEST_CASE("golden two-record file matches the byte layout") {
  TempDir tmp("rec_golden");
  ImageTensor a({2, 2, 1});
  a.data = {1.0f, 2.0f, 3.0f, 4.0f};
  ImageTensor b({3});
  b.data = {5.0f, 6.0f, 7.0f};
  write_records({{"a", a}, {"bb", b}}, tmp.path("g.circ"));
  const auto bytes = slurp(tmp.path("g.circ"));

  // header
  REQUIRE(bytes.size() >= 16);
  CHECK(std::memcmp(bytes.data(), "CIRC", 4) == 0);
  CHECK(bytes[4] == 1);
  CHECK(bytes[5] == 0); // version 1 LE
  CHECK(bytes[6] == 0);
  CHECK(bytes[7] == 0); // flags
  CHECK(rd_u64(bytes.data() + 8) == 2);

  // record 0 at offset 16: payload = 2 + 1 + 1 + 1 + 12 + 16 = 33
  const uint64_t p0 = rd_u64(bytes.data() + 16);
  CHECK(p0 == 33);
  const uint8_t* pay0 = bytes.data() + 28;
  CHECK(rd_u32(bytes.data() + 24) == crc32c(pay0, p0));
  CHECK(pay0[0] == 1);
  CHECK(pay0[1] == 0);  // key_len
  CHECK(pay0[2] == 'a');
  CHECK(pay0[3] == 0); // dtype float32
  CHECK(pay0[4] == 3); // ndim
  CHECK(rd_u32(pay0 + 5) == 2);
  CHECK(rd_u32(pay0 + 9) == 2);
  CHECK(rd_u32(pay0 + 13) == 1);
  float v0;
  std::memcpy(&v0, pay0 + 17, 4);
  CHECK(v0 == 1.0f);

  // record 1 at 16 + 12 + 33 = 61: payload = 2 + 2 + 1 + 1 + 4 + 12 = 22
  const uint64_t off1 = 61;
  const uint64_t p1 = rd_u64(bytes.data() + off1);
  CHECK(p1 == 22);
  const uint8_t* pay1 = bytes.data() + off1 + 12;
  CHECK(pay1[0] == 2);
  CHECK(pay1[2] == 'b');
  CHECK(pay1[3] == 'b');

  // index section at 61 + 12 + 22 = 95:
  // entry_count u32 + (2+1+8) + (2+2+8) = 4 + 11 + 12 = 27 bytes
  const uint64_t index_offset = 95;
  CHECK(rd_u32(bytes.data() + index_offset) == 2);
  // footer trailer: last 16 bytes
  const uint8_t* foot = bytes.data() + bytes.size() - 16;
  CHECK(rd_u64(foot) == index_offset);
  CHECK(std::memcmp(foot + 8, "CIDX", 4) == 0);
  CHECK(rd_u32(foot + 12) == crc32c(bytes.data() + index_offset, 27));

  // exact file size: 16 + (12+33) + (12+22) + 27 + 16 = 138
  CHECK(bytes.size() == 138);

  // index entries point at the payload_len fields
  RecordReader reader(tmp.path("g.circ"));
  CHECK(reader.info().index[0].second == 16);
  CHECK(reader.info().index[1].second == 61);
}

TEST_CASE("validate passes on a fresh file and flags every payload byte flip") {
  TempDir tmp("rec_corrupt");
  ImageTensor a({2, 3});
  a.data = {1, 2, 3, 4, 5, 6};
  ImageTensor b({4});
  b.data = {9, 8, 7, 6};
  write_records({{"first", a}, {"second", b}}, tmp.path("c.circ"));
  const auto clean = slurp(tmp.path("c.circ"));
  CHECK(validate(tmp.path("c.circ")).all_ok());

  // payload regions: record0 at 16 (frame 12 + payload), record1 after it
  const uint64_t len0 = rd_u64(clean.data() + 16);
  const size_t pay0_lo = 28, pay0_hi = pay0_lo + len0;
  const size_t rec1 = pay0_hi;
  const uint64_t len1 = rd_u64(clean.data() + rec1);
  const size_t pay1_lo = rec1 + 12, pay1_hi = pay1_lo + len1;

  for (size_t pos = pay0_lo; pos < pay1_hi; ++pos) {
    if (pos >= pay0_hi && pos < pay1_lo) continue; // frame bytes, not payload
    for (uint8_t bit : {uint8_t{1}, uint8_t{0x80}}) {
      auto corrupted = clean;
      corrupted[pos] ^= bit;
      dump(tmp.path("c.circ"), corrupted);
      const auto rep = validate(tmp.path("c.circ"));
      size_t crc_findings = 0;
      for (const auto& f : rep.findings)
        if (f.kind == ValidationFinding::Kind::crc_mismatch) ++crc_findings;
      REQUIRE(crc_findings == 1);
      REQUIRE(rep.findings.size() == 1);
      const uint64_t want_ordinal = pos < pay0_hi ? 0 : 1;
      CHECK(rep.findings[0].record_ordinal == want_ordinal);
    }
  }
}

TEST_CASE("truncated footer loses the index but not the sequential scan") {
  TempDir tmp("rec_trunc");
  ImageTensor t({2, 2});
  t.data = {1, 2, 3, 4};
  write_records({{"x", t}, {"y", t}}, tmp.path("t.circ"));
  auto bytes = slurp(tmp.path("t.circ"));
  bytes.resize(bytes.size() - 7); // cut into the footer trailer
  dump(tmp.path("t.circ"), bytes);

  const auto rep = validate(tmp.path("t.circ"));
  bool index_missing = false;
  for (const auto& f : rep.findings)
    if (f.kind == ValidationFinding::Kind::index_missing) index_missing = true;
  CHECK(index_missing);
  CHECK(rep.records_ok == 2);

  size_t seen = 0;
  read_sequential(tmp.path("t.circ"), [&](const std::string&, const ImageTensor&) { ++seen; });
  CHECK(seen == 2);

  CHECK(error_code_of([&] { RecordReader r(tmp.path("t.circ")); }) == Errc::index_missing);
}

TEST_CASE("property: random tensors round-trip through write/read_by_keys") {
  TempDir tmp("rec_prop");
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 1 + static_cast<int>(rng.uniform_int(12));
    std::vector<std::pair<std::string, ImageTensor>> entries;
    for (int i = 0; i < n; ++i)
      entries.emplace_back("key_" + std::to_string(trial) + "_" + std::to_string(i), random_tensor(rng));
    write_records(entries, tmp.path("p.circ"));
    RecordReader reader(tmp.path("p.circ"));
    for (const auto& [key, tensor] : entries) {
      const ImageTensor got = reader.read(key);
      CHECK(got.dims == tensor.dims);
      CHECK(std::memcmp(got.data.data(), tensor.data.data(), 4 * tensor.data.size()) == 0);
    }
  }
}

TEST_CASE("sequential read reports crc mismatch with the record ordinal") {
  TempDir tmp("rec_seqcrc");
  ImageTensor t({2});
  t.data = {1, 2};
  write_records({{"a", t}, {"b", t}}, tmp.path("s.circ"));
  auto bytes = slurp(tmp.path("s.circ"));
  const uint64_t len0 = rd_u64(bytes.data() + 16);
  bytes[28 + len0 + 12 + 3] ^= 0xFF; // inside record 1 payload
  dump(tmp.path("s.circ"), bytes);
  try {
    read_sequential(tmp.path("s.circ"), [](const std::string&, const ImageTensor&) {});
    FAIL("expected CrcMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::crc_mismatch);
    CHECK(std::string(e.what()).find("record 1") != std::string::npos);
  }
}
