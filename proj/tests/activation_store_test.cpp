#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <limits>
#include <string>

#include "test_util.hpp"
#include "tomdecomp/activation_store.hpp"
#include "tomdecomp/taxonomy.hpp"

using namespace tomdecomp;

namespace {

ActivationDataset small_dataset(std::size_t n_records, std::uint32_t n_layers, std::uint32_t hidden_dim) {
  ActivationDataset ds;
  ds.n_layers = n_layers;
  ds.hidden_dim = hidden_dim;
  ds.source = "unit";
  std::mt19937_64 rng(11);
  std::normal_distribution<float> normal;
  for (std::size_t i = 0; i < n_records; ++i) {
    ActivationRecord r;
    r.id = "rec-" + std::to_string(i);
    r.label = i % 2 ? "noticing" : "reconsidering";
    r.category = i % 2 ? "Analytical" : "Metacognitive";
    r.split = i % 3 == 0 ? Split::val : Split::train;
    r.text_hash = fnv1a64(r.id) ^ (std::uint64_t{1} << 63);
    r.values.resize(std::size_t{n_layers} * hidden_dim);
    for (auto& v : r.values) v = normal(rng);
    ds.records.push_back(std::move(r));
  }
  return ds;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << bytes;
}

std::string error_of(const std::filesystem::path& p) {
  try {
    read_dataset(p);
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(ActivationStore, PayloadArithmeticTwoRecordsThirtyOneLayers) {
  testutil::TempDir dir("actv");
  const auto ds = small_dataset(2, 31, 4);
  const auto summary = write_dataset(ds, dir / "a.actv");
  // 2 records * 31 layers * 4 dims * 4 bytes of float32, after the fixed header.
  EXPECT_EQ(summary.bytes_written - kActvHeaderBytes, 992u);
  EXPECT_EQ(std::filesystem::file_size(dir / "a.actv"), 992u + kActvHeaderBytes);
  EXPECT_EQ(summary.n_records, 2u);
}

TEST(ActivationStore, HeaderFieldsAreLittleEndian) {
  testutil::TempDir dir("actv");
  write_dataset(small_dataset(3, 5, 7), dir / "h.actv");
  const auto bytes = slurp(dir / "h.actv");
  ASSERT_GE(bytes.size(), 20u);
  EXPECT_EQ(bytes.substr(0, 4), "ACTV");
  EXPECT_EQ(bytes[4], '\x01');
  EXPECT_EQ(bytes.substr(5, 3), std::string(3, '\0'));
  const auto u32 = [&](std::size_t off) {
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(bytes[off + i]);
    return v;
  };
  EXPECT_EQ(u32(8), 3u);
  EXPECT_EQ(u32(12), 5u);
  EXPECT_EQ(u32(16), 7u);
}

TEST(ActivationStore, RoundTripIsBitIdentical) {
  testutil::TempDir dir("actv");
  auto ds = small_dataset(17, 3, 9);
  ds.records[4].values[2] = -0.0f;
  ds.records[5].values[0] = std::numeric_limits<float>::denorm_min();
  ds.records[6].label.reset();
  ds.records[6].category.reset();
  ds.records[6].split = Split::none;
  write_dataset(ds, dir / "r.actv");
  const auto back = read_dataset(dir / "r.actv");
  EXPECT_EQ(back, ds);
  EXPECT_TRUE(std::signbit(back.records[4].values[2]));
}

TEST(ActivationStore, EmptyDatasetIsValid) {
  testutil::TempDir dir("actv");
  ActivationDataset ds;
  ds.n_layers = 31;
  ds.hidden_dim = 4;
  const auto s = write_dataset(ds, dir / "e.actv");
  EXPECT_EQ(s.bytes_written, kActvHeaderBytes);
  const auto back = read_dataset(dir / "e.actv");
  EXPECT_EQ(back.records.size(), 0u);
  EXPECT_EQ(back.n_layers, 31u);
}

TEST(ActivationStore, NonFiniteValueNamesRecord) {
  testutil::TempDir dir("actv");
  auto ds = small_dataset(3, 2, 2);
  ds.records[1].values[3] = std::numeric_limits<float>::quiet_NaN();
  try {
    write_dataset(ds, dir / "n.actv");
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("rec-1"), std::string::npos) << e.what();
  }
  ds.records[1].values[3] = std::numeric_limits<float>::infinity();
  EXPECT_THROW(write_dataset(ds, dir / "n.actv"), Error);
}

TEST(ActivationStore, DuplicateIdsAndShapeAreRejected) {
  auto ds = small_dataset(3, 2, 2);
  ds.records[2].id = ds.records[0].id;
  EXPECT_THROW(validate(ds), Error);
  ds = small_dataset(3, 2, 2);
  ds.records[1].values.pop_back();
  EXPECT_THROW(validate(ds), Error);
}

TEST(ActivationStore, BadMagic) {
  testutil::TempDir dir("actv");
  write_dataset(small_dataset(2, 2, 2), dir / "m.actv");
  auto bytes = slurp(dir / "m.actv");
  bytes[0] = 'X';
  spit(dir / "m.actv", bytes);
  EXPECT_NE(error_of(dir / "m.actv").find("bad magic"), std::string::npos);
}

TEST(ActivationStore, TruncatedPayloadByOneByte) {
  testutil::TempDir dir("actv");
  write_dataset(small_dataset(2, 2, 2), dir / "t.actv");
  auto bytes = slurp(dir / "t.actv");
  bytes.pop_back();
  spit(dir / "t.actv", bytes);
  EXPECT_NE(error_of(dir / "t.actv").find("truncated payload"), std::string::npos);
}

TEST(ActivationStore, TruncatedHeader) {
  testutil::TempDir dir("actv");
  write_dataset(small_dataset(2, 2, 2), dir / "t.actv");
  spit(dir / "t.actv", slurp(dir / "t.actv").substr(0, 10));
  EXPECT_NE(error_of(dir / "t.actv").find("truncated header"), std::string::npos);
}

TEST(ActivationStore, TrailingBytesAreACountMismatch) {
  testutil::TempDir dir("actv");
  write_dataset(small_dataset(2, 2, 2), dir / "c.actv");
  spit(dir / "c.actv", slurp(dir / "c.actv") + std::string(16, '\0'));
  EXPECT_NE(error_of(dir / "c.actv").find("header/record-count mismatch"), std::string::npos);
}

TEST(ActivationStore, SidecarLineCountMismatch) {
  testutil::TempDir dir("actv");
  write_dataset(small_dataset(3, 2, 2), dir / "s.actv");
  const auto meta = slurp(sidecar_path(dir / "s.actv"));
  spit(sidecar_path(dir / "s.actv"), meta.substr(0, meta.rfind('\n', meta.size() - 2) + 1));
  EXPECT_NE(error_of(dir / "s.actv").find("does not match header record count"), std::string::npos);
}

TEST(ActivationStore, UnsupportedVersion) {
  testutil::TempDir dir("actv");
  write_dataset(small_dataset(1, 1, 1), dir / "v.actv");
  auto bytes = slurp(dir / "v.actv");
  bytes[4] = '\x02';
  spit(dir / "v.actv", bytes);
  EXPECT_NE(error_of(dir / "v.actv").find("unsupported version"), std::string::npos);
}

TEST(ActivationStore, SidecarWithoutDatasetLineIsAccepted) {
  testutil::TempDir dir("actv");
  const auto ds = small_dataset(2, 1, 3);
  write_dataset(ds, dir / "x.actv");
  const auto meta = slurp(sidecar_path(dir / "x.actv"));
  spit(sidecar_path(dir / "x.actv"), meta.substr(meta.find('\n') + 1));
  const auto back = read_dataset(dir / "x.actv");
  EXPECT_EQ(back.records, ds.records);
}

TEST(ActivationStore, UnknownLabelRejectedAgainstTaxonomy) {
  auto ds = small_dataset(2, 1, 1);
  EXPECT_NO_THROW(validate_labels(ds, action_names(default_taxonomy())));
  ds.records[0].label = "juggling";
  EXPECT_THROW(validate_labels(ds, action_names(default_taxonomy())), Error);
}

TEST(SplitDataset, SevenHundredRecordsSplitEightyTwenty) {
  ActivationDataset ds;
  ds.n_layers = 1;
  ds.hidden_dim = 1;
  for (int i = 0; i < 700; ++i) {
    ActivationRecord r;
    r.id = "x" + std::to_string(i);
    r.label = "noticing";
    r.values = {0.0f};
    ds.records.push_back(r);
  }
  const auto out = split_dataset(ds, 0.8, 3);
  std::size_t train = 0, val = 0;
  for (const auto& r : out.records) (r.split == Split::train ? train : val)++;
  EXPECT_EQ(train, 560u);
  EXPECT_EQ(val, 140u);
}

TEST(SplitDataset, DeterministicAndStratified) {
  const auto ds = small_dataset(40, 1, 2);
  const auto a = split_dataset(ds, 0.75, 99), b = split_dataset(ds, 0.75, 99);
  EXPECT_EQ(a, b);
  std::map<std::string, std::size_t> train;
  for (const auto& r : a.records)
    if (r.split == Split::train) ++train[*r.label];
  EXPECT_EQ(train["noticing"], 15u);
  EXPECT_EQ(train["reconsidering"], 15u);
  const auto c = split_dataset(ds, 0.75, 100);
  EXPECT_NE(a, c);
}

TEST(SplitDataset, SingletonClassIsAnError) {
  auto ds = small_dataset(4, 1, 1);
  ds.records[3].label = "lonely";
  EXPECT_THROW(split_dataset(ds, 0.8, 1), Error);
  EXPECT_THROW(split_dataset(small_dataset(4, 1, 1), 1.0, 1), Error);
}
