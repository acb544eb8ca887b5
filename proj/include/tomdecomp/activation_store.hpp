#pragma once

// ACTV1 activation datasets.
//
// Binary file: 20-byte header ("ACTV", version 0x01, 3 zero bytes, then u32
// n_records, n_layers, hidden_dim, all little-endian) followed by n_records
// records of n_layers * hidden_dim float32 values, layer-major.
//
// Sidecar `<stem>.meta.jsonl`: an optional leading dataset line
// {"dataset":"ACTV1","source":...} and then one JSON object per record, in
// payload order: {id, label, category, split, text_hash}.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "tomdecomp/binary_io.hpp"
#include "tomdecomp/core.hpp"

namespace tomdecomp {

enum class Split { train, val, test, none };

inline const char* to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
    case Split::none: return "none";
  }
  return "none";
}

inline Split parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  if (s == "none") return Split::none;
  throw Error("activation-store", "unknown split \"" + std::string(s) + "\"");
}

struct ActivationRecord {
  std::string id;
  std::vector<float> values;  // n_layers * hidden_dim, layer-major
  std::optional<std::string> label;
  std::optional<std::string> category;
  Split split = Split::none;
  std::uint64_t text_hash = 0;

  std::span<const float> layer(std::size_t l, std::size_t hidden_dim) const {
    return {values.data() + l * hidden_dim, hidden_dim};
  }

  bool operator==(const ActivationRecord& o) const {
    // Bit-level comparison so NaN payloads and signed zeros are distinguished.
    return id == o.id && label == o.label && category == o.category && split == o.split &&
           text_hash == o.text_hash && values.size() == o.values.size() &&
           std::memcmp(values.data(), o.values.data(), values.size() * sizeof(float)) == 0;
  }
};

struct ActivationDataset {
  std::uint32_t n_layers = 0;
  std::uint32_t hidden_dim = 0;
  std::vector<ActivationRecord> records;
  std::string source;

  bool operator==(const ActivationDataset&) const = default;

  /// Copies one layer of one record into 64-bit precision.
  Vector layer_vector(std::size_t record, std::size_t layer) const {
    const auto src = records[record].layer(layer, hidden_dim);
    return Vector(src.begin(), src.end());
  }
};

struct WriteSummary {
  std::uint64_t bytes_written = 0;  // tensor file only
  std::uint64_t sidecar_bytes = 0;
  std::size_t n_records = 0;
};

inline constexpr std::size_t kActvHeaderBytes = 20;

inline std::filesystem::path sidecar_path(const std::filesystem::path& path) {
  auto p = path;
  p.replace_extension(".meta.jsonl");
  return p;
}

/// Checks shape, id uniqueness and finiteness; throws naming the first offending record.
inline void validate(const ActivationDataset& ds) {
  const std::size_t per_record = std::size_t{ds.n_layers} * ds.hidden_dim;
  std::set<std::string_view> ids;
  for (const auto& r : ds.records) {
    if (!ids.insert(r.id).second) throw Error("activation-store", "duplicate record_id " + r.id);
    if (r.values.size() != per_record)
      throw Error("activation-store", "record " + r.id + " has " + std::to_string(r.values.size()) +
                                          " values, expected " + std::to_string(per_record));
    for (float v : r.values)
      if (!std::isfinite(v)) throw Error("activation-store", "non-finite value in record " + r.id);
  }
}

/// Rejects labels that are not in `action_names`.
inline void validate_labels(const ActivationDataset& ds, const std::set<std::string>& action_names) {
  for (const auto& r : ds.records)
    if (r.label && !action_names.contains(*r.label))
      throw Error("activation-store", "record " + r.id + " has unknown label " + *r.label);
}

inline std::string hash_to_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline std::uint64_t hash_from_hex(const std::string& s) {
  if (s.empty() || s.size() > 16 || s.find_first_not_of("0123456789abcdefABCDEF") != std::string::npos)
    throw Error("activation-store", "bad text_hash \"" + s + "\"");
  return std::stoull(s, nullptr, 16);
}

inline WriteSummary write_dataset(const ActivationDataset& ds, const std::filesystem::path& path) {
  validate(ds);
  std::string bin;
  const std::size_t per_record = std::size_t{ds.n_layers} * ds.hidden_dim;
  bin.reserve(kActvHeaderBytes + ds.records.size() * per_record * 4);
  bin.append("ACTV", 4);
  bin.push_back('\x01');
  bin.append(3, '\0');
  binio::put_u32(bin, static_cast<std::uint32_t>(ds.records.size()));
  binio::put_u32(bin, ds.n_layers);
  binio::put_u32(bin, ds.hidden_dim);
  for (const auto& r : ds.records)
    for (float v : r.values) binio::put_f32(bin, v);

  std::string meta;
  meta += nlohmann::json{{"dataset", "ACTV1"}, {"source", ds.source}}.dump() + "\n";
  for (const auto& r : ds.records) {
    nlohmann::json j;
    j["id"] = r.id;
    j["label"] = r.label ? nlohmann::json(*r.label) : nlohmann::json(nullptr);
    j["category"] = r.category ? nlohmann::json(*r.category) : nlohmann::json(nullptr);
    j["split"] = to_string(r.split);
    j["text_hash"] = hash_to_hex(r.text_hash);
    meta += j.dump() + "\n";
  }
  binio::write_file(path, bin, "activation-store");
  binio::write_file(sidecar_path(path), meta, "activation-store");
  return {bin.size(), meta.size(), ds.records.size()};
}

inline ActivationDataset read_dataset(const std::filesystem::path& path) {
  const std::string bin = binio::read_file(path, "activation-store");
  if (bin.size() < 4 || bin.compare(0, 4, "ACTV") != 0)
    throw Error("activation-store", "bad magic in " + path.string());
  if (bin.size() < kActvHeaderBytes) throw Error("activation-store", "truncated header in " + path.string());
  const auto* p = reinterpret_cast<const unsigned char*>(bin.data());
  if (p[4] != 0x01) throw Error("activation-store", "unsupported version " + std::to_string(p[4]));

  ActivationDataset ds;
  const std::uint32_t n_records = binio::get_u32(p + 8);
  ds.n_layers = binio::get_u32(p + 12);
  ds.hidden_dim = binio::get_u32(p + 16);
  const std::size_t per_record = std::size_t{ds.n_layers} * ds.hidden_dim;
  const std::size_t expected = kActvHeaderBytes + std::size_t{n_records} * per_record * 4;
  if (bin.size() < expected)
    throw Error("activation-store", "truncated payload in " + path.string() + " (" + std::to_string(bin.size()) +
                                        " bytes, header implies " + std::to_string(expected) + ")");
  if (bin.size() > expected)
    throw Error("activation-store", "header/record-count mismatch in " + path.string() + " (" +
                                        std::to_string(bin.size() - expected) + " trailing bytes)");

  std::ifstream meta_in(sidecar_path(path));
  if (!meta_in) throw Error("activation-store", "cannot open " + sidecar_path(path).string());
  std::vector<nlohmann::json> lines;
  std::string line;
  while (std::getline(meta_in, line)) {
    if (line.empty()) continue;
    try {
      lines.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw Error("activation-store", "malformed metadata line " + std::to_string(lines.size() + 1) + ": " + e.what());
    }
  }
  std::size_t first = 0;
  if (!lines.empty() && lines.front().contains("dataset")) {
    ds.source = lines.front().value("source", "");
    first = 1;
  }
  if (lines.size() - first != n_records)
    throw Error("activation-store", "metadata line count " + std::to_string(lines.size() - first) +
                                        " does not match header record count " + std::to_string(n_records));

  ds.records.resize(n_records);
  const unsigned char* payload = p + kActvHeaderBytes;
  for (std::size_t i = 0; i < n_records; ++i) {
    auto& r = ds.records[i];
    const auto& j = lines[first + i];
    try {
      r.id = j.at("id").get<std::string>();
      if (j.contains("label") && !j["label"].is_null()) r.label = j["label"].get<std::string>();
      if (j.contains("category") && !j["category"].is_null()) r.category = j["category"].get<std::string>();
      r.split = parse_split(j.value("split", "none"));
      r.text_hash = hash_from_hex(j.at("text_hash").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
      throw Error("activation-store", "metadata record " + std::to_string(i) + ": " + e.what());
    }
    r.values.resize(per_record);
    const unsigned char* src = payload + i * per_record * 4;
    for (std::size_t k = 0; k < per_record; ++k) r.values[k] = binio::get_f32(src + 4 * k);
  }
  validate(ds);
  return ds;
}

/// Stratified train/val assignment. Within each label class the records are
/// ordered by a seeded hash of their id; the first floor(train_fraction * size)
/// go to train, the rest to val. Unlabeled records get Split::none.
inline ActivationDataset split_dataset(ActivationDataset ds, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw Error("activation-store", "train_fraction must lie in (0,1)");
  std::map<std::string, std::vector<std::size_t>> classes;
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    auto& r = ds.records[i];
    if (r.label)
      classes[*r.label].push_back(i);
    else
      r.split = Split::none;
  }
  for (auto& [label, members] : classes) {
    if (members.size() < 2)
      throw Error("activation-store", "class " + label + " has " + std::to_string(members.size()) +
                                          " record(s); at least 2 are needed to split");
    auto key = [&](std::size_t i) { return mix64(fnv1a64(ds.records[i].id) ^ seed); };
    std::sort(members.begin(), members.end(), [&](std::size_t a, std::size_t b) {
      const auto ka = key(a), kb = key(b);
      return ka != kb ? ka < kb : ds.records[a].id < ds.records[b].id;
    });
    const auto n_train = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(members.size())));
    for (std::size_t k = 0; k < members.size(); ++k)
      ds.records[members[k]].split = k < n_train ? Split::train : Split::val;
  }
  return ds;
}

}  // namespace tomdecomp
