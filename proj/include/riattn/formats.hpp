// Copyright 2026 The riattn Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// On-disk formats. All integers and floats are little-endian.
//
// Feature file (.riaf)
//   "RIAF" | u16 version=1 | u32 h | u32 w | u32 f | f32 x h*w*f (row, col, channel)
//
// Checkpoint (.riac)
//   "RIAC" | u16 version=1
//   | u32 h | u32 w | u32 f | u32 d | u32 V | u32 T_max | u8 gate_enabled | u8 float_bytes (4|8)
//   | u32 block_count
//   | per block: u32 name_len | name | u32 rank | u32 dims[rank] | float_bytes x prod(dims)
//   | u32 crc32 of every preceding byte
//
// Vocabulary: one token per line, line i holds id i; lines 0-3 are the specials.
// Annotations: JSON lines {"id": str, "reasons": [canonical strings], "image_path"?: str}.
// Masks sidecar: {"h", "w", "scenes": {id: {"<class>": [cell, ...]}}}.
// Trace: {"h", "w", "tokens": [id], "words": [str], "maps": [[real]]}.

#pragma once

#include <zlib.h>

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "riattn/decoder.hpp"
#include "riattn/error.hpp"
#include "riattn/evaluation.hpp"
#include "riattn/synthetic.hpp"
#include "riattn/tokenizer.hpp"
#include "riattn/training.hpp"

namespace riattn {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

inline constexpr char kFeatureMagic[4] = {'R', 'I', 'A', 'F'};
inline constexpr char kCheckpointMagic[4] = {'R', 'I', 'A', 'C'};
inline constexpr std::uint16_t kFeatureVersion = 1;
inline constexpr std::uint16_t kCheckpointVersion = 1;

// ---------------------------------------------------------------------------
// Byte plumbing

namespace detail {

class ByteWriter {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const unsigned char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  template <class UInt>
  void uint(UInt v) {
    for (std::size_t i = 0; i < sizeof(UInt); ++i)
      buf_.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
  }
  void f32(float v) { uint(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { uint(std::bit_cast<std::uint64_t>(v)); }

  const std::vector<unsigned char>& data() const { return buf_; }
  std::vector<unsigned char>& data() { return buf_; }

 private:
  std::vector<unsigned char> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const unsigned char> data) : data_(data) {}

  std::span<const unsigned char> take(std::size_t n) {
    if (pos_ + n > data_.size() || pos_ + n < pos_)
      fail(Errc::TruncatedPayload, "need " + std::to_string(n) + " bytes at offset " +
                                       std::to_string(pos_) + ", file has " +
                                       std::to_string(data_.size()));
    auto s = data_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  template <class UInt>
  UInt uint() {
    auto s = take(sizeof(UInt));
    UInt v = 0;
    for (std::size_t i = 0; i < sizeof(UInt); ++i) v |= static_cast<UInt>(s[i]) << (8 * i);
    return v;
  }
  float f32() { return std::bit_cast<float>(uint<std::uint32_t>()); }
  double f64() { return std::bit_cast<double>(uint<std::uint64_t>()); }

  std::size_t remaining() const { return data_.size() - pos_; }
  std::size_t position() const { return pos_; }

 private:
  std::span<const unsigned char> data_;
  std::size_t pos_ = 0;
};

inline std::uint32_t crc32_of(std::span<const unsigned char> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  return static_cast<std::uint32_t>(::crc32(crc, bytes.data(), static_cast<uInt>(bytes.size())));
}

}  // namespace detail

inline std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::IoError, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::string read_text(const std::filesystem::path& path) {
  auto bytes = read_file(path);
  return {bytes.begin(), bytes.end()};
}

/// Writes to a sibling temp file and renames it over `path`.
inline void write_file_atomic(const std::filesystem::path& path, std::span<const unsigned char> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(Errc::IoError, "cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(Errc::IoError, "short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail(Errc::IoError, "cannot rename " + tmp.string() + ": " + ec.message());
}

inline void write_text_atomic(const std::filesystem::path& path, std::string_view text) {
  write_file_atomic(path, std::span(reinterpret_cast<const unsigned char*>(text.data()), text.size()));
}

// ---------------------------------------------------------------------------
// Feature files

inline std::vector<unsigned char> encode_feature_map(const FeatureMap& map) {
  if (map.h == 0 || map.w == 0 || map.f == 0 || map.values.size() != map.h * map.w * map.f)
    fail(Errc::ShapeMismatch, "feature map payload does not match its header");
  detail::ByteWriter w;
  w.bytes(kFeatureMagic, 4);
  w.uint<std::uint16_t>(kFeatureVersion);
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(map.h));
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(map.w));
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(map.f));
  for (float v : map.values) {
    if (!std::isfinite(v)) fail(Errc::NumericOverflow, "non-finite feature value");
    w.f32(v);
  }
  return std::move(w.data());
}

inline FeatureMap decode_feature_map(std::span<const unsigned char> bytes) {
  detail::ByteReader r(bytes);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kFeatureMagic, 4) != 0)
    fail(Errc::BadMagic, "not a feature file");
  r.take(4);
  const auto version = r.uint<std::uint16_t>();
  if (version != kFeatureVersion)
    fail(Errc::VersionUnsupported, "feature file version " + std::to_string(version));
  FeatureMap map;
  map.h = r.uint<std::uint32_t>();
  map.w = r.uint<std::uint32_t>();
  map.f = r.uint<std::uint32_t>();
  if (map.h == 0 || map.w == 0 || map.f == 0) fail(Errc::ParseError, "zero feature dimension");
  const std::size_t n = map.h * map.w * map.f;
  if (r.remaining() < n * 4)
    fail(Errc::TruncatedPayload, "payload has " + std::to_string(r.remaining()) + " bytes, header needs " +
                                     std::to_string(n * 4));
  if (r.remaining() > n * 4) fail(Errc::ParseError, "trailing bytes after feature payload");
  map.values.resize(n);
  for (auto& v : map.values) v = r.f32();
  return map;
}

inline void write_feature_file(const std::filesystem::path& path, const FeatureMap& map) {
  write_file_atomic(path, encode_feature_map(map));
}

inline FeatureMap read_feature_file(const std::filesystem::path& path) {
  return decode_feature_map(read_file(path));
}

// ---------------------------------------------------------------------------
// Checkpoints

inline std::vector<unsigned char> encode_checkpoint(const DecoderParams& params,
                                                    std::size_t float_bytes = sizeof(real)) {
  if (float_bytes != 4 && float_bytes != 8) fail(Errc::InvalidConfig, "float_bytes must be 4 or 8");
  const auto& c = params.config;
  detail::ByteWriter w;
  w.bytes(kCheckpointMagic, 4);
  w.uint<std::uint16_t>(kCheckpointVersion);
  for (auto v : {c.h, c.w, c.f, c.d, c.vocab_size, c.max_length})
    w.uint<std::uint32_t>(static_cast<std::uint32_t>(v));
  w.uint<std::uint8_t>(c.gate_enabled ? 1 : 0);
  w.uint<std::uint8_t>(static_cast<std::uint8_t>(float_bytes));
  const auto named = params.named();
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(named.size()));
  for (const auto& [name, t] : named) {
    w.uint<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.uint<std::uint32_t>(static_cast<std::uint32_t>(t->rank()));
    for (auto d : t->shape()) w.uint<std::uint32_t>(static_cast<std::uint32_t>(d));
    for (auto v : t->data()) {
      if (float_bytes == 4)
        w.f32(static_cast<float>(v));
      else
        w.f64(static_cast<double>(v));
    }
  }
  w.uint<std::uint32_t>(detail::crc32_of(w.data()));
  return std::move(w.data());
}

/// Parses a checkpoint. When `expected` is given, the stored configuration
/// must match it exactly (ShapeMismatch otherwise).
inline DecoderParams decode_checkpoint(std::span<const unsigned char> bytes,
                                       const std::optional<DecoderConfig>& expected = std::nullopt) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0)
    fail(Errc::BadMagic, "not a checkpoint");
  detail::ByteReader r(bytes);
  r.take(4);
  const auto version = r.uint<std::uint16_t>();
  if (version != kCheckpointVersion)
    fail(Errc::VersionUnsupported, "checkpoint version " + std::to_string(version));
  if (bytes.size() < 10) fail(Errc::TruncatedPayload, "checkpoint too short");
  const auto body = bytes.first(bytes.size() - 4);
  detail::ByteReader tail(bytes.last(4));
  if (tail.uint<std::uint32_t>() != detail::crc32_of(body))
    fail(Errc::ChecksumMismatch, "checkpoint checksum does not match its contents");

  detail::ByteReader br(body);
  br.take(6);
  DecoderConfig cfg;
  cfg.h = br.uint<std::uint32_t>();
  cfg.w = br.uint<std::uint32_t>();
  cfg.f = br.uint<std::uint32_t>();
  cfg.d = br.uint<std::uint32_t>();
  cfg.vocab_size = br.uint<std::uint32_t>();
  cfg.max_length = br.uint<std::uint32_t>();
  cfg.gate_enabled = br.uint<std::uint8_t>() != 0;
  const auto float_bytes = br.uint<std::uint8_t>();
  if (float_bytes != 4 && float_bytes != 8) fail(Errc::ParseError, "bad float width in checkpoint");
  if (expected && !(*expected == cfg))
    fail(Errc::ShapeMismatch, "checkpoint configuration differs from the requested one");

  DecoderParams params;
  params.config = cfg;
  auto layout = DecoderParams::layout(cfg);
  std::map<std::string, Shape> expected_shape(layout.begin(), layout.end());
  std::set<std::string> seen;
  auto targets = params.named();
  const auto count = br.uint<std::uint32_t>();
  for (std::uint32_t b = 0; b < count; ++b) {
    const auto name_len = br.uint<std::uint32_t>();
    auto name_bytes = br.take(name_len);
    std::string name(name_bytes.begin(), name_bytes.end());
    const auto rank = br.uint<std::uint32_t>();
    if (rank > 8) fail(Errc::ParseError, "implausible rank for " + name);
    Shape shape(rank);
    for (auto& d : shape) d = br.uint<std::uint32_t>();
    auto it = expected_shape.find(name);
    if (it == expected_shape.end()) fail(Errc::ParseError, "unknown parameter block " + name);
    if (!seen.insert(name).second) fail(Errc::ParseError, "duplicate parameter block " + name);
    if (it->second != shape)
      fail(Errc::ShapeMismatch, name + " has shape " + to_string(shape) + ", config implies " +
                                    to_string(it->second));
    std::vector<real> values(numel(shape));
    for (auto& v : values) v = float_bytes == 4 ? static_cast<real>(br.f32()) : static_cast<real>(br.f64());
    for (auto& [tname, t] : targets)
      if (tname == name) *t = Tensor(shape, std::move(values), true);
  }
  if (br.remaining() != 0) fail(Errc::ParseError, "trailing bytes before checksum");
  for (const auto& [name, shape] : layout)
    if (!seen.contains(name)) fail(Errc::MissingParameter, "checkpoint lacks " + name);
  return params;
}

inline void save_checkpoint(const std::filesystem::path& path, const DecoderParams& params,
                            std::size_t float_bytes = sizeof(real)) {
  write_file_atomic(path, encode_checkpoint(params, float_bytes));
}

inline DecoderParams load_checkpoint(const std::filesystem::path& path,
                                     const std::optional<DecoderConfig>& expected = std::nullopt) {
  return decode_checkpoint(read_file(path), expected);
}

// ---------------------------------------------------------------------------
// Vocabulary files

inline std::string format_vocabulary(const Vocabulary& vocab) {
  std::string out;
  for (const auto& t : vocab.tokens()) out += t + "\n";
  return out;
}

inline Vocabulary parse_vocabulary(std::string_view text) {
  std::vector<std::string> tokens;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string line(text.substr(start, end - start));
    if (!line.empty() && line.back() == '\r') line.pop_back();
    tokens.push_back(std::move(line));
    start = end + 1;
  }
  return Vocabulary::from_tokens(tokens);
}

inline void write_vocabulary(const std::filesystem::path& path, const Vocabulary& vocab) {
  write_text_atomic(path, format_vocabulary(vocab));
}

inline Vocabulary read_vocabulary(const std::filesystem::path& path) {
  return parse_vocabulary(read_text(path));
}

// ---------------------------------------------------------------------------
// Annotations and masks

struct AnnotationRecord {
  std::string id;
  ReasonSet reasons;
  std::optional<std::string> image_path;

  friend bool operator==(const AnnotationRecord&, const AnnotationRecord&) = default;
};

inline std::string format_annotations(std::span<const AnnotationRecord> records) {
  std::string out;
  for (const auto& rec : records) {
    nlohmann::ordered_json j;
    j["id"] = rec.id;
    j["reasons"] = reason_strings(rec.reasons);
    if (rec.image_path) j["image_path"] = *rec.image_path;
    out += j.dump() + "\n";
  }
  return out;
}

inline std::vector<AnnotationRecord> parse_annotations(std::string_view text) {
  std::vector<AnnotationRecord> out;
  std::set<std::string> ids;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto where = "annotation line " + std::to_string(line_no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      fail(Errc::ParseError, where + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("id") || !j["id"].is_string() || !j.contains("reasons") ||
        !j["reasons"].is_array())
      fail(Errc::ParseError, where + ": needs string 'id' and array 'reasons'");
    AnnotationRecord rec;
    rec.id = j["id"].get<std::string>();
    if (!ids.insert(rec.id).second) fail(Errc::ParseError, where + ": duplicate id " + rec.id);
    for (const auto& r : j["reasons"]) {
      if (!r.is_string()) fail(Errc::ParseError, where + ": reasons must be strings");
      const int c = canonical_index(r.get<std::string>());
      if (c < 0) fail(Errc::ParseError, where + ": '" + r.get<std::string>() + "' is not a known reason");
      rec.reasons.set(static_cast<std::size_t>(c));
    }
    if (j.contains("image_path")) {
      if (!j["image_path"].is_string()) fail(Errc::ParseError, where + ": image_path must be a string");
      rec.image_path = j["image_path"].get<std::string>();
    }
    out.push_back(std::move(rec));
  }
  return out;
}

inline std::string format_masks(std::span<const SyntheticScene> scenes) {
  nlohmann::ordered_json j;
  j["h"] = scenes.empty() ? 0 : scenes.front().features.h;
  j["w"] = scenes.empty() ? 0 : scenes.front().features.w;
  auto& all = j["scenes"] = nlohmann::ordered_json::object();
  for (const auto& s : scenes) {
    nlohmann::ordered_json m = nlohmann::ordered_json::object();
    for (std::size_t c = 0; c < kNumReasons; ++c)
      if (!s.masks[c].empty()) m[std::to_string(c)] = s.masks[c];
    all[s.id] = std::move(m);
  }
  return j.dump() + "\n";
}

/// id -> per-class planted cells.
inline std::map<std::string, std::array<std::vector<std::size_t>, kNumReasons>> parse_masks(
    std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::ParseError, std::string("masks: ") + e.what());
  }
  std::map<std::string, std::array<std::vector<std::size_t>, kNumReasons>> out;
  if (!j.contains("scenes") || !j["scenes"].is_object()) fail(Errc::ParseError, "masks: no 'scenes' object");
  for (const auto& [id, m] : j["scenes"].items()) {
    auto& entry = out[id];
    for (const auto& [cls, cells] : m.items()) {
      if (cls.size() != 1 || cls[0] < '0' || cls[0] >= char('0' + kNumReasons))
        fail(Errc::ParseError, "masks: class " + cls + " out of range");
      if (!cells.is_array()) fail(Errc::ParseError, "masks: cells of " + id + " must be an array");
      auto& dst = entry[static_cast<std::size_t>(cls[0] - '0')];
      for (const auto& cell : cells) {
        if (!cell.is_number_unsigned()) fail(Errc::ParseError, "masks: cell indices must be unsigned");
        dst.push_back(cell.get<std::size_t>());
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Data directories: features/<id>.riaf, annotations.jsonl, masks.json, vocab.txt

inline std::filesystem::path feature_path(const std::filesystem::path& dir, const std::string& id) {
  return dir / "features" / (id + ".riaf");
}

inline void save_scenes(const std::filesystem::path& dir, std::span<const SyntheticScene> scenes) {
  std::filesystem::create_directories(dir / "features");
  std::vector<AnnotationRecord> records;
  for (const auto& s : scenes) {
    write_feature_file(feature_path(dir, s.id), s.features);
    records.push_back({s.id, s.annotation, std::nullopt});
  }
  write_text_atomic(dir / "annotations.jsonl", format_annotations(records));
  write_text_atomic(dir / "masks.json", format_masks(scenes));
  write_vocabulary(dir / "vocab.txt", Vocabulary::canonical());
}

/// Loads every annotated scene of a data directory. Masks are attached when
/// masks.json is present.
inline std::vector<SyntheticScene> load_scenes(const std::filesystem::path& dir,
                                               const Vocabulary& vocab,
                                               std::size_t max_length = kCanonicalMaxLength) {
  const auto records = parse_annotations(read_text(dir / "annotations.jsonl"));
  std::map<std::string, std::array<std::vector<std::size_t>, kNumReasons>> masks;
  if (std::filesystem::exists(dir / "masks.json")) masks = parse_masks(read_text(dir / "masks.json"));
  std::vector<SyntheticScene> scenes;
  scenes.reserve(records.size());
  for (const auto& rec : records) {
    SyntheticScene s;
    s.id = rec.id;
    s.features = read_feature_file(feature_path(dir, rec.id));
    s.annotation = rec.reasons;
    s.target = encode(reason_strings(rec.reasons), vocab, max_length);
    if (auto it = masks.find(rec.id); it != masks.end()) s.masks = it->second;
    scenes.push_back(std::move(s));
  }
  return scenes;
}

// ---------------------------------------------------------------------------
// Attention traces

inline std::string format_trace(const AttentionTrace& trace, const Vocabulary& vocab) {
  nlohmann::ordered_json j;
  j["h"] = trace.h;
  j["w"] = trace.w;
  j["tokens"] = trace.tokens;
  std::vector<std::string> words;
  for (auto t : trace.tokens) words.push_back(vocab.word(t));
  j["words"] = words;
  j["maps"] = trace.maps;
  return j.dump() + "\n";
}

/// Returns the trace and the word recorded for each step.
inline std::pair<AttentionTrace, std::vector<std::string>> parse_trace(std::string_view text) {
  try {
    auto j = nlohmann::json::parse(text);
    AttentionTrace t;
    t.h = j.at("h").get<std::size_t>();
    t.w = j.at("w").get<std::size_t>();
    t.tokens = j.at("tokens").get<std::vector<TokenId>>();
    t.maps = j.at("maps").get<std::vector<std::vector<real>>>();
    auto words = j.at("words").get<std::vector<std::string>>();
    if (t.maps.size() != t.tokens.size() || words.size() != t.tokens.size())
      fail(Errc::ParseError, "trace arrays differ in length");
    for (const auto& m : t.maps)
      if (m.size() != t.h * t.w) fail(Errc::ParseError, "trace map size does not match h*w");
    return {std::move(t), std::move(words)};
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::ParseError, std::string("trace: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Reports

inline nlohmann::ordered_json metrics_json(const MetricsReport& m) {
  nlohmann::ordered_json j;
  j["count"] = m.count;
  j["avg_bleu"] = m.avg_bleu;
  j["reasons_f1_all"] = m.reasons_f1_all;
  j["reasons_mf1"] = m.reasons_mf1;
  j["actions_f1_all"] = m.actions_f1_all;
  j["actions_mf1"] = m.actions_mf1;
  j["reasons_f1_micro"] = m.reasons_f1_micro;
  j["actions_f1_micro"] = m.actions_f1_micro;
  j["reasons_per_class"] = m.reasons_per_class;
  j["actions_per_class"] = m.actions_per_class;
  j["empty_empty_reasons"] = m.empty_empty_reasons;
  j["empty_empty_actions"] = m.empty_empty_actions;
  j["absent_reason_classes"] = m.absent_reason_classes;
  j["absent_action_classes"] = m.absent_action_classes;
  return j;
}

/// key=value lines; numbers are printed exactly as in metrics_json().
inline std::string format_metrics_text(const MetricsReport& m) {
  const auto j = metrics_json(m);
  std::string out;
  for (const auto& [key, value] : j.items()) out += key + "=" + value.dump() + "\n";
  return out;
}

inline nlohmann::ordered_json train_report_json(const TrainReport& r) {
  nlohmann::ordered_json j;
  j["epochs"] = r.epoch_loss.size();
  j["epoch_loss"] = r.epoch_loss;
  j["token_accuracy"] = r.token_accuracy;
  j["final_loss"] = r.epoch_loss.empty() ? 0.0 : r.epoch_loss.back();
  j["checkpoint_id"] = r.checkpoint_id;
  return j;
}

inline std::string checkpoint_id(std::span<const unsigned char> bytes) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%08x", detail::crc32_of(bytes));
  return buf;
}

}  // namespace riattn
