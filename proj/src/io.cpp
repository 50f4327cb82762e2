#include "lmr/io.hpp"

#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

#include "lmr/error.hpp"

namespace lmr {

namespace {

class ByteWriter {
 public:
  void raw(const void* p, std::size_t n) {
    const char* c = static_cast<const char*>(p);
    out_.insert(out_.end(), c, c + n);
  }
  void u16(std::uint16_t v) { le(v, 2); }
  void u32(std::uint32_t v) { le(v, 4); }
  void u64(std::uint64_t v) { le(v, 8); }
  void f32(float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    u32(bits);
  }
  std::vector<char> take() { return std::move(out_); }

 private:
  void le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  std::vector<char> out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const char> bytes) : bytes_(bytes) {}

  std::uint64_t offset() const noexcept { return pos_; }
  std::uint64_t remaining() const noexcept { return bytes_.size() - pos_; }

  void need(std::uint64_t n, const char* what) const {
    if (remaining() < n) {
      throw FormatError(std::string("truncated file while reading ") + what, bytes_.size());
    }
  }
  std::uint64_t le(int n, const char* what) {
    need(n, what);
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += n;
    return v;
  }
  std::uint16_t u16(const char* what) { return static_cast<std::uint16_t>(le(2, what)); }
  std::uint32_t u32(const char* what) { return static_cast<std::uint32_t>(le(4, what)); }
  std::uint64_t u64(const char* what) { return le(8, what); }
  float f32(const char* what) {
    auto bits = u32(what);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  std::string_view str(std::size_t n, const char* what) {
    need(n, what);
    std::string_view s(bytes_.data() + pos_, n);
    pos_ += n;
    return s;
  }

 private:
  std::span<const char> bytes_;
  std::uint64_t pos_ = 0;
};

void check_magic(ByteReader& r, const char (&magic)[4]) {
  auto m = r.str(4, "magic");
  if (std::memcmp(m.data(), magic, 4) != 0) {
    throw FormatError("bad magic, expected '" + std::string(magic, 4) + "'", 0);
  }
  auto version_at = r.offset();
  auto version = r.u32("version");
  if (version != kFormatVersion) {
    throw FormatError("unsupported version " + std::to_string(version), version_at);
  }
}

}  // namespace

std::vector<char> encode_descriptor_store(const DescriptorStore& store) {
  ByteWriter w;
  w.raw(kStoreMagic, 4);
  w.u32(kFormatVersion);
  w.u32(store.dim());
  w.u64(store.size());
  for (const auto& id : store.ids()) {
    if (id.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw ValidationError("image id too long for store format: '" + id + "'");
    }
    w.u16(static_cast<std::uint16_t>(id.size()));
    w.raw(id.data(), id.size());
  }
  for (float v : store.matrix()) w.f32(v);
  return w.take();
}

DescriptorStore decode_descriptor_store(std::span<const char> bytes) {
  ByteReader r(bytes);
  check_magic(r, kStoreMagic);
  auto dim_at = r.offset();
  auto dim = r.u32("dim");
  auto count = r.u64("count");
  if (dim == 0 && count > 0) throw FormatError("zero dim with non-empty store", dim_at);

  std::vector<ImageId> ids;
  for (std::uint64_t i = 0; i < count; ++i) {
    auto at = r.offset();
    auto len = r.u16("id length");
    ids.emplace_back(r.str(len, "id"));
    try {
      validate_image_id(ids.back());
    } catch (const ValidationError& e) {
      throw FormatError(e.what(), at);
    }
  }
  const std::uint64_t payload = count * dim * 4;
  if (r.remaining() < payload) {
    throw FormatError("truncated descriptor matrix", bytes.size());
  }
  if (r.remaining() > payload) {
    throw FormatError("payload larger than header dim x count", r.offset() + payload);
  }
  DescriptorStore store(dim);
  std::vector<float> row(dim);
  for (std::uint64_t i = 0; i < count; ++i) {
    auto at = r.offset();
    for (auto& v : row) v = r.f32("descriptor");
    try {
      store.add(ids[i], std::span<const float>(row));
    } catch (const ValidationError& e) {
      throw FormatError(e.what(), at);
    }
  }
  return store;
}

DescriptorStore load_descriptor_store(const fs::path& path) {
  auto bytes = read_binary_file(path);
  try {
    return decode_descriptor_store(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what(), e.offset());
  }
}

void save_descriptor_store(const DescriptorStore& store, const fs::path& path) {
  write_binary_file(path, encode_descriptor_store(store));
}

std::vector<char> encode_local_features(const LocalFeatureSet& set) {
  if (set.descriptors.size() != set.keypoints.size() * set.desc_dim) {
    throw ValidationError("descriptor block size does not match keypoint count for '" +
                          set.image + "'");
  }
  ByteWriter w;
  w.raw(kFeatureMagic, 4);
  w.u32(kFormatVersion);
  w.u32(set.desc_dim);
  w.u32(static_cast<std::uint32_t>(set.keypoints.size()));
  for (std::size_t i = 0; i < set.size(); ++i) {
    w.f32(set.keypoints[i].x);
    w.f32(set.keypoints[i].y);
    w.f32(set.keypoints[i].scale);
    for (float v : set.descriptor(i)) w.f32(v);
  }
  return w.take();
}

LocalFeatureSet decode_local_features(std::span<const char> bytes, const ImageId& image) {
  ByteReader r(bytes);
  check_magic(r, kFeatureMagic);
  auto dim_at = r.offset();
  LocalFeatureSet set;
  set.image = image;
  set.desc_dim = r.u32("desc_dim");
  if (set.desc_dim == 0) throw FormatError("desc_dim must be positive", dim_at);
  auto n = r.u32("feature count");
  const std::uint64_t record = 4ull * (3 + set.desc_dim);
  if (r.remaining() < n * record) throw FormatError("truncated feature records", bytes.size());
  if (r.remaining() > n * record) {
    throw FormatError("payload larger than header n x record", r.offset() + n * record);
  }
  set.keypoints.reserve(n);
  set.descriptors.reserve(static_cast<std::size_t>(n) * set.desc_dim);
  for (std::uint32_t i = 0; i < n; ++i) {
    auto at = r.offset();
    Keypoint k;
    k.x = r.f32("x");
    k.y = r.f32("y");
    k.scale = r.f32("scale");
    if (!std::isfinite(k.x) || !std::isfinite(k.y) || !(k.scale > 0) || !std::isfinite(k.scale)) {
      throw FormatError("invalid keypoint geometry", at);
    }
    set.keypoints.push_back(k);
    for (std::uint32_t j = 0; j < set.desc_dim; ++j) {
      float v = r.f32("descriptor");
      if (!std::isfinite(v)) throw FormatError("non-finite descriptor value", at);
      set.descriptors.push_back(v);
    }
  }
  return set;
}

LocalFeatureSet load_local_features(const fs::path& path) {
  auto bytes = read_binary_file(path);
  try {
    return decode_local_features(bytes, path.stem().string());
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what(), e.offset());
  }
}

void save_local_features(const LocalFeatureSet& set, const fs::path& path) {
  write_binary_file(path, encode_local_features(set));
}

fs::path local_feature_path(const fs::path& dir, std::string_view image) {
  return dir / (std::string(image) + ".lf");
}

std::string format_exact(double value) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

std::string format_confidence(double value) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, value);
  std::string_view shortest(buf, res.ptr - buf);
  // Count significant digits of the shortest form.
  int digits = 0;
  bool leading = true;
  for (char c : shortest) {
    if (c == 'e' || c == 'E') break;
    if (c < '0' || c > '9') continue;
    if (leading && c == '0') continue;
    leading = false;
    ++digits;
  }
  if (digits <= 9) return std::string(shortest);
  res = std::to_chars(buf, buf + sizeof buf, value, std::chars_format::general, 9);
  return std::string(buf, res.ptr);
}

std::vector<std::pair<std::size_t, std::string_view>> csv_body(std::string_view text,
                                                               std::string_view header) {
  std::vector<std::pair<std::size_t, std::string_view>> lines;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  bool saw_header = false;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    auto end = nl == std::string_view::npos ? text.size() : nl;
    std::string_view line = text.substr(pos, end - pos);
    ++line_no;
    if (!line.empty() && line.back() == '\r') throw ParseError("CR line ending", line_no);
    if (!saw_header) {
      if (line != header) {
        throw ParseError("expected header '" + std::string(header) + "'", line_no);
      }
      saw_header = true;
    } else {
      lines.emplace_back(line_no, line);
    }
    pos = end + 1;
  }
  if (!saw_header) throw ParseError("missing header '" + std::string(header) + "'", 1);
  return lines;
}

std::vector<std::string_view> split_fields(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    auto at = line.find(sep, pos);
    if (at == std::string_view::npos) {
      out.push_back(line.substr(pos));
      return out;
    }
    out.push_back(line.substr(pos, at - pos));
    pos = at + 1;
  }
}

ClassLabel parse_label(std::string_view text, std::size_t line) {
  ClassLabel v = 0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw ParseError("invalid class label '" + std::string(text) + "'", line);
  }
  return v;
}

double parse_real(std::string_view text, std::size_t line) {
  double v = 0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || res.ec != std::errc() || res.ptr != text.data() + text.size() ||
      !std::isfinite(v)) {
    throw ParseError("invalid number '" + std::string(text) + "'", line);
  }
  return v;
}

Submission parse_submission(std::string_view text) {
  Submission sub;
  for (auto [line_no, line] : csv_body(text, "id,landmarks")) {
    auto fields = split_fields(line);
    if (fields.size() != 2) throw ParseError("expected 2 fields", line_no);
    Prediction p;
    p.image = std::string(fields[0]);
    try {
      validate_image_id(p.image);
    } catch (const ValidationError& e) {
      throw ParseError(e.what(), line_no);
    }
    if (!fields[1].empty()) {
      auto parts = split_fields(fields[1], ' ');
      if (parts.size() != 2) throw ParseError("expected '<label> <confidence>'", line_no);
      p.guess = Guess{parse_label(parts[0], line_no), parse_real(parts[1], line_no)};
    }
    sub.rows.push_back(std::move(p));
  }
  try {
    validate_submission(sub);
  } catch (const ValidationError& e) {
    throw ParseError(e.what(), 0);
  }
  return sub;
}

std::string format_submission(const Submission& sub) {
  validate_submission(sub);
  std::string out = "id,landmarks\n";
  for (const auto& row : sub.rows) {
    out += row.image;
    out += ',';
    if (row.guess) {
      out += std::to_string(row.guess->label);
      out += ' ';
      out += format_confidence(row.guess->confidence);
    }
    out += '\n';
  }
  return out;
}

Submission load_submission(const fs::path& path) {
  try {
    return parse_submission(read_text_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), e.line());
  }
}

void save_submission(const Submission& sub, const fs::path& path) {
  write_text_file(path, format_submission(sub));
}

LabelTable parse_label_table(std::string_view text) {
  LabelTable table;
  for (auto [line_no, line] : csv_body(text, "id,landmark_id")) {
    auto fields = split_fields(line);
    if (fields.size() != 2) throw ParseError("expected 2 fields", line_no);
    std::string id(fields[0]);
    auto label = parse_label(fields[1], line_no);
    try {
      table.add(id, label);
    } catch (const ValidationError& e) {
      throw ParseError(e.what(), line_no);
    }
  }
  return table;
}

std::string format_label_table(const LabelTable& labels) {
  std::string out = "id,landmark_id\n";
  for (const auto& [id, label] : labels.entries()) {
    out += id;
    out += ',';
    out += std::to_string(label);
    out += '\n';
  }
  return out;
}

LabelTable load_label_table(const fs::path& path) {
  try {
    return parse_label_table(read_text_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), e.line());
  }
}

void save_label_table(const LabelTable& labels, const fs::path& path) {
  write_text_file(path, format_label_table(labels));
}

std::vector<KeyValue> parse_key_values(std::string_view text) {
  auto trim = [](std::string_view v) {
    while (!v.empty() && (v.front() == ' ' || v.front() == '\t')) v.remove_prefix(1);
    while (!v.empty() && (v.back() == ' ' || v.back() == '\t' || v.back() == '\r')) v.remove_suffix(1);
    return v;
  };
  std::vector<KeyValue> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    auto end = nl == std::string_view::npos ? text.size() : nl;
    auto line = trim(text.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError("expected 'key = value'", line_no);
    KeyValue kv{line_no, std::string(trim(line.substr(0, eq))), std::string(trim(line.substr(eq + 1)))};
    if (kv.key.empty()) throw ParseError("empty key", line_no);
    for (const auto& prev : out) {
      if (prev.key == kv.key) throw ParseError("duplicate key '" + kv.key + "'", line_no);
    }
    out.push_back(std::move(kv));
  }
  return out;
}

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_text_file(const fs::path& path, std::string_view text) {
  write_binary_file(path, std::span<const char>(text.data(), text.size()));
}

std::vector<char> read_binary_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_binary_file(const fs::path& path, std::span<const char> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace lmr
