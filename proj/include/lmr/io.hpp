#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "lmr/model.hpp"

namespace lmr {

namespace fs = std::filesystem;

// Descriptor store: "GLDS", u32 version=1, u32 dim, u64 count, then count x
// (u16 length + UTF-8 id), then count x dim f32. All little-endian.
inline constexpr char kStoreMagic[4] = {'G', 'L', 'D', 'S'};
// Local features: "GLLF", u32 version=1, u32 desc_dim, u32 n, then n x
// (f32 x, f32 y, f32 scale, desc_dim x f32).
inline constexpr char kFeatureMagic[4] = {'G', 'L', 'L', 'F'};
inline constexpr std::uint32_t kFormatVersion = 1;

std::vector<char> encode_descriptor_store(const DescriptorStore& store);
DescriptorStore decode_descriptor_store(std::span<const char> bytes);
DescriptorStore load_descriptor_store(const fs::path& path);
void save_descriptor_store(const DescriptorStore& store, const fs::path& path);

std::vector<char> encode_local_features(const LocalFeatureSet& set);
/// `image` is not stored in the file; callers pass it (usually the file stem).
LocalFeatureSet decode_local_features(std::span<const char> bytes, const ImageId& image);
LocalFeatureSet load_local_features(const fs::path& path);
void save_local_features(const LocalFeatureSet& set, const fs::path& path);
/// `<dir>/<image>.lf`
fs::path local_feature_path(const fs::path& dir, std::string_view image);

/// Shortest round-trip decimal, capped at 9 significant digits.
std::string format_confidence(double value);
/// Shortest decimal that round-trips exactly.
std::string format_exact(double value);

Submission parse_submission(std::string_view text);
std::string format_submission(const Submission& sub);
Submission load_submission(const fs::path& path);
void save_submission(const Submission& sub, const fs::path& path);

LabelTable parse_label_table(std::string_view text);
std::string format_label_table(const LabelTable& labels);
LabelTable load_label_table(const fs::path& path);
void save_label_table(const LabelTable& labels, const fs::path& path);

// Shared text helpers.
std::string read_text_file(const fs::path& path);
void write_text_file(const fs::path& path, std::string_view text);
std::vector<char> read_binary_file(const fs::path& path);
void write_binary_file(const fs::path& path, std::span<const char> bytes);

/// Splits CSV text into lines, checks the header and returns data lines with
/// their 1-based line numbers. Trailing "\r" is not accepted.
std::vector<std::pair<std::size_t, std::string_view>> csv_body(std::string_view text,
                                                               std::string_view header);
std::vector<std::string_view> split_fields(std::string_view line, char sep = ',');
ClassLabel parse_label(std::string_view text, std::size_t line);
/// Non-negative integer; same rules as parse_label.
inline std::uint64_t parse_count(std::string_view text, std::size_t line) {
  return parse_label(text, line);
}
double parse_real(std::string_view text, std::size_t line);

/// "key = value" lines; blank lines and '#' comments are skipped. Returns
/// (line number, key, value) in file order; duplicate keys are a ParseError.
struct KeyValue {
  std::size_t line = 0;
  std::string key;
  std::string value;
};
std::vector<KeyValue> parse_key_values(std::string_view text);

}  // namespace lmr
