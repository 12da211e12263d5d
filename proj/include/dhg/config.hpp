#pragma once

// key = value configuration text: one assignment per line, '#' comments,
// later assignments override earlier ones.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace dhg {

struct KeyValue {
  std::string key;
  std::string value;
  std::size_t line = 0;
};

std::vector<KeyValue> parse_key_values(const std::string& text);
std::string read_text_file(const std::string& path);

bool parse_bool(const KeyValue& kv);
std::size_t parse_size(const KeyValue& kv);
std::uint64_t parse_u64(const KeyValue& kv);
double parse_real(const KeyValue& kv);
std::vector<std::size_t> parse_size_list(const KeyValue& kv);

std::string format_real(double v);
std::string format_size_list(const std::vector<std::size_t>& v);

// FNV-1a, 64-bit.
std::uint64_t fnv1a(const std::string& text);

}  // namespace dhg
