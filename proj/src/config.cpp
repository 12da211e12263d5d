#include "dhg/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "dhg/error.hpp"

namespace dhg {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

[[noreturn]] void bad_value(const KeyValue& kv, const char* what) {
  fail(ErrorCode::kConfigError,
       "line " + std::to_string(kv.line) + ": " + kv.key + " = '" + kv.value + "' is not " + what);
}

}  // namespace

std::vector<KeyValue> parse_key_values(const std::string& text) {
  std::vector<KeyValue> out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    require(eq != std::string::npos, ErrorCode::kConfigError,
            "line " + std::to_string(lineno) + ": expected key = value, got '" + line + "'");
    KeyValue kv{trim(line.substr(0, eq)), trim(line.substr(eq + 1)), lineno};
    require(!kv.key.empty(), ErrorCode::kConfigError, "line " + std::to_string(lineno) + ": empty key");
    out.push_back(std::move(kv));
  }
  return out;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::kConfigError, "cannot read " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

bool parse_bool(const KeyValue& kv) {
  const std::string& v = kv.value;
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad_value(kv, "a boolean");
}

std::uint64_t parse_u64(const KeyValue& kv) {
  std::uint64_t out = 0;
  const char* end = kv.value.data() + kv.value.size();
  auto [ptr, ec] = std::from_chars(kv.value.data(), end, out);
  if (kv.value.empty() || ec != std::errc() || ptr != end) bad_value(kv, "a non-negative integer");
  return out;
}

std::size_t parse_size(const KeyValue& kv) { return static_cast<std::size_t>(parse_u64(kv)); }

double parse_real(const KeyValue& kv) {
  double out = 0;
  const char* end = kv.value.data() + kv.value.size();
  auto [ptr, ec] = std::from_chars(kv.value.data(), end, out);
  if (kv.value.empty() || ec != std::errc() || ptr != end || !std::isfinite(out)) bad_value(kv, "a finite number");
  return out;
}

std::vector<std::size_t> parse_size_list(const KeyValue& kv) {
  std::vector<std::size_t> out;
  if (kv.value.empty()) return out;
  std::stringstream ss(kv.value);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_size({kv.key, trim(item), kv.line}));
  return out;
}

std::string format_real(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string format_size_list(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace dhg
