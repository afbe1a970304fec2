#include "nwlab/configfile.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace nwlab {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::int64_t parse_int(const std::string& key, const std::string& value) {
  char* end = nullptr;
  errno = 0;
  const long long v = std::strtoll(value.c_str(), &end, 10);
  if (errno != 0 || end == value.c_str() || *end != '\0')
    throw Error(ErrorCode::config,
                "key '" + key + "': not an integer: '" + value + "'");
  return v;
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  char* end = nullptr;
  errno = 0;
  const unsigned long long v = std::strtoull(value.c_str(), &end, 10);
  if (errno != 0 || end == value.c_str() || *end != '\0' ||
      value.find('-') != std::string::npos)
    throw Error(ErrorCode::config,
                "key '" + key + "': not an unsigned integer: '" + value + "'");
  return v;
}

double parse_double(const std::string& key, const std::string& value) {
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(value.c_str(), &end);
  if (errno != 0 || end == value.c_str() || *end != '\0')
    throw Error(ErrorCode::config,
                "key '" + key + "': not a number: '" + value + "'");
  return v;
}

}  // namespace

KeyValueFile KeyValueFile::parse(const std::string& text) {
  KeyValueFile file;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const std::size_t eq = stripped.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorCode::config, "line " + std::to_string(line_no) +
                                         ": expected key = value, got '" +
                                         stripped + "'");
    file.set(trim(stripped.substr(0, eq)), trim(stripped.substr(eq + 1)));
  }
  return file;
}

KeyValueFile KeyValueFile::load(const std::filesystem::path& path) {
  return parse(read_text_file(path));
}

std::string KeyValueFile::serialize() const {
  std::string out;
  for (const auto& [key, value] : entries_) {
    out += key;
    out += " = ";
    out += value;
    out += '\n';
  }
  return out;
}

void KeyValueFile::save(const std::filesystem::path& path) const {
  write_text_file(path, serialize());
}

const std::string* KeyValueFile::find(const std::string& key) const noexcept {
  for (const auto& [k, v] : entries_)
    if (k == key) return &v;
  return nullptr;
}

bool KeyValueFile::has(const std::string& key) const noexcept {
  return find(key) != nullptr;
}

const std::string& KeyValueFile::get(const std::string& key) const {
  const std::string* v = find(key);
  if (!v) throw Error(ErrorCode::config, "missing key '" + key + "'");
  return *v;
}

std::string KeyValueFile::get_or(const std::string& key,
                                 const std::string& fallback) const {
  const std::string* v = find(key);
  return v ? *v : fallback;
}

std::int64_t KeyValueFile::get_int(const std::string& key) const {
  return parse_int(key, get(key));
}

std::int64_t KeyValueFile::get_int_or(const std::string& key,
                                      std::int64_t fallback) const {
  const std::string* v = find(key);
  return v ? parse_int(key, *v) : fallback;
}

std::uint64_t KeyValueFile::get_u64(const std::string& key) const {
  return parse_u64(key, get(key));
}

std::uint64_t KeyValueFile::get_u64_or(const std::string& key,
                                       std::uint64_t fallback) const {
  const std::string* v = find(key);
  return v ? parse_u64(key, *v) : fallback;
}

double KeyValueFile::get_double(const std::string& key) const {
  return parse_double(key, get(key));
}

double KeyValueFile::get_double_or(const std::string& key,
                                   double fallback) const {
  const std::string* v = find(key);
  return v ? parse_double(key, *v) : fallback;
}

bool KeyValueFile::get_bool_or(const std::string& key, bool fallback) const {
  const std::string* v = find(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1") return true;
  if (*v == "false" || *v == "0") return false;
  throw Error(ErrorCode::config, "key '" + key + "': not a boolean: '" + *v + "'");
}

std::vector<std::string> KeyValueFile::get_list(const std::string& key) const {
  std::vector<std::string> out;
  const std::string& value = get(key);
  std::string item;
  std::istringstream in(value);
  while (std::getline(in, item, ',')) {
    const std::string stripped = trim(item);
    if (!stripped.empty()) out.push_back(stripped);
  }
  return out;
}

std::vector<std::int64_t> KeyValueFile::get_int_list(
    const std::string& key) const {
  std::vector<std::int64_t> out;
  for (const std::string& item : get_list(key))
    out.push_back(parse_int(key, item));
  return out;
}

std::vector<double> KeyValueFile::get_double_list(
    const std::string& key) const {
  std::vector<double> out;
  for (const std::string& item : get_list(key))
    out.push_back(parse_double(key, item));
  return out;
}

void KeyValueFile::set(const std::string& key, const std::string& value) {
  for (auto& [k, v] : entries_) {
    if (k == key) {
      v = value;
      return;
    }
  }
  entries_.emplace_back(key, value);
}

void KeyValueFile::set_int(const std::string& key, std::int64_t value) {
  set(key, std::to_string(value));
}

void KeyValueFile::set_u64(const std::string& key, std::uint64_t value) {
  set(key, std::to_string(value));
}

void KeyValueFile::set_double(const std::string& key, double value) {
  set(key, format_double(value));
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  if (in.bad()) throw Error(ErrorCode::io, "read failed: " + path.string());
  return buffer.str();
}

void write_text_file(const std::filesystem::path& path,
                     const std::string& content) {
  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot create " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw Error(ErrorCode::io, "write failed: " + path.string());
}

std::string format_double(double value) {
  char buffer[40];
  std::snprintf(buffer, sizeof(buffer), "%.9g", value);
  return buffer;
}

}  // namespace nwlab
