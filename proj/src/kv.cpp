#include "comute/kv.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "comute/errors.hpp"

namespace comute::kv {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

Document Document::parse(std::string_view text) {
  Document doc;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    const auto line = trim(text.substr(0, nl));
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw FormatError("line " + std::to_string(line_no) + ": expected key=value");
    }
    const auto key = trim(line.substr(0, eq));
    if (key.empty()) throw FormatError("line " + std::to_string(line_no) + ": empty key");
    doc.set(std::string(key), std::string(trim(line.substr(eq + 1))));
  }
  return doc;
}

Document Document::load(const std::filesystem::path& path) { return parse(read_file(path)); }

void Document::set(std::string key, std::string value) {
  if (auto it = index_.find(key); it != index_.end()) {
    entries_[it->second].second = std::move(value);
    return;
  }
  index_.emplace(key, entries_.size());
  entries_.emplace_back(std::move(key), std::move(value));
}

void Document::set(std::string key, std::uint64_t value) {
  set(std::move(key), std::to_string(value));
}

void Document::set(std::string key, double value) { set(std::move(key), format_double(value)); }

bool Document::contains(std::string_view key) const { return index_.find(key) != index_.end(); }

const std::string& Document::get(std::string_view key) const {
  auto it = index_.find(key);
  if (it == index_.end()) throw FormatError("missing key '" + std::string(key) + "'");
  return entries_[it->second].second;
}

std::uint64_t Document::get_u64(std::string_view key) const {
  const auto& s = get(key);
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw FormatError("key '" + std::string(key) + "': not an unsigned integer: " + s);
  }
  return v;
}

double Document::get_double(std::string_view key) const {
  const auto& s = get(key);
  double v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw FormatError("key '" + std::string(key) + "': not a number: " + s);
  }
  return v;
}

std::string Document::str() const {
  std::string out;
  for (const auto& [k, v] : entries_) {
    out += k;
    out += '=';
    out += v;
    out += '\n';
  }
  return out;
}

void Document::save(const std::filesystem::path& path) const { write_file(path, str()); }

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DiskWriteFailure("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DiskWriteFailure("write failed: " + path.string());
}

}  // namespace comute::kv
