#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace comute::kv {

/// Ordered key=value document. Lines starting with '#' and blank lines are
/// ignored on parse; keys keep insertion order on write.
class Document {
 public:
  static Document parse(std::string_view text);
  static Document load(const std::filesystem::path& path);

  void set(std::string key, std::string value);
  void set(std::string key, std::uint64_t value);
  void set(std::string key, double value);

  bool contains(std::string_view key) const;
  const std::string& get(std::string_view key) const;
  std::uint64_t get_u64(std::string_view key) const;
  double get_double(std::string_view key) const;

  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

  std::string str() const;
  void save(const std::filesystem::path& path) const;

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

/// Reads an entire file as bytes; throws FormatError if unreadable.
std::string read_file(const std::filesystem::path& path);

/// Writes bytes atomically enough for our purposes; throws DiskWriteFailure.
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace comute::kv
