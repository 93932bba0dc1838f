#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace critshe::cli {

using Json = nlohmann::ordered_json;

// Shortest text that round-trips a double: 17 significant digits.
std::string format_real(double v);

class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}
  void add_row(const std::vector<double>& values);
  void add_row(const std::vector<std::string>& cells);
  std::size_t rows() const { return rows_.size(); }
  std::string str() const;

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

// Writes to a sibling temporary file and renames it over the target, so
// readers never observe a partial file.
void write_atomic(const std::filesystem::path& path, const std::string& content);

struct RunManifest {
  std::string command;
  Json config = Json::object();
  unsigned long long seed = 0;
  std::string version;
  double wall_seconds = 0.0;
  std::vector<std::string> outputs;

  Json to_json() const;
};
void write_manifest(const std::filesystem::path& path, const RunManifest& manifest);

// TOML by default; files ending in .json are read as JSON. TOML tables become JSON objects.
Json load_config(const std::filesystem::path& path);

}  // namespace critshe::cli
