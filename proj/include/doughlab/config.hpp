#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "doughlab/common.hpp"

namespace dough {

// Sectioned key=value text config. Lines starting with '#' are comments.
// Section headers are "[name]"; keys are addressed as "section.key".
class Config {
 public:
  Config() = default;

  static Config parse(const std::string& text);
  static Config load(const std::string& path);

  bool has(const std::string& key) const { return kv_.count(key) > 0; }

  std::string get_str(const std::string& key, const std::string& def) const;
  double get_double(const std::string& key, double def) const;
  int64_t get_int(const std::string& key, int64_t def) const;
  bool get_bool(const std::string& key, bool def) const;

  void set(const std::string& key, const std::string& value);
  void set_double(const std::string& key, double value);
  void set_int(const std::string& key, int64_t value);

  // Overlay: values in `other` win.
  void merge(const Config& other);

  // Serialized form groups keys by section, sorted, so output is stable.
  std::string to_text() const;

  const std::map<std::string, std::string>& entries() const { return kv_; }

 private:
  std::map<std::string, std::string> kv_;
};

// Per-stage run manifest: resolved config snapshot + input/output hashes.
// Volatile data (timings) go to a side log, never into hashed artifacts.
struct Manifest {
  std::string stage;
  Config config;
  std::vector<std::pair<std::string, std::string>> inputs;   // name, hex hash
  std::vector<std::pair<std::string, std::string>> outputs;  // name, hex hash

  std::string to_text() const;
  void save(const std::string& path) const;
};

uint64_t hash_file(const std::string& path);
std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace dough
