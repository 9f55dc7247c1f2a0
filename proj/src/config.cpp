#include "doughlab/config.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <sstream>

namespace dough {

std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return std::string(buf);
}

void parallel_for(size_t n, int threads, const std::function<void(size_t)>& fn) {
  if (n == 0) return;
  int t = threads;
  if (t <= 1 || n == 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  t = static_cast<int>(std::min<size_t>(static_cast<size_t>(t), n));
  std::atomic<size_t> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr first_err = nullptr;
  std::mutex err_mu;
  for (int w = 0; w < t; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(err_mu);
          if (!first_err) first_err = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_err) std::rethrow_exception(first_err);
}

int default_threads() {
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

}  // namespace

Config Config::parse(const std::string& text) {
  Config c;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (t.front() == '[') {
      if (t.back() != ']') fail("config line " + std::to_string(lineno) + ": bad section header '" + t + "'");
      section = trim(t.substr(1, t.size() - 2));
      continue;
    }
    size_t eq = t.find('=');
    if (eq == std::string::npos) fail("config line " + std::to_string(lineno) + ": expected key=value, got '" + t + "'");
    std::string key = trim(t.substr(0, eq));
    std::string val = trim(t.substr(eq + 1));
    if (key.empty()) fail("config line " + std::to_string(lineno) + ": empty key");
    c.kv_[section.empty() ? key : section + "." + key] = val;
  }
  return c;
}

Config Config::load(const std::string& path) { return parse(read_text_file(path)); }

std::string Config::get_str(const std::string& key, const std::string& def) const {
  auto it = kv_.find(key);
  return it == kv_.end() ? def : it->second;
}

double Config::get_double(const std::string& key, double def) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return def;
  try {
    size_t pos = 0;
    double v = std::stod(it->second, &pos);
    if (pos != it->second.size()) fail("");
    return v;
  } catch (...) {
    fail("config key '" + key + "': expected number, got '" + it->second + "'");
  }
}

int64_t Config::get_int(const std::string& key, int64_t def) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return def;
  try {
    size_t pos = 0;
    int64_t v = std::stoll(it->second, &pos);
    if (pos != it->second.size()) fail("");
    return v;
  } catch (...) {
    fail("config key '" + key + "': expected integer, got '" + it->second + "'");
  }
}

bool Config::get_bool(const std::string& key, bool def) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return def;
  const std::string& v = it->second;
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  fail("config key '" + key + "': expected bool, got '" + v + "'");
}

void Config::set(const std::string& key, const std::string& value) { kv_[key] = value; }

void Config::set_double(const std::string& key, double value) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  kv_[key] = buf;
}

void Config::set_int(const std::string& key, int64_t value) { kv_[key] = std::to_string(value); }

void Config::merge(const Config& other) {
  for (const auto& [k, v] : other.kv_) kv_[k] = v;
}

std::string Config::to_text() const {
  // Root keys must precede any section header; a [section] line has no way
  // back to root scope on re-parse.
  std::ostringstream out;
  bool any = false;
  for (const auto& [k, v] : kv_) {
    if (k.find('.') != std::string::npos) continue;
    out << k << " = " << v << "\n";
    any = true;
  }
  std::string section;
  for (const auto& [k, v] : kv_) {
    size_t dot = k.rfind('.');
    if (dot == std::string::npos) continue;
    std::string sec = k.substr(0, dot);
    if (sec != section) {
      if (any) out << "\n";
      out << "[" << sec << "]\n";
      section = sec;
    }
    out << k.substr(dot + 1) << " = " << v << "\n";
    any = true;
  }
  return out.str();
}

std::string Manifest::to_text() const {
  std::ostringstream out;
  out << "[manifest]\nstage = " << stage << "\n\n";
  out << config.to_text();
  if (!inputs.empty()) {
    out << "\n[inputs]\n";
    for (const auto& [n, h] : inputs) out << n << " = " << h << "\n";
  }
  if (!outputs.empty()) {
    out << "\n[outputs]\n";
    for (const auto& [n, h] : outputs) out << n << " = " << h << "\n";
  }
  return out.str();
}

void Manifest::save(const std::string& path) const { write_text_file(path, to_text()); }

uint64_t hash_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open file for hashing: " + path);
  uint64_t h = kFnvOffset;
  char buf[65536];
  while (in) {
    in.read(buf, sizeof(buf));
    std::streamsize got = in.gcount();
    if (got > 0) h = hash_bytes(buf, static_cast<size_t>(got), h);
  }
  return h;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail("cannot write file: " + path);
  out << text;
  if (!out) fail("write failed: " + path);
}

}  // namespace dough
