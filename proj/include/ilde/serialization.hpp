#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace ilde {

// Round-trip safe text formatting for doubles.
inline std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

// Plain ordered key-value text format used for environments, demo sets,
// models, configs and manifests:
//
//   # comment
//   key = value
//   vec_key = v0 v1 v2 ...
//
// Keys may repeat only if the reader asks for a list.
class KvWriter {
 public:
  void put(const std::string& key, const std::string& value) {
    lines_.push_back(key + " = " + value);
  }
  void put(const std::string& key, std::int64_t value) { put(key, std::to_string(value)); }
  void put(const std::string& key, int value) { put(key, std::to_string(value)); }
  void put(const std::string& key, double value) { put(key, format_double(value)); }
  void put(const std::string& key, const std::vector<double>& values) {
    std::string s;
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (i) s += ' ';
      s += format_double(values[i]);
    }
    lines_.push_back(key + " = " + s);
  }
  void comment(const std::string& text) { lines_.push_back("# " + text); }

  std::string str() const {
    std::string out;
    for (const auto& l : lines_) out += l + "\n";
    return out;
  }

  void save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f << str();
  }

 private:
  std::vector<std::string> lines_;
};

struct KvEntry {
  std::string key;
  std::string value;
  int line = 0;
};

class KvReader {
 public:
  static KvReader from_string(const std::string& text) {
    KvReader r;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      std::size_t b = line.find_first_not_of(" \t\r");
      if (b == std::string::npos) continue;
      if (line[b] == '#') continue;
      std::size_t eq = line.find('=');
      if (eq == std::string::npos)
        throw std::runtime_error("parse error at line " + std::to_string(lineno) +
                                 ": expected 'key = value'");
      std::string key = trim(line.substr(0, eq));
      std::string value = trim(line.substr(eq + 1));
      if (key.empty())
        throw std::runtime_error("parse error at line " + std::to_string(lineno) + ": empty key");
      r.entries_.push_back({key, value, lineno});
    }
    return r;
  }

  static KvReader from_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return from_string(ss.str());
  }

  bool has(const std::string& key) const { return find(key) != nullptr; }

  std::string get_string(const std::string& key) const {
    const KvEntry* e = find(key);
    if (!e) throw std::runtime_error("missing key: " + key);
    return e->value;
  }
  std::string get_string(const std::string& key, const std::string& fallback) const {
    const KvEntry* e = find(key);
    return e ? e->value : fallback;
  }

  std::int64_t get_int(const std::string& key) const { return parse_int(*require(key)); }
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const {
    const KvEntry* e = find(key);
    return e ? parse_int(*e) : fallback;
  }

  double get_double(const std::string& key) const { return parse_double(*require(key)); }
  double get_double(const std::string& key, double fallback) const {
    const KvEntry* e = find(key);
    return e ? parse_double(*e) : fallback;
  }

  std::vector<double> get_vector(const std::string& key) const {
    const KvEntry* e = require(key);
    std::vector<double> out;
    std::istringstream in(e->value);
    std::string tok;
    while (in >> tok) out.push_back(parse_double_token(tok, e->line));
    return out;
  }

  std::vector<double> get_vector(const std::string& key, const std::vector<double>& fallback) const {
    return has(key) ? get_vector(key) : fallback;
  }

  const std::vector<KvEntry>& entries() const { return entries_; }

 private:
  static std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }

  const KvEntry* find(const std::string& key) const {
    for (const auto& e : entries_)
      if (e.key == key) return &e;
    return nullptr;
  }
  const KvEntry* require(const std::string& key) const {
    const KvEntry* e = find(key);
    if (!e) throw std::runtime_error("missing key: " + key);
    return e;
  }

  static std::int64_t parse_int(const KvEntry& e) {
    try {
      std::size_t pos = 0;
      std::int64_t v = std::stoll(e.value, &pos);
      if (pos != e.value.size()) throw std::invalid_argument("trailing");
      return v;
    } catch (const std::exception&) {
      throw std::runtime_error("parse error at line " + std::to_string(e.line) +
                               ": expected integer for key '" + e.key + "'");
    }
  }
  static double parse_double(const KvEntry& e) { return parse_double_token(e.value, e.line); }
  static double parse_double_token(const std::string& tok, int line) {
    try {
      std::size_t pos = 0;
      double v = std::stod(tok, &pos);
      if (pos != tok.size()) throw std::invalid_argument("trailing");
      return v;
    } catch (const std::exception&) {
      throw std::runtime_error("parse error at line " + std::to_string(line) +
                               ": expected number, got '" + tok + "'");
    }
  }

  std::vector<KvEntry> entries_;
};

// FNV-1a over file/string content; used for config hashing in manifests.
inline std::uint64_t content_hash(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : text) {
    h ^= static_cast<std::uint8_t>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace ilde
