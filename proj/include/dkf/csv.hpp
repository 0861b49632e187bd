#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "dkf/errors.hpp"

namespace dkf {

// Minimal CSV writer. Every file starts with a '#' metadata line carrying the
// config hash, seed and library version so outputs are traceable to the run
// that produced them.
class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::string& metadata,
            const std::vector<std::string>& header)
      : out_(path) {
    if (!out_) throw ConfigError("cannot open output file: " + path);
    out_ << "# " << metadata << "\n";
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (i) out_ << ',';
      out_ << header[i];
    }
    out_ << '\n';
  }

  void row(const std::vector<double>& values) {
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (i) out_ << ',';
      out_ << format(values[i]);
    }
    out_ << '\n';
  }

  void raw_row(const std::string& line) { out_ << line << '\n'; }

  // Shortest round-trip representation; keeps re-runs byte-identical.
  static std::string format(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
  }

 private:
  std::ofstream out_;
};

// FNV-1a, used to stamp output files with a hash of their config.
inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace dkf
