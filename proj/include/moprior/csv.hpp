#pragma once

#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "moprior/errors.hpp"

namespace moprior {

// Minimal CSV writer. Values are formatted with enough digits to round-trip
// doubles, so written tables are deterministic and replayable.
class CsvWriter {
 public:
  explicit CsvWriter(const std::string& path) : out_(path, std::ios::trunc) {
    if (!out_) throw IoError("cannot open for writing: " + path);
  }

  void header(const std::vector<std::string>& names) { write_row(names); }

  CsvWriter& field(const std::string& v) {
    cells_.push_back(v);
    return *this;
  }
  CsvWriter& field(double v) {
    std::ostringstream ss;
    ss << std::setprecision(17) << v;
    cells_.push_back(ss.str());
    return *this;
  }
  CsvWriter& field(long v) {
    cells_.push_back(std::to_string(v));
    return *this;
  }
  CsvWriter& field(int v) {
    cells_.push_back(std::to_string(v));
    return *this;
  }

  void end_row() {
    write_row(cells_);
    cells_.clear();
  }

 private:
  void write_row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out_ << ',';
      out_ << cells[i];
    }
    out_ << '\n';
  }

  std::ofstream out_;
  std::vector<std::string> cells_;
};

}  // namespace moprior
