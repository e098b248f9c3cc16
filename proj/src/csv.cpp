#include "scorerule/csv.hpp"

#include <fstream>
#include <sstream>
#include <vector>

#include "scorerule/errors.hpp"

namespace scorerule {

namespace {

bool parse_row(const std::string& line, std::vector<double>& out) {
  out.clear();
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) {
    try {
      std::size_t used = 0;
      const double v = std::stod(field, &used);
      while (used < field.size() && std::isspace(static_cast<unsigned char>(field[used]))) {
        ++used;
      }
      if (used != field.size()) return false;
      out.push_back(v);
    } catch (const std::exception&) {
      return false;
    }
  }
  return !out.empty();
}

}  // namespace

Eigen::MatrixXd parse_csv_text(const std::string& text) {
  std::stringstream ss(text);
  std::string line;
  std::vector<std::vector<double>> rows;
  bool first = true;
  while (std::getline(ss, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    if (!parse_row(line, row)) {
      if (first) {  // header
        first = false;
        continue;
      }
      throw ScoreRuleError("non-numeric CSV row: " + line);
    }
    first = false;
    if (!rows.empty() && rows.front().size() != row.size()) {
      throw ScoreRuleError("ragged CSV: expected " + std::to_string(rows.front().size()) +
                           " columns");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ScoreRuleError("CSV has no data rows");
  Eigen::MatrixXd m(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(i, j) = rows[i][j];
  }
  return m;
}

Eigen::MatrixXd read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ScoreRuleError("cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_csv_text(buf.str());
}

}  // namespace scorerule
