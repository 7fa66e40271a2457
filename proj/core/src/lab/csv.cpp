#include "srotlab/lab/csv.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "srotlab/errors.hpp"

namespace srotlab::lab {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const Mat& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (c > 0) out << ',';
    out << header[c];
  }
  out << '\n';
  for (int r = 0; r < rows.rows(); ++r) {
    for (int c = 0; c < rows.cols(); ++c) {
      if (c > 0) out << ',';
      out << format_double(rows(r, c));
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path);
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty CSV: " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();

  CsvTable table;
  {
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) table.header.push_back(field);
  }
  const int cols = static_cast<int>(table.header.size());
  if (cols == 0) throw IoError("CSV header has no columns: " + path);

  std::vector<double> values;
  int rows = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    int c = 0;
    while (std::getline(ss, field, ',')) {
      try {
        values.push_back(std::stod(field));
      } catch (const std::exception&) {
        throw IoError("non-numeric CSV field '" + field + "' in " + path);
      }
      ++c;
    }
    if (c != cols) {
      throw IoError("ragged CSV row in " + path);
    }
    ++rows;
  }
  table.rows.resize(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      table.rows(r, c) = values[static_cast<std::size_t>(r) * cols + c];
    }
  }
  return table;
}

MeasureCsv read_measure_csv(const std::string& path) {
  const CsvTable table = read_csv(path);
  if (table.rows.cols() < 2) {
    throw IoError("measure CSV needs coordinate columns plus a weight column: " + path);
  }
  MeasureCsv m;
  m.points = table.rows.leftCols(table.rows.cols() - 1);
  m.weights = table.rows.rightCols(1);
  return m;
}

void write_measure_csv(const std::string& path, const Mat& points,
                       const Vec& weights) {
  Mat rows(points.rows(), points.cols() + 1);
  rows.leftCols(points.cols()) = points;
  rows.rightCols(1) = weights;
  std::vector<std::string> header;
  for (int c = 0; c < points.cols(); ++c) {
    header.push_back("x" + std::to_string(c + 1));
  }
  header.push_back("weight");
  write_csv(path, header, rows);
}

}  // namespace srotlab::lab
