#pragma once

#include <string>
#include <vector>

#include "srotlab/frames.hpp"

namespace srotlab::lab {

/// Writes a matrix as CSV with mandatory header, '.' decimal, UTF-8, one row
/// per line, doubles rendered with %.17g (round-trip exact).
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const Mat& rows);

struct CsvTable {
  std::vector<std::string> header;
  Mat rows;
};

/// Reads a CSV with header; every field must parse as a double.
CsvTable read_csv(const std::string& path);

/// Measure CSV layout: coordinate columns then a final weight column.
struct MeasureCsv {
  Mat points;
  Vec weights;
};
MeasureCsv read_measure_csv(const std::string& path);
void write_measure_csv(const std::string& path, const Mat& points,
                       const Vec& weights);

std::string format_double(double v);

}  // namespace srotlab::lab
