#include "rerand/csv.hpp"

#include <cmath>
#include <charconv>
#include <fstream>
#include <sstream>

#include "rerand/errors.hpp"

namespace rerand {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) {
    // trim spaces and a trailing CR from Windows line endings
    while (!field.empty() && (field.back() == ' ' || field.back() == '\r'))
      field.pop_back();
    std::size_t start = 0;
    while (start < field.size() && field[start] == ' ') ++start;
    fields.push_back(field.substr(start));
  }
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

double parse_cell(const std::string& text, const std::string& path, std::size_t row,
                  std::size_t col) {
  const auto fail = [&](const std::string& why) {
    throw Error(ErrorCode::io_error, path + ": row " + std::to_string(row) +
                                         ", column " + std::to_string(col + 1) + ": " + why);
  };
  if (text.empty()) fail("empty cell");
  double value = 0.0;
  const char* begin = text.data();
  const char* end = begin + text.size();
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end) fail("cannot parse '" + text + "' as a number");
  if (!std::isfinite(value)) fail("non-finite value");
  return value;
}

}  // namespace

PopulationCsv load_population_csv(const std::string& path, int n_treated) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io_error, "cannot open " + path);

  std::string line;
  if (!std::getline(in, line))
    throw Error(ErrorCode::io_error, path + ": missing header row");
  const std::vector<std::string> header = split_line(line);
  if (header.empty()) throw Error(ErrorCode::io_error, path + ": empty header row");

  int y1_col = -1, y0_col = -1;
  std::vector<int> covariate_cols;
  std::vector<std::string> covariate_names;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c] == "y1")
      y1_col = static_cast<int>(c);
    else if (header[c] == "y0")
      y0_col = static_cast<int>(c);
    else {
      covariate_cols.push_back(static_cast<int>(c));
      covariate_names.push_back(header[c]);
    }
  }
  if ((y1_col >= 0) != (y0_col >= 0))
    throw Error(ErrorCode::io_error,
                path + ": outcome columns must appear in pairs (y1 and y0)");
  if (covariate_cols.empty())
    throw Error(ErrorCode::io_error, path + ": no covariate columns");

  std::vector<std::vector<double>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const std::vector<std::string> fields = split_line(line);
    if (fields.size() != header.size())
      throw Error(ErrorCode::io_error, path + ": row " + std::to_string(line_no) +
                                           " has " + std::to_string(fields.size()) +
                                           " cells, expected " +
                                           std::to_string(header.size()));
    std::vector<double> values(fields.size());
    for (std::size_t c = 0; c < fields.size(); ++c)
      values[c] = parse_cell(fields[c], path, line_no, c);
    rows.push_back(std::move(values));
  }
  const int n = static_cast<int>(rows.size());
  if (n < 2) throw Error(ErrorCode::degenerate_population, path + ": fewer than 2 units");

  const int p = static_cast<int>(covariate_cols.size());
  RowMatrixXd x(n, p);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < p; ++j)
      x(i, j) = rows[static_cast<std::size_t>(i)]
                    [static_cast<std::size_t>(covariate_cols[static_cast<std::size_t>(j)])];

  if (n_treated < 0) n_treated = n / 2;
  if (y1_col < 0)
    return PopulationCsv{Population(std::move(x), n_treated, n - n_treated),
                         std::move(covariate_names)};

  Eigen::VectorXd y1(n), y0(n);
  for (int i = 0; i < n; ++i) {
    y1[i] = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(y1_col)];
    y0[i] = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(y0_col)];
  }
  return PopulationCsv{
      Population(std::move(x), std::move(y1), std::move(y0), n_treated, n - n_treated),
      std::move(covariate_names)};
}

void save_population_csv(const std::string& path, const Population& pop,
                         const std::vector<std::string>& covariate_names) {
  if (static_cast<int>(covariate_names.size()) != pop.dim())
    throw Error(ErrorCode::shape_mismatch, "need one name per covariate column");
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::io_error, "cannot write " + path);
  out.precision(17);

  for (std::size_t c = 0; c < covariate_names.size(); ++c) {
    if (c) out << ',';
    out << covariate_names[c];
  }
  if (pop.has_outcomes()) out << ",y1,y0";
  out << '\n';

  for (int i = 0; i < pop.size(); ++i) {
    for (int j = 0; j < pop.dim(); ++j) {
      if (j) out << ',';
      out << pop.covariates()(i, j);
    }
    if (pop.has_outcomes()) out << ',' << pop.y1()[i] << ',' << pop.y0()[i];
    out << '\n';
  }
  if (!out) throw Error(ErrorCode::io_error, "write failed for " + path);
}

std::vector<double> load_vector_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io_error, "cannot open " + path);
  std::vector<double> values;
  std::string line;
  std::size_t line_no = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const std::vector<std::string> fields = split_line(line);
    if (fields.size() != 1)
      throw Error(ErrorCode::io_error, path + ": expected a single column");
    if (first) {
      first = false;
      // tolerate a header line
      double probe = 0.0;
      const char* begin = fields[0].data();
      const char* end = begin + fields[0].size();
      if (std::from_chars(begin, end, probe).ptr != end) continue;
    }
    values.push_back(parse_cell(fields[0], path, line_no, 0));
  }
  if (values.empty()) throw Error(ErrorCode::io_error, path + ": no values");
  return values;
}

}  // namespace rerand
