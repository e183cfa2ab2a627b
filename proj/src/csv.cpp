#include "qte/csv.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "qte/error.hpp"

namespace qte {
namespace {

std::string trim(const std::string& s) {
  auto b = s.begin();
  auto e = s.end();
  while (b != e && std::isspace(static_cast<unsigned char>(*b))) ++b;
  while (e != b && std::isspace(static_cast<unsigned char>(*(e - 1)))) --e;
  return {b, e};
}

std::vector<std::string> split_row(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur.push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  fields.push_back(trim(cur));
  return fields;
}

bool is_missing(const std::string& f) {
  std::string lower(f);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return lower.empty() || lower == "na" || lower == "nan" || lower == "null";
}

double parse_double(const std::string& f, const std::string& column, std::size_t row) {
  if (is_missing(f)) {
    throw DataError("missing value in column '" + column + "' at data row " + std::to_string(row));
  }
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
  if (ec != std::errc() || ptr != f.data() + f.size() || !std::isfinite(v)) {
    throw DataError("non-numeric value '" + f + "' in column '" + column + "' at data row " +
                    std::to_string(row));
  }
  return v;
}

}  // namespace

Dataset read_dataset_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("input is empty (expected a header row)");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_row(line);

  auto find_col = [&](const std::string& name) -> std::size_t {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw DataError("required column '" + name + "' is missing");
    if (std::count(header.begin(), header.end(), name) > 1) {
      throw DataError("column '" + name + "' appears more than once");
    }
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t iy = find_col("y");
  const std::size_t ia = find_col("a");
  const std::size_t is = find_col("s");
  std::vector<std::size_t> cov_cols;
  std::vector<std::string> cov_names;
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (j == iy || j == ia || j == is) continue;
    if (header[j].empty()) throw DataError("empty column name in header at position " + std::to_string(j + 1));
    cov_cols.push_back(j);
    cov_names.push_back(header[j]);
  }

  std::vector<double> y;
  std::vector<int> a;
  std::vector<std::string> s;
  std::vector<double> xs;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    ++row;
    const auto f = split_row(line);
    if (f.size() != header.size()) {
      throw DataError("data row " + std::to_string(row) + " has " + std::to_string(f.size()) +
                      " fields, header has " + std::to_string(header.size()));
    }
    y.push_back(parse_double(f[iy], "y", row));
    const double av = parse_double(f[ia], "a", row);
    if (av != 0.0 && av != 1.0) {
      throw DataError("column 'a' must be 0 or 1 (data row " + std::to_string(row) + ")");
    }
    a.push_back(static_cast<int>(av));
    if (is_missing(f[is])) {
      throw DataError("missing value in column 's' at data row " + std::to_string(row));
    }
    s.push_back(f[is]);
    for (std::size_t c = 0; c < cov_cols.size(); ++c) xs.push_back(parse_double(f[cov_cols[c]], cov_names[c], row));
  }
  if (row == 0) throw DataError("input has a header but no data rows");

  const auto n = static_cast<Eigen::Index>(row);
  const auto d = static_cast<Eigen::Index>(cov_cols.size());
  Eigen::MatrixXd x(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) x(i, j) = xs[static_cast<std::size_t>(i * d + j)];
  }
  Eigen::VectorXd yv = Eigen::Map<Eigen::VectorXd>(y.data(), n);
  return Dataset::from_labels(std::move(yv), std::move(a), s, std::move(x), std::move(cov_names));
}

Dataset read_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::ios_base::failure("cannot open input file '" + path + "'");
  return read_dataset_csv(in);
}

void write_dataset_csv(std::ostream& out, const Dataset& data) {
  out << "y,a,s";
  for (const auto& name : data.covariate_names()) out << ',' << name;
  out << '\n';
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (std::size_t i = 0; i < data.n(); ++i) {
    out << data.y(i) << ',' << data.a(i) << ',' << data.label(data.stratum(i));
    for (std::size_t j = 0; j < data.dim(); ++j) {
      out << ',' << data.x()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
    out << '\n';
  }
}

}  // namespace qte
