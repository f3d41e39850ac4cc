#include "bregcal/frame.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "bregcal/errors.hpp"

namespace bregcal {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (const char c : line) {
    if (c == ',') {
      cells.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  cells.push_back(cur);
  return cells;
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

Table read_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open file: " + path);
  Table t;
  std::string line;
  if (!std::getline(in, line)) {
    throw SchemaError("empty file: " + path);
  }
  t.header = split_line(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split_line(line);
    if (cells.size() != t.header.size()) {
      std::ostringstream msg;
      msg << path << ": row " << t.rows.size() + 2 << " has " << cells.size()
          << " cells, header has " << t.header.size();
      throw SchemaError(msg.str());
    }
    t.rows.push_back(std::move(cells));
  }
  return t;
}

int find_column(const Table& t, const std::string& name, bool required,
                const std::string& path) {
  for (std::size_t j = 0; j < t.header.size(); ++j) {
    if (t.header[j] == name) return static_cast<int>(j);
  }
  if (required) {
    throw SchemaError(path + ": missing required column '" + name + "'", name);
  }
  return -1;
}

double parse_double(const std::string& cell, const std::string& column,
                    std::size_t row) {
  double v = 0.0;
  const auto* begin = cell.data();
  const auto* end = begin + cell.size();
  const auto res = std::from_chars(begin, end, v);
  if (res.ec != std::errc() || res.ptr != end) {
    std::ostringstream msg;
    msg << "column '" << column << "' row " << row + 2
        << ": cannot parse numeric value '" << cell << "'";
    throw SchemaError(msg.str(), column);
  }
  return v;
}

// Columns x1..xp must be present contiguously from 1.
std::vector<int> x_columns(const Table& t, const std::string& path) {
  std::vector<int> cols;
  for (int k = 1;; ++k) {
    const int j = find_column(t, "x" + std::to_string(k), false, path);
    if (j < 0) break;
    cols.push_back(j);
  }
  if (cols.empty()) {
    throw SchemaError(path + ": no auxiliary columns x1..xp found", "x1");
  }
  return cols;
}

}  // namespace

RespondentFrame read_respondents(const std::string& path) {
  const Table t = read_table(path);
  const int id_col = find_column(t, "id", true, path);
  const int y_col = find_column(t, "y", true, path);
  const int pi_col = find_column(t, "pi", false, path);
  const std::vector<int> xc = x_columns(t, path);

  const auto n = static_cast<Eigen::Index>(t.rows.size());
  if (n == 0) throw SchemaError(path + ": no data rows");
  RespondentFrame f;
  f.ids.reserve(n);
  f.y.resize(n);
  f.X.resize(n, static_cast<Eigen::Index>(xc.size()));
  f.has_pi = pi_col >= 0;
  if (f.has_pi) f.pi.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = t.rows[i];
    f.ids.push_back(row[id_col]);
    f.y[i] = parse_double(row[y_col], "y", i);
    for (std::size_t k = 0; k < xc.size(); ++k) {
      f.X(i, static_cast<Eigen::Index>(k)) =
          parse_double(row[xc[k]], t.header[xc[k]], i);
    }
    if (f.has_pi) f.pi[i] = parse_double(row[pi_col], "pi", i);
  }
  return f;
}

PopulationFrame read_population(const std::string& path) {
  const Table t = read_table(path);
  const int id_col = find_column(t, "id", true, path);
  const int d_col = find_column(t, "delta", true, path);
  const std::vector<int> xc = x_columns(t, path);

  const auto n = static_cast<Eigen::Index>(t.rows.size());
  if (n == 0) throw SchemaError(path + ": no data rows");
  PopulationFrame f;
  f.ids.reserve(n);
  f.X.resize(n, static_cast<Eigen::Index>(xc.size()));
  f.delta.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = t.rows[i];
    f.ids.push_back(row[id_col]);
    for (std::size_t k = 0; k < xc.size(); ++k) {
      f.X(i, static_cast<Eigen::Index>(k)) =
          parse_double(row[xc[k]], t.header[xc[k]], i);
    }
    const double d = parse_double(row[d_col], "delta", i);
    if (d != 0.0 && d != 1.0) {
      throw SchemaError("column 'delta' must be 0 or 1", "delta");
    }
    f.delta[i] = static_cast<int>(d);
  }
  return f;
}

TargetsFrame read_targets(const std::string& path) {
  const Table t = read_table(path);
  if (t.rows.size() != 1) {
    throw SchemaError(path + ": targets file needs exactly one data row");
  }
  TargetsFrame f;
  f.names = t.header;
  f.values.resize(static_cast<Eigen::Index>(t.header.size()));
  for (std::size_t j = 0; j < t.header.size(); ++j) {
    f.values[static_cast<Eigen::Index>(j)] =
        parse_double(t.rows[0][j], t.header[j], 0);
  }
  return f;
}

void check_ids_subset(const RespondentFrame& resp, const PopulationFrame& pop) {
  std::unordered_set<std::string> pop_ids(pop.ids.begin(), pop.ids.end());
  for (const auto& id : resp.ids) {
    if (pop_ids.find(id) == pop_ids.end()) {
      throw SchemaError("respondent id '" + id + "' not found in population",
                        "id");
    }
  }
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_weights_csv(const std::string& path,
                       const std::vector<std::string>& ids,
                       const Eigen::VectorXd& weights) {
  std::ofstream out(path);
  if (!out) throw SchemaError("cannot write file: " + path);
  out << "id,weight\n";
  for (Eigen::Index i = 0; i < weights.size(); ++i) {
    out << ids[i] << ',' << format_double(weights[i]) << '\n';
  }
}

void write_table_csv(const std::string& path,
                     const std::vector<std::string>& header,
                     const std::vector<std::vector<std::string>>& rows) {
  std::ofstream out(path);
  if (!out) throw SchemaError("cannot write file: " + path);
  for (std::size_t j = 0; j < header.size(); ++j) {
    out << header[j] << (j + 1 < header.size() ? ',' : '\n');
  }
  for (const auto& row : rows) {
    for (std::size_t j = 0; j < row.size(); ++j) {
      out << row[j] << (j + 1 < row.size() ? ',' : '\n');
    }
  }
}

}  // namespace bregcal
