#include "efm/csv.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace efm {

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

bool parse_double(const std::string& s, double* out) {
  const char* b = s.c_str();
  char* end = nullptr;
  double v = std::strtod(b, &end);
  if (end == b) return false;
  while (*end == ' ' || *end == '\t') ++end;
  if (*end != '\0') return false;
  *out = v;
  return true;
}

}  // namespace

Eigen::MatrixXd read_csv_matrix(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    auto fields = split_fields(line);
    std::vector<double> row;
    row.reserve(fields.size());
    bool ok = true;
    for (const auto& f : fields) {
      double v;
      if (!parse_double(f, &v)) {
        ok = false;
        break;
      }
      row.push_back(v);
    }
    if (!ok) {
      if (first) {
        first = false;
        continue;  // header row
      }
      throw std::runtime_error("non-numeric field in " + path + ": " + line);
    }
    first = false;
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw std::runtime_error("ragged rows in " + path);
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error("no data rows in " + path);
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()),
                    static_cast<Eigen::Index>(rows.front().size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      m(i, j) = rows[static_cast<size_t>(i)][static_cast<size_t>(j)];
  return m;
}

void write_csv_matrix(const std::string& path, const Eigen::MatrixXd& m,
                      const std::vector<std::string>& header) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::runtime_error("cannot write " + path);
  if (!header.empty()) {
    for (size_t j = 0; j < header.size(); ++j) {
      std::fputs(header[j].c_str(), f);
      std::fputc(j + 1 < header.size() ? ',' : '\n', f);
    }
  }
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      std::fprintf(f, "%.17g%c", m(i, j), j + 1 < m.cols() ? ',' : '\n');
    }
  }
  std::fclose(f);
}

std::map<std::string, std::string> read_kv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    auto pos = line.find('=');
    if (pos == std::string::npos) {
      throw std::runtime_error("malformed key=value line in " + path + ": " + line);
    }
    kv[line.substr(0, pos)] = line.substr(pos + 1);
  }
  return kv;
}

void write_kv(const std::string& path,
              const std::vector<std::pair<std::string, std::string>>& entries) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (const auto& [k, v] : entries) out << k << "=" << v << "\n";
}

std::vector<std::tuple<int, int, int>> read_edge_list(const std::string& path) {
  Eigen::MatrixXd m = read_csv_matrix(path);
  if (m.cols() != 3) {
    throw std::runtime_error("edge list must have columns (i, j, layer): " + path);
  }
  std::vector<std::tuple<int, int, int>> edges;
  edges.reserve(static_cast<size_t>(m.rows()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    edges.emplace_back(static_cast<int>(m(r, 0)), static_cast<int>(m(r, 1)),
                       static_cast<int>(m(r, 2)));
  }
  return edges;
}

}  // namespace efm
