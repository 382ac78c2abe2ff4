#ifndef EFM_CSV_HPP
#define EFM_CSV_HPP

#include <Eigen/Dense>
#include <map>
#include <string>
#include <tuple>
#include <vector>

namespace efm {

/// Dense numeric CSV ('.' decimal, comma separated). A non-numeric first
/// line is treated as a header and skipped.
Eigen::MatrixXd read_csv_matrix(const std::string& path);

/// Writes with round-trip precision (%.17g). Header optional.
void write_csv_matrix(const std::string& path, const Eigen::MatrixXd& m,
                      const std::vector<std::string>& header = {});

/// Flat key=value metadata files ('#' comments allowed).
std::map<std::string, std::string> read_kv(const std::string& path);
void write_kv(const std::string& path,
              const std::vector<std::pair<std::string, std::string>>& entries);

/// Multiplex edge list: rows (i, j, layer), 0-based vertex ids.
std::vector<std::tuple<int, int, int>> read_edge_list(const std::string& path);

}  // namespace efm

#endif  // EFM_CSV_HPP
