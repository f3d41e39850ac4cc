#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

namespace bregcal {

/// Respondent file: columns id, y, x1..xp, optional pi. UTF-8, header row,
/// '.' decimal separator.
struct RespondentFrame {
  std::vector<std::string> ids;
  Eigen::VectorXd y;
  Eigen::MatrixXd X;  // n x p, columns x1..xp in order
  Eigen::VectorXd pi;
  bool has_pi = false;
};

/// Population file: columns id, x1..xp, delta.
struct PopulationFrame {
  std::vector<std::string> ids;
  Eigen::MatrixXd X;
  Eigen::VectorXi delta;
};

/// Targets file: one column per auxiliary (x1..xp), a single data row of
/// population means or totals.
struct TargetsFrame {
  std::vector<std::string> names;
  Eigen::VectorXd values;
};

RespondentFrame read_respondents(const std::string& path);
PopulationFrame read_population(const std::string& path);
TargetsFrame read_targets(const std::string& path);

/// Requires every respondent id to appear among the population ids.
void check_ids_subset(const RespondentFrame& resp, const PopulationFrame& pop);

void write_weights_csv(const std::string& path,
                       const std::vector<std::string>& ids,
                       const Eigen::VectorXd& weights);

/// Generic writer: header plus rows of preformatted cells.
void write_table_csv(const std::string& path,
                     const std::vector<std::string>& header,
                     const std::vector<std::vector<std::string>>& rows);

std::string format_double(double v);

}  // namespace bregcal
