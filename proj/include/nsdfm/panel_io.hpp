#pragma once

#include "nsdfm/linalg.hpp"
#include "nsdfm/preprocess.hpp"

#include <stdexcept>
#include <string>
#include <vector>

namespace nsdfm {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Parsed date label: quarterly "YYYYQn" or ISO "YYYY-MM-DD" / "YYYY-MM".
struct DateKey {
  int year = 0;
  int month = 0;  // 1..12; first month of the quarter for YYYYQn labels
  int day = 0;    // 0 when absent
  bool quarterly = false;

  int quarter_index() const { return 4 * year + (month - 1) / 3; }
  int month_index() const { return 12 * year + month - 1; }
  long ordinal() const { return (static_cast<long>(year) * 13 + month) * 32 + day; }
};

DateKey parse_date(const std::string& s);
std::string quarter_label(int quarter_index);  // inverse of quarter_index()

struct PanelData {
  std::vector<std::string> ids;
  std::vector<std::string> dates;
  Matrix x;  // n x T

  Eigen::Index n() const { return x.rows(); }
  Eigen::Index T() const { return x.cols(); }
};

/// First column dates, header row of series ids, no missing cells.
PanelData read_panel_csv(const std::string& path);
void write_panel_csv(const std::string& path, const PanelData& panel);

/// Quarterly keys must step by exactly one.
void check_gapless_quarters(const std::vector<std::string>& dates);

/// Per-series metadata: columns id, transform, sa, detrend, tie_group, rho,
/// frequency, winsorize (all but id optional).
std::vector<SeriesMeta> read_metadata_csv(const std::string& path);
void write_metadata_csv(const std::string& path, const std::vector<SeriesMeta>& meta);

/// Numeric table with a header row and an optional leading label column.
struct Table {
  std::vector<std::string> header;  // includes the label column name when labels are present
  std::vector<std::string> labels;
  Matrix values;  // rows x numeric columns
};

void write_table_csv(const std::string& path, const Table& table);
Table read_table_csv(const std::string& path, bool has_labels);

/// Matrix with generated column names and optional row labels.
void write_matrix_csv(const std::string& path, const Matrix& m, const std::vector<std::string>& columns,
                      const std::vector<std::string>& row_labels = {}, const std::string& label_name = "id");

std::string format_number(double v);  // %.15g

}  // namespace nsdfm
