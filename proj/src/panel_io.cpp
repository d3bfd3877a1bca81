#include "nsdfm/panel_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace nsdfm {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n\"");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n\"");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  bool quoted = false;
  for (char ch : line) {
    if (ch == '"') {
      quoted = !quoted;
    } else if (ch == ',' && !quoted) {
      out.push_back(trim(cell));
      cell.clear();
    } else {
      cell.push_back(ch);
    }
  }
  out.push_back(trim(cell));
  return out;
}

std::vector<std::vector<std::string>> read_rows(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::vector<std::vector<std::string>> rows;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (first && line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line = line.substr(3);  // BOM
    first = false;
    if (trim(line).empty()) continue;
    rows.push_back(split_csv_line(line));
  }
  return rows;
}

double parse_number(const std::string& s, std::size_t row, std::size_t col, const std::string& path) {
  if (s.empty()) {
    throw IoError(path + ": missing value at row " + std::to_string(row) + ", column " + std::to_string(col));
  }
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size()) {
    throw IoError(path + ": invalid number '" + s + "' at row " + std::to_string(row) + ", column " +
                  std::to_string(col));
  }
  return v;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  return out;
}

bool parse_int(const std::string& s, int& v) {
  if (s.empty()) return false;
  for (char c : s) {
    if (c < '0' || c > '9') return false;
  }
  v = std::stoi(s);
  return true;
}

}  // namespace

std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.15g", v);
  return buf;
}

DateKey parse_date(const std::string& raw) {
  const std::string s = trim(raw);
  DateKey k;
  const auto qpos = s.find_first_of("Qq");
  if (qpos != std::string::npos) {
    int y = 0, q = 0;
    if (!parse_int(s.substr(0, qpos), y) || !parse_int(s.substr(qpos + 1), q) || q < 1 || q > 4) {
      throw IoError("invalid quarterly date '" + s + "'");
    }
    k.year = y;
    k.month = 3 * (q - 1) + 1;
    k.quarterly = true;
    return k;
  }
  std::vector<std::string> parts;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, '-')) parts.push_back(part);
  int y = 0, m = 0, d = 0;
  if (parts.size() < 2 || parts.size() > 3 || !parse_int(parts[0], y) || !parse_int(parts[1], m) || m < 1 || m > 12 ||
      (parts.size() == 3 && (!parse_int(parts[2], d) || d < 1 || d > 31))) {
    throw IoError("invalid date '" + s + "'");
  }
  k.year = y;
  k.month = m;
  k.day = d;
  return k;
}

std::string quarter_label(int qi) {
  const int year = qi >= 0 ? qi / 4 : (qi - 3) / 4;
  return std::to_string(year) + "Q" + std::to_string(qi - 4 * year + 1);
}

PanelData read_panel_csv(const std::string& path) {
  const auto rows = read_rows(path);
  if (rows.size() < 2) throw IoError(path + ": need a header and at least one data row");
  PanelData p;
  const auto& header = rows.front();
  if (header.size() < 2) throw IoError(path + ": need a date column and at least one series");
  p.ids.assign(header.begin() + 1, header.end());
  const std::size_t n = p.ids.size();
  const std::size_t T = rows.size() - 1;
  p.x.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(T));
  long last = 0;
  for (std::size_t t = 0; t < T; ++t) {
    const auto& row = rows[t + 1];
    const std::size_t line = t + 2;
    if (row.size() > n + 1) throw IoError(path + ": too many cells at row " + std::to_string(line));
    const DateKey key = parse_date(row.front());
    if (t > 0 && key.ordinal() <= last) {
      throw IoError(path + ": dates not strictly increasing at row " + std::to_string(line));
    }
    last = key.ordinal();
    p.dates.push_back(row.front());
    for (std::size_t i = 0; i < n; ++i) {
      const std::string cell = i + 1 < row.size() ? row[i + 1] : "";
      p.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)) = parse_number(cell, line, i + 2, path);
    }
  }
  return p;
}

void write_panel_csv(const std::string& path, const PanelData& p) {
  auto out = open_out(path);
  out << "date";
  for (const auto& id : p.ids) out << ',' << id;
  out << '\n';
  for (Eigen::Index t = 0; t < p.x.cols(); ++t) {
    out << p.dates[static_cast<std::size_t>(t)];
    for (Eigen::Index i = 0; i < p.x.rows(); ++i) out << ',' << format_number(p.x(i, t));
    out << '\n';
  }
}

void check_gapless_quarters(const std::vector<std::string>& dates) {
  for (std::size_t t = 1; t < dates.size(); ++t) {
    const DateKey a = parse_date(dates[t - 1]);
    const DateKey b = parse_date(dates[t]);
    if (b.quarter_index() != a.quarter_index() + 1) {
      throw IoError("dates are not a gapless quarterly sequence between " + dates[t - 1] + " and " + dates[t]);
    }
  }
}

std::vector<SeriesMeta> read_metadata_csv(const std::string& path) {
  const auto rows = read_rows(path);
  if (rows.empty()) throw IoError(path + ": empty metadata file");
  const auto& header = rows.front();
  auto column = [&](const std::string& name) -> int {
    for (std::size_t j = 0; j < header.size(); ++j) {
      if (header[j] == name) return static_cast<int>(j);
    }
    return -1;
  };
  const int c_id = column("id");
  if (c_id < 0) throw IoError(path + ": metadata needs an 'id' column");
  const int c_tr = column("transform"), c_sa = column("sa"), c_dt = column("detrend"), c_tie = column("tie_group"),
            c_rho = column("rho"), c_fr = column("frequency"), c_w = column("winsorize");
  std::vector<SeriesMeta> out;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    auto cell = [&](int c) { return c >= 0 && static_cast<std::size_t>(c) < row.size() ? row[c] : std::string(); };
    SeriesMeta m;
    m.id = cell(c_id);
    if (m.id.empty()) throw IoError(path + ": empty id at row " + std::to_string(r + 1));
    try {
      if (!cell(c_tr).empty()) m.transform = parse_transform(cell(c_tr));
      m.detrend_mode = parse_detrend_mode(cell(c_dt));
      m.rho_mode = parse_rho_mode(cell(c_rho));
      m.frequency = parse_frequency(cell(c_fr));
    } catch (const PreprocessError& e) {
      throw IoError(path + ": row " + std::to_string(r + 1) + ": " + e.what());
    }
    const std::string sa = cell(c_sa);
    m.sa = !(sa == "0" || sa == "false" || sa == "no");
    if (!cell(c_tie).empty()) m.tie_group = cell(c_tie);
    if (!cell(c_w).empty()) m.winsorize_mad = parse_number(cell(c_w), r + 1, static_cast<std::size_t>(c_w + 1), path);
    out.push_back(std::move(m));
  }
  return out;
}

void write_metadata_csv(const std::string& path, const std::vector<SeriesMeta>& meta) {
  auto out = open_out(path);
  out << "id,transform,sa,detrend,tie_group,rho,frequency,winsorize\n";
  for (const auto& m : meta) {
    const std::string freq = m.frequency == Frequency::quarterly ? "quarterly"
                             : m.frequency == Frequency::monthly ? "monthly"
                                                                 : "daily";
    out << m.id << ',' << static_cast<int>(m.transform) << ',' << (m.sa ? 1 : 0) << ',' << to_string(m.detrend_mode)
        << ',' << m.tie_group.value_or("") << ',' << to_string(m.rho_mode) << ',' << freq << ','
        << format_number(m.winsorize_mad) << '\n';
  }
}

void write_table_csv(const std::string& path, const Table& table) {
  auto out = open_out(path);
  for (std::size_t j = 0; j < table.header.size(); ++j) out << (j ? "," : "") << table.header[j];
  out << '\n';
  for (Eigen::Index i = 0; i < table.values.rows(); ++i) {
    bool first = true;
    if (!table.labels.empty()) {
      out << table.labels[static_cast<std::size_t>(i)];
      first = false;
    }
    for (Eigen::Index j = 0; j < table.values.cols(); ++j) {
      out << (first ? "" : ",") << format_number(table.values(i, j));
      first = false;
    }
    out << '\n';
  }
}

Table read_table_csv(const std::string& path, bool has_labels) {
  const auto rows = read_rows(path);
  if (rows.empty()) throw IoError(path + ": empty table");
  Table t;
  t.header = rows.front();
  const std::size_t off = has_labels ? 1 : 0;
  if (t.header.size() < off) throw IoError(path + ": malformed header");
  const std::size_t cols = t.header.size() - off;
  t.values.resize(static_cast<Eigen::Index>(rows.size() - 1), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() != t.header.size()) {
      throw IoError(path + ": row " + std::to_string(r + 1) + " has " + std::to_string(row.size()) + " cells, expected " +
                    std::to_string(t.header.size()));
    }
    if (has_labels) t.labels.push_back(row.front());
    for (std::size_t j = 0; j < cols; ++j) {
      t.values(static_cast<Eigen::Index>(r - 1), static_cast<Eigen::Index>(j)) = parse_number(row[j + off], r + 1, j + off + 1, path);
    }
  }
  return t;
}

void write_matrix_csv(const std::string& path, const Matrix& m, const std::vector<std::string>& columns,
                      const std::vector<std::string>& row_labels, const std::string& label_name) {
  Table t;
  if (!row_labels.empty()) t.header.push_back(label_name);
  t.header.insert(t.header.end(), columns.begin(), columns.end());
  t.labels = row_labels;
  t.values = m;
  write_table_csv(path, t);
}

}  // namespace nsdfm
