#include "cmil/metrics.hpp"

#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace cmil {

namespace {

constexpr const char* kHeader =
    "env_steps,success_rate,oracle_return,model_loss,disc_loss,gap_estimate,"
    "mean_disagreement,actor_loss,critic_loss,bc_nll,oracle_gap";

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

}  // namespace

const char* MetricsWriter::header() { return kHeader; }

MetricsWriter::MetricsWriter(const std::string& csv_path)
    : path_(csv_path), csv_(csv_path, std::ios::trunc), sidecar_(csv_path + ".time", std::ios::trunc) {
  if (!csv_) throw std::runtime_error("metrics: cannot open " + csv_path);
  if (!sidecar_) throw std::runtime_error("metrics: cannot open " + csv_path + ".time");
  csv_ << kHeader << "\n";
  csv_.flush();
}

void MetricsWriter::append(const MetricsRow& r) {
  csv_ << r.env_steps << ',' << fmt(r.success_rate) << ',' << fmt(r.oracle_return) << ','
       << fmt(r.model_loss) << ',' << fmt(r.disc_loss) << ',' << fmt(r.gap_estimate) << ','
       << fmt(r.mean_disagreement) << ',' << fmt(r.actor_loss) << ',' << fmt(r.critic_loss)
       << ',' << fmt(r.bc_nll) << ',' << fmt(r.oracle_gap) << "\n";
  csv_.flush();
  sidecar_ << r.env_steps << ',' << fmt(r.wall_clock_s) << "\n";
  sidecar_.flush();
}

int CsvTable::column_index(const std::string& name) const {
  for (std::size_t i = 0; i < columns.size(); ++i)
    if (columns[i] == name) return static_cast<int>(i);
  return -1;
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("csv: cannot open " + path);
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("csv: empty file " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::stringstream hs(line);
  std::string cell;
  while (std::getline(hs, cell, ',')) table.columns.push_back(cell);
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ls(line);
    while (std::getline(ls, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                 ": non-numeric cell '" + cell + "'");
      }
    }
    if (row.size() != table.columns.size())
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": column count mismatch");
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace cmil
