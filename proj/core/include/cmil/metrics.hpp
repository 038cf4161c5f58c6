#pragma once

#include <fstream>
#include <string>
#include <vector>

namespace cmil {

// One logged interval. Everything except wall_clock_s goes into the metrics
// CSV; wall-clock is written to a ".time" sidecar so the CSV itself is
// byte-identical across runs with the same config and seed.
struct MetricsRow {
  long env_steps = 0;
  double success_rate = 0.0;
  double oracle_return = 0.0;  // evaluation only
  double model_loss = 0.0;
  double disc_loss = 0.0;
  double gap_estimate = 0.0;
  double mean_disagreement = 0.0;
  double actor_loss = 0.0;
  double critic_loss = 0.0;
  double bc_nll = 0.0;
  double oracle_gap = 0.0;  // expert return minus policy return
  double wall_clock_s = 0.0;
};

class MetricsWriter {
 public:
  explicit MetricsWriter(const std::string& csv_path);

  void append(const MetricsRow& row);

  static const char* header();
  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::ofstream csv_;
  std::ofstream sidecar_;
};

// Minimal CSV reader for the plot tool: numeric columns under a header row.
struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  int column_index(const std::string& name) const;  // -1 if absent
};

CsvTable read_csv(const std::string& path);

}  // namespace cmil
