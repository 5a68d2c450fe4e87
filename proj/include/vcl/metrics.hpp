#pragma once

#include <optional>
#include <string>
#include <vector>

namespace vcl {

// One JSONL row of training/evaluation telemetry. Absent components are
// serialized as null.
struct MetricsRecord {
  std::size_t epoch = 0;
  std::string split;     // "train" or "test"
  std::string protocol;  // pretext | linear | semi | finetune | fuse
  std::optional<double> loss_total;
  std::optional<double> loss_infonce;
  std::optional<double> loss_kl_q;
  std::optional<double> loss_kl_k;
  std::optional<double> ce_loss;
  std::optional<double> top1;
  double seconds = 0.0;

  std::string to_json() const;
};

// Appends records to a JSONL file, one object per line.
class MetricsWriter {
 public:
  MetricsWriter() = default;
  // append=false truncates any existing file first.
  explicit MetricsWriter(const std::string& path, bool append = false);
  void write(const MetricsRecord& r);
  const std::vector<MetricsRecord>& records() const { return records_; }

 private:
  std::string path_;
  std::vector<MetricsRecord> records_;
};

}  // namespace vcl
