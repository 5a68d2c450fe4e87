#include "vcl/metrics.hpp"

#include <fstream>

#include <json.hpp>

#include "vcl/errors.hpp"

namespace vcl {

std::string MetricsRecord::to_json() const {
  nlohmann::ordered_json j;
  j["epoch"] = epoch;
  j["split"] = split;
  j["protocol"] = protocol;
  auto put = [&](const char* key, const std::optional<double>& v) {
    if (v.has_value()) {
      j[key] = *v;
    } else {
      j[key] = nullptr;
    }
  };
  put("loss_total", loss_total);
  put("loss_infonce", loss_infonce);
  put("loss_kl_q", loss_kl_q);
  put("loss_kl_k", loss_kl_k);
  put("ce_loss", ce_loss);
  put("top1", top1);
  j["seconds"] = seconds;
  return j.dump();
}

MetricsWriter::MetricsWriter(const std::string& path, bool append)
    : path_(path) {
  std::ofstream out(path_, append ? std::ios::app : std::ios::trunc);
  if (!out) throw FormatError("metrics: cannot open " + path_ + " for writing");
}

void MetricsWriter::write(const MetricsRecord& r) {
  records_.push_back(r);
  if (path_.empty()) return;
  std::ofstream out(path_, std::ios::app);
  if (!out) throw FormatError("metrics: cannot append to " + path_);
  out << r.to_json() << "\n";
}

}  // namespace vcl
