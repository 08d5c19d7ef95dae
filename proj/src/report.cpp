#include <cmath>
#include <cstdio>
#include <json.hpp>
#include <limits>
#include <sstream>

#include "pp/error.hpp"
#include "pp/harness.hpp"

namespace pp {

namespace {

using nlohmann::ordered_json;

ordered_json number_or_null(const std::optional<double>& v) {
  if (!v) return nullptr;
  if (std::isinf(*v)) return *v > 0 ? "inf" : "-inf";
  if (std::isnan(*v)) return "nan";
  return *v;
}

std::optional<double> read_number(const ordered_json& j) {
  if (j.is_null()) return std::nullopt;
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    throw ParseError("report: unexpected string '" + s + "' where a number belongs");
  }
  return j.get<double>();
}

std::string cell(const std::optional<double>& v, const char* fmt, int width) {
  char buf[64];
  if (!v) {
    std::snprintf(buf, sizeof(buf), "%*s", width, "-");
  } else if (std::isinf(*v)) {
    std::snprintf(buf, sizeof(buf), "%*s", width, *v > 0 ? "inf" : "-inf");
  } else {
    std::snprintf(buf, sizeof(buf), fmt, width, *v);
  }
  return buf;
}

std::string structured(const MetricReport& report) {
  ordered_json root;
  root["metadata"] = {{"seed", report.seed}, {"config_hash", report.config_hash}, {"kernel_isa", report.kernel_isa}};
  auto rows = ordered_json::array();
  for (const auto& r : report.rows) {
    ordered_json j;
    j["table"] = r.table;
    j["variant"] = r.variant;
    j["condition"] = r.condition;
    j["ssim_global"] = number_or_null(r.ssim_global);
    j["ssim_window"] = number_or_null(r.ssim_window);
    j["psnr"] = number_or_null(r.psnr);
    j["map"] = number_or_null(r.map);
    j["images"] = r.images;
    j["skipped"] = r.skipped;
    rows.push_back(std::move(j));
  }
  root["rows"] = rows;
  return root.dump(2) + "\n";
}

std::string text_table(const MetricReport& report) {
  std::ostringstream out;
  char line[256];
  out << "seed " << report.seed << "  config " << report.config_hash << "  kernels " << report.kernel_isa << "\n\n";

  out << "Dehazing quality (dehazed vs clear)\n";
  std::snprintf(line, sizeof(line), "%-24s %-10s %12s %12s %10s %7s\n", "variant", "condition", "ssim_global",
                "ssim_window", "psnr_db", "images");
  out << line << std::string(80, '-') << "\n";
  for (const auto& r : report.rows) {
    if (r.table != "dehaze") continue;
    std::snprintf(line, sizeof(line), "%-24s %-10s %s %s %s %7d\n", r.variant.c_str(), r.condition.c_str(),
                  cell(r.ssim_global, "%*.4f", 12).c_str(), cell(r.ssim_window, "%*.4f", 12).c_str(),
                  cell(r.psnr, "%*.3f", 10).c_str(), r.images);
    out << line;
  }

  for (const auto& [table, title] :
       {std::pair<std::string, std::string>{"detect", "Detection mAP by pipeline variant"},
        std::pair<std::string, std::string>{"ood", "Detection mAP, out-of-distribution test set"}}) {
    out << "\n" << title << "\n";
    std::snprintf(line, sizeof(line), "%-24s %-10s %10s %7s\n", "variant", "condition", "mAP", "images");
    out << line << std::string(54, '-') << "\n";
    for (const auto& r : report.rows) {
      if (r.table != table) continue;
      std::snprintf(line, sizeof(line), "%-24s %-10s %s %7d\n", r.variant.c_str(), r.condition.c_str(),
                    cell(r.map, "%*.4f", 10).c_str(), r.images);
      out << line;
    }
  }
  return out.str();
}

}  // namespace

std::string emit_report(const MetricReport& report, ReportFormat format) {
  return format == ReportFormat::structured ? structured(report) : text_table(report);
}

MetricReport parse_report(const std::string& text) {
  MetricReport report;
  try {
    const auto root = ordered_json::parse(text);
    const auto& meta = root.at("metadata");
    report.seed = meta.at("seed").get<std::uint64_t>();
    report.config_hash = meta.at("config_hash").get<std::string>();
    report.kernel_isa = meta.at("kernel_isa").get<std::string>();
    for (const auto& j : root.at("rows")) {
      ReportRow r;
      r.table = j.at("table").get<std::string>();
      r.variant = j.at("variant").get<std::string>();
      r.condition = j.at("condition").get<std::string>();
      r.ssim_global = read_number(j.at("ssim_global"));
      r.ssim_window = read_number(j.at("ssim_window"));
      r.psnr = read_number(j.at("psnr"));
      r.map = read_number(j.at("map"));
      r.images = j.at("images").get<int>();
      r.skipped = j.at("skipped").get<int>();
      report.rows.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("report: ") + e.what());
  }
  return report;
}

}  // namespace pp
