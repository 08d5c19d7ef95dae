#include <fstream>
#include <json.hpp>
#include <regex>
#include <sstream>

#include "pp/error.hpp"
#include "pp/harness.hpp"

namespace pp {

namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open " + p.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::vector<GroundTruthBox> cityscapes_boxes(const fs::path& p) {
  std::vector<GroundTruthBox> out;
  try {
    const auto root = nlohmann::json::parse(read_file(p));
    for (const auto& obj : root.at("objects")) {
      const auto& poly = obj.at("polygon");
      if (poly.empty()) continue;
      Box b{1e300, 1e300, -1e300, -1e300};
      for (const auto& pt : poly) {
        const double x = pt.at(0).get<double>();
        const double y = pt.at(1).get<double>();
        b.x0 = std::min(b.x0, x);
        b.y0 = std::min(b.y0, y);
        b.x1 = std::max(b.x1, x);
        b.y1 = std::max(b.y1, y);
      }
      if (b.x0 < b.x1 && b.y0 < b.y1) out.push_back({obj.at("label").get<std::string>(), b});
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(p.string() + ": " + e.what());
  }
  return out;
}

// Pascal VOC annotations are flat enough that a few patterns cover them.
std::vector<GroundTruthBox> voc_boxes(const fs::path& p) {
  const std::string xml = read_file(p);
  static const std::regex object_re(R"(<object>([\s\S]*?)</object>)");
  static const std::regex name_re(R"(<name>\s*([^<]*?)\s*</name>)");
  auto field = [&](const std::string& body, const char* tag) {
    const std::regex re(std::string("<") + tag + R"(>\s*([-0-9.eE+]+)\s*</)" + tag + ">");
    std::smatch m;
    if (!std::regex_search(body, m, re)) throw ParseError(p.string() + ": object without <" + tag + ">");
    return std::stod(m[1].str());
  };
  std::vector<GroundTruthBox> out;
  for (auto it = std::sregex_iterator(xml.begin(), xml.end(), object_re); it != std::sregex_iterator(); ++it) {
    const std::string body = (*it)[1].str();
    std::smatch name;
    if (!std::regex_search(body, name, name_re)) throw ParseError(p.string() + ": object without <name>");
    Box b{field(body, "xmin") - 1.0, field(body, "ymin") - 1.0, field(body, "xmax"), field(body, "ymax")};
    if (b.x0 < b.x1 && b.y0 < b.y1) out.push_back({name[1].str(), b});
  }
  return out;
}

}  // namespace

DatasetManifest ingest_split_list(const fs::path& list_path, AnnotationLayout layout) {
  std::ifstream in(list_path);
  if (!in) throw IoError("cannot open split list " + list_path.string());
  const fs::path base = fs::absolute(list_path).parent_path();
  DatasetManifest m;
  m.root = base;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream fields(line);
    std::string split, id, foggy, annotation, clear;
    if (!(fields >> split)) continue;
    const std::string where = list_path.string() + ":" + std::to_string(line_no) + ": ";
    if (!(fields >> id >> foggy >> annotation)) throw ParseError(where + "expected <split> <id> <foggy> <annotation> [<clear>]");
    fields >> clear;
    ManifestRecord rec;
    rec.id = id;
    try {
      rec.split = parse_split(split);
    } catch (const DomainError& e) {
      throw ParseError(where + e.what());
    }
    rec.foggy_path = (base / foggy).lexically_normal().string();
    if (!clear.empty()) rec.clear_path = (base / clear).lexically_normal().string();
    const fs::path ann = base / annotation;
    rec.gt_boxes = layout == AnnotationLayout::cityscapes_polygons ? cityscapes_boxes(ann) : voc_boxes(ann);
    m.records.push_back(std::move(rec));
  }
  return m;
}

}  // namespace pp
