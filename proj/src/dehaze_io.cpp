#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "dehaze_net.hpp"
#include "pp/dehaze.hpp"
#include "pp/error.hpp"

namespace pp {

namespace {

constexpr const char* kMagic = "aodx-params";
constexpr int kFormatVersion = 1;

std::string shortest(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& token, int line) {
  double v = 0.0;
  auto res = std::from_chars(token.data(), token.data() + token.size(), v);
  if (res.ec != std::errc() || res.ptr != token.data() + token.size() || !std::isfinite(v)) {
    throw ParseError("dehazer parameters line " + std::to_string(line) + ": bad number '" + token + "'");
  }
  return v;
}

}  // namespace

std::string format_dehazer(const DehazerParams& params) {
  std::ostringstream out;
  out << kMagic << ' ' << kFormatVersion << '\n';
  out << "version " << params.version << '\n';
  out << "b " << shortest(params.b) << '\n';
  auto write_arrays = [&](const std::vector<WeightArray>& arrays) {
    for (const auto& a : arrays) {
      out << "array " << a.name << ' ' << a.shape.size();
      for (int d : a.shape) out << ' ' << d;
      out << '\n';
      for (std::size_t i = 0; i < a.values.size(); ++i) out << (i ? " " : "") << shortest(a.values[i]);
      out << '\n';
    }
  };
  write_arrays(params.k_weights);
  write_arrays(params.attn_weights);
  out << "end\n";
  return out.str();
}

void save_dehazer(const DehazerParams& params, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << format_dehazer(params);
  if (!out) throw IoError("write failed: " + path.string());
}

DehazerParams parse_dehazer(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  auto next_line = [&]() -> std::string {
    if (!std::getline(in, line)) throw ParseError("dehazer parameters: unexpected end of file");
    ++line_no;
    return line;
  };
  auto fail = [&](const std::string& why) { throw ParseError("dehazer parameters line " + std::to_string(line_no) + ": " + why); };

  DehazerParams p;
  {
    std::istringstream head(next_line());
    std::string magic;
    int version = 0;
    if (!(head >> magic >> version) || magic != kMagic) fail("missing '" + std::string(kMagic) + "' header");
    if (version != kFormatVersion) fail("unsupported format version " + std::to_string(version));
  }
  {
    const std::string v = next_line();
    if (v.rfind("version ", 0) != 0) fail("expected 'version <string>'");
    p.version = v.substr(8);
  }
  {
    std::istringstream bl(next_line());
    std::string key, value;
    if (!(bl >> key >> value) || key != "b") fail("expected 'b <value>'");
    p.b = parse_double(value, line_no);
  }
  while (true) {
    std::istringstream hl(next_line());
    std::string key;
    hl >> key;
    if (key == "end") break;
    if (key != "array") fail("expected 'array' or 'end'");
    WeightArray a;
    std::size_t ndim = 0;
    if (!(hl >> a.name >> ndim) || ndim == 0 || ndim > 8) fail("bad array header");
    std::size_t count = 1;
    for (std::size_t i = 0; i < ndim; ++i) {
      int d = 0;
      if (!(hl >> d) || d < 1) fail("bad array dimension");
      a.shape.push_back(d);
      count *= static_cast<std::size_t>(d);
    }
    std::istringstream vl(next_line());
    std::string token;
    while (vl >> token) a.values.push_back(parse_double(token, line_no));
    if (a.values.size() != count) fail("array " + a.name + " has " + std::to_string(a.values.size()) + " values, expected " + std::to_string(count));
    if (a.name.rfind("attn", 0) == 0) {
      p.attn_weights.push_back(std::move(a));
    } else {
      p.k_weights.push_back(std::move(a));
    }
  }
  try {
    net::check_layout(p);
  } catch (const DomainError& e) {
    throw ParseError(e.what());
  }
  return p;
}

DehazerParams load_dehazer(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_dehazer(buf.str());
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

}  // namespace pp
