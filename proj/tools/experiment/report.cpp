#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "run.hpp"

namespace fwlab::experiment {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using Row = std::map<std::string, double>;

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<Row> read_table(const fs::path& file) {
  std::ifstream in(file);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty table " + file.string());
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  std::vector<Row> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    Row row;
    for (const auto& name : header) {
      if (!std::getline(ss, cell, ',')) break;
      // non-numeric cells (estimator kind) are kept as NaN
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      row[name] = end != cell.c_str() ? v : std::nan("");
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

struct Curve {
  std::vector<double> q, s;
  double at(double x) const {
    if (q.empty() || x < q.front() || x > q.back()) return std::nan("");
    const auto it = std::lower_bound(q.begin(), q.end(), x);
    const auto i = static_cast<std::size_t>(it - q.begin());
    if (q[i] == x) return s[i];
    const double w = (x - q[i - 1]) / (q[i] - q[i - 1]);
    return (1.0 - w) * s[i - 1] + w * s[i];
  }
};

}  // namespace

int report(const std::vector<fs::path>& dirs, const std::optional<fs::path>& destination, std::ostream& out,
           std::ostream& err) {
  if (dirs.empty()) {
    err << "fwlab report: no directories given\n";
    return kExitInvalid;
  }
  std::vector<Curve> curves;
  std::ostringstream curve_table, mc_table, ft_table;
  bool any_curve = false, any_mc = false, any_ft = false;
  std::vector<std::pair<fs::path, std::vector<Row>>> mc;
  try {
    for (const auto& dir : dirs) {
      if (!fs::exists(dir / "manifest.json")) {
        err << "fwlab report: no manifest.json in " << dir.string() << '\n';
        return kExitInvalid;
      }
      if (fs::exists(dir / "rate_curve.csv")) {
        Curve c;
        for (const auto& r : read_table(dir / "rate_curve.csv")) {
          c.q.push_back(r.at("q"));
          c.s.push_back(r.at("s"));
        }
        if (!any_curve) curve_table << "dir,q,s,ft_gap\n";
        any_curve = true;
        for (std::size_t i = 0; i < c.q.size(); ++i) {
          double gap = std::nan("");
          for (std::size_t j = 0; j < c.q.size(); ++j)
            if (c.q[j] == -c.q[i]) gap = c.s[j] - c.s[i] - c.q[i];
          curve_table << dir.string() << ',' << fmt(c.q[i]) << ',' << fmt(c.s[i]) << ',' << fmt(gap) << '\n';
        }
        curves.push_back(std::move(c));
      }
      if (fs::exists(dir / "mc.csv")) mc.emplace_back(dir, read_table(dir / "mc.csv"));
      if (fs::exists(dir / "ft_check.json")) {
        std::ifstream in(dir / "ft_check.json");
        const json j = json::parse(in);
        if (!any_ft) ft_table << "dir,eps,T,q,log_ratio,predicted,ratio,flagged\n";
        any_ft = true;
        ft_table << dir.string() << ',' << fmt(j.at("eps")) << ',' << fmt(j.at("T")) << ',' << fmt(j.at("q")) << ','
                 << fmt(j.at("log_ratio")) << ',' << fmt(j.at("predicted")) << ',' << fmt(j.at("ratio")) << ','
                 << (j.at("flagged").get<bool>() ? 1 : 0) << '\n';
      }
    }
  } catch (const std::exception& e) {
    err << "fwlab report: " << e.what() << '\n';
    return kExitInvalid;
  }
  for (const auto& [dir, rows] : mc) {
    if (!any_mc) mc_table << "dir,eps,T,q,M,hits,rate,rate_lo,rate_hi,s,rel_err\n";
    any_mc = true;
    for (const auto& r : rows) {
      const double s = curves.empty() ? std::nan("") : curves.front().at(r.at("q"));
      const double rel = std::isfinite(s) && s != 0.0 ? (r.at("rate") - s) / s : std::nan("");
      mc_table << dir.string() << ',' << fmt(r.at("eps")) << ',' << fmt(r.at("T")) << ',' << fmt(r.at("q")) << ','
               << fmt(r.at("M")) << ',' << fmt(r.at("hits")) << ',' << fmt(r.at("rate")) << ',' << fmt(r.at("rate_lo"))
               << ',' << fmt(r.at("rate_hi")) << ',' << fmt(s) << ',' << fmt(rel) << '\n';
    }
  }
  if (!any_curve && !any_mc && !any_ft) {
    err << "fwlab report: no rate_curve.csv, mc.csv or ft_check.json found\n";
    return kExitInvalid;
  }
  const std::pair<const char*, std::string> tables[] = {
      {"curve.csv", any_curve ? curve_table.str() : ""},
      {"mc_vs_curve.csv", any_mc ? mc_table.str() : ""},
      {"ft_check.csv", any_ft ? ft_table.str() : ""},
  };
  if (destination) fs::create_directories(*destination);
  bool first = true;
  for (const auto& [name, body] : tables) {
    if (body.empty()) continue;
    if (destination) {
      std::ofstream(*destination / name) << body;
    } else {
      if (!first) out << '\n';
      out << "# " << name << '\n' << body;
      first = false;
    }
  }
  return kExitOk;
}

}  // namespace fwlab::experiment
