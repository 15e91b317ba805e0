#include "masd/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>

#include "json.hpp"

namespace masd {
namespace {

using nlohmann::json;

void require_finite(double v, const char* field) {
  if (!std::isfinite(v)) {
    throw std::domain_error(std::string("metrics field '") + field + "' is not finite");
  }
}

void require_finite(const std::vector<double>& v, const char* field) {
  for (double x : v) require_finite(x, field);
}

double parse_real(const std::string& text, const std::string& what) {
  double v = 0.0;
  const char* end = text.data() + text.size();
  auto res = std::from_chars(text.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end) {
    throw std::runtime_error("malformed " + what + " '" + text + "'");
  }
  return v;
}

std::uint64_t parse_unsigned(const std::string& text, const std::string& what) {
  std::uint64_t v = 0;
  const char* end = text.data() + text.size();
  auto res = std::from_chars(text.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end) {
    throw std::runtime_error("malformed " + what + " '" + text + "'");
  }
  return v;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

constexpr const char* kCsvHeader = "run_id,skill,agent,step,x,y,init_id,seed";

std::ifstream open_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string header;
  std::getline(in, header);
  if (!header.empty() && header.back() == '\r') header.pop_back();
  if (header != kCsvHeader) {
    throw std::runtime_error(path.string() + ": unexpected header '" + header + "'");
  }
  return in;
}

// Plot geometry shared by every chart.
constexpr double kWidth = 640.0;
constexpr double kHeight = 480.0;
constexpr double kLeft = 70.0;
constexpr double kRight = 20.0;
constexpr double kTop = 40.0;
constexpr double kBottom = 55.0;

struct Axes {
  double x0, x1, y0, y1;
  double px(double x) const { return kLeft + (x - x0) / (x1 - x0) * (kWidth - kLeft - kRight); }
  double py(double y) const { return kHeight - kBottom - (y - y0) / (y1 - y0) * (kHeight - kTop - kBottom); }
};

std::pair<double, double> padded_range(double lo, double hi) {
  if (!(lo <= hi)) return {0.0, 1.0};
  if (hi - lo < 1e-12) return {lo - 0.5, hi + 0.5};
  const double pad = 0.05 * (hi - lo);
  return {lo - pad, hi + pad};
}

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string fmt(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, 2);
  return std::string(buf, res.ptr);
}

std::string tick_label(double v) {
  std::ostringstream s;
  s.precision(3);
  s << v;
  return s.str();
}

std::string svg_open(const PlotFrame& frame, const Axes& ax) {
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
    << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << kWidth / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
       "font-size=\"16\">"
    << escape_xml(frame.title) << "</text>\n";
  const double l = ax.px(ax.x0), r = ax.px(ax.x1), b = ax.py(ax.y0), t = ax.py(ax.y1);
  s << "<rect x=\"" << fmt(l) << "\" y=\"" << fmt(t) << "\" width=\"" << fmt(r - l) << "\" height=\""
    << fmt(b - t) << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = ax.x0 + (ax.x1 - ax.x0) * i / 4.0;
    const double yv = ax.y0 + (ax.y1 - ax.y0) * i / 4.0;
    s << "<text x=\"" << fmt(ax.px(xv)) << "\" y=\"" << fmt(b + 16)
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << tick_label(xv)
      << "</text>\n";
    s << "<text x=\"" << fmt(l - 6) << "\" y=\"" << fmt(ax.py(yv) + 4)
      << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << tick_label(yv)
      << "</text>\n";
  }
  s << "<text x=\"" << fmt((l + r) / 2) << "\" y=\"" << fmt(kHeight - 12)
    << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">"
    << escape_xml(frame.x_label) << "</text>\n";
  s << "<text x=\"16\" y=\"" << fmt((t + b) / 2) << "\" text-anchor=\"middle\" "
    << "font-family=\"sans-serif\" font-size=\"13\" transform=\"rotate(-90 16 " << fmt((t + b) / 2)
    << ")\">" << escape_xml(frame.y_label) << "</text>\n";
  return s.str();
}

Axes make_axes(const PlotFrame& frame, double xlo, double xhi, double ylo, double yhi) {
  auto xr = frame.x_range ? *frame.x_range : padded_range(xlo, xhi);
  auto yr = frame.y_range ? *frame.y_range : padded_range(ylo, yhi);
  return {xr.first, xr.second, yr.first, yr.second};
}

}  // namespace

// ---------------------------------------------------------------------------

std::string MetricsRecord::to_json() const {
  require_finite(mean_global_lp, "mean_global_lp");
  require_finite(mean_local_lp, "mean_local_lp");
  require_finite(pseudo_reward_mean, "pseudo_reward_mean");
  require_finite(td_loss, "td_loss");
  require_finite(disc_losses, "disc_losses");
  json j = {{"episode", episode},
            {"active_k", active_k},
            {"mean_global_lp", mean_global_lp},
            {"mean_local_lp", mean_local_lp},
            {"pseudo_reward_mean", pseudo_reward_mean},
            {"td_loss", td_loss},
            {"disc_losses", disc_losses}};
  if (mi_global) {
    require_finite(*mi_global, "mi_global");
    j["mi_global"] = *mi_global;
  }
  if (mi_local) {
    require_finite(*mi_local, "mi_local");
    j["mi_local"] = *mi_local;
  }
  if (extrinsic_reward) {
    require_finite(*extrinsic_reward, "extrinsic_reward");
    j["extrinsic_reward"] = *extrinsic_reward;
  }
  return j.dump();
}

MetricsRecord MetricsRecord::from_json(const std::string& line) {
  const json j = json::parse(line);
  MetricsRecord r;
  r.episode = j.at("episode").get<std::size_t>();
  r.active_k = j.at("active_k").get<std::size_t>();
  r.mean_global_lp = j.at("mean_global_lp").get<double>();
  r.mean_local_lp = j.at("mean_local_lp").get<std::vector<double>>();
  r.pseudo_reward_mean = j.at("pseudo_reward_mean").get<double>();
  r.td_loss = j.at("td_loss").get<double>();
  r.disc_losses = j.at("disc_losses").get<std::vector<double>>();
  if (j.contains("mi_global")) r.mi_global = j["mi_global"].get<double>();
  if (j.contains("mi_local")) r.mi_local = j["mi_local"].get<std::vector<double>>();
  if (j.contains("extrinsic_reward")) r.extrinsic_reward = j["extrinsic_reward"].get<double>();
  return r;
}

MetricsWriter::MetricsWriter(const std::filesystem::path& path, bool truncate) : path_(path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  out_.open(path, truncate ? std::ios::trunc : std::ios::app);
  if (!out_) throw std::runtime_error("cannot open metrics file " + path.string());
}

void MetricsWriter::append(const MetricsRecord& record) {
  out_ << record.to_json() << '\n';
  out_.flush();
  if (!out_) throw std::runtime_error("write failed for " + path_.string());
}

std::vector<MetricsRecord> read_metrics(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open metrics file " + path.string());
  std::vector<MetricsRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(MetricsRecord::from_json(line));
  }
  return out;
}

// ---------------------------------------------------------------------------

std::string format_real(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void write_trajectories(const std::filesystem::path& path,
                        const std::vector<TrajectoryRecord>& records) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << kCsvHeader << '\n';
  for (const auto& rec : records) {
    for (std::size_t a = 0; a < rec.agents.size(); ++a) {
      for (std::size_t t = 0; t < rec.agents[a].size(); ++t) {
        const Vec2& p = rec.agents[a][t];
        out << rec.run_id << ',' << rec.skill << ',' << a << ',' << t << ',' << format_real(p.x())
            << ',' << format_real(p.y()) << ',' << rec.init_id << ',' << rec.seed << '\n';
      }
    }
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::vector<TrajectoryRecord> read_trajectories(const std::filesystem::path& path) {
  std::ifstream in = open_csv(path);
  std::vector<TrajectoryRecord> records;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (cells.size() != 8) throw std::runtime_error(where + ": expected 8 columns");
    const std::string& run_id = cells[0];
    const int skill = static_cast<int>(parse_unsigned(cells[1], where + " skill"));
    const auto agent = parse_unsigned(cells[2], where + " agent");
    const auto step = parse_unsigned(cells[3], where + " step");
    const Vec2 p(parse_real(cells[4], where + " x"), parse_real(cells[5], where + " y"));
    const auto init_id = parse_unsigned(cells[6], where + " init_id");
    const auto seed = parse_unsigned(cells[7], where + " seed");

    // Rows of one record are contiguous; a new (run, skill, init, seed) key starts a new one.
    if (records.empty() || records.back().run_id != run_id || records.back().skill != skill ||
        records.back().init_id != init_id || records.back().seed != seed ||
        (agent == 0 && step == 0 && !records.back().agents.empty())) {
      records.push_back({run_id, skill, init_id, seed, {}});
    }
    auto& rec = records.back();
    if (agent == rec.agents.size()) rec.agents.emplace_back();
    if (agent + 1 != rec.agents.size() || step != rec.agents.back().size()) {
      throw std::runtime_error(where + ": rows out of order");
    }
    rec.agents.back().push_back(p);
  }
  for (const auto& rec : records) {
    for (const auto& a : rec.agents) {
      if (a.size() != rec.agents.front().size()) {
        throw std::runtime_error(path.string() + ": ragged trajectory in run " + rec.run_id);
      }
    }
  }
  return records;
}

void write_snapshot(const std::filesystem::path& path, const Snapshot& snapshot) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << kCsvHeader << '\n';
  auto row = [&](const std::string& label, const Vec2& p) {
    out << "snapshot,0," << label << ",0," << format_real(p.x()) << ',' << format_real(p.y())
        << ",0,0\n";
  };
  for (std::size_t i = 0; i < snapshot.agents.size(); ++i) row(std::to_string(i), snapshot.agents[i]);
  for (std::size_t j = 0; j < snapshot.landmarks.size(); ++j) {
    row("L" + std::to_string(j), snapshot.landmarks[j]);
  }
  if (snapshot.prey) row("P", *snapshot.prey);
}

Snapshot read_snapshot(const std::filesystem::path& path) {
  std::ifstream in = open_csv(path);
  Snapshot snap;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != 8) throw std::runtime_error(path.string() + ": expected 8 columns");
    const Vec2 p(parse_real(cells[4], "x"), parse_real(cells[5], "y"));
    const std::string& label = cells[2];
    if (label == "P") {
      snap.prey = p;
    } else if (!label.empty() && label[0] == 'L') {
      if (parse_unsigned(label.substr(1), "landmark") != snap.landmarks.size()) {
        throw std::runtime_error(path.string() + ": landmarks out of order");
      }
      snap.landmarks.push_back(p);
    } else {
      if (parse_unsigned(label, "agent") != snap.agents.size()) {
        throw std::runtime_error(path.string() + ": agents out of order");
      }
      snap.agents.push_back(p);
    }
  }
  return snap;
}

// ---------------------------------------------------------------------------

const std::vector<std::string>& skill_palette() {
  static const std::vector<std::string> palette = {
      "#e6194b", "#3cb44b", "#ffe119", "#4363d8", "#f58231", "#911eb4", "#46f0f0", "#f032e6",
      "#bcf60c", "#fabebe", "#008080", "#e6beff", "#9a6324", "#fffac8", "#800000", "#aaffc3",
      "#808000", "#ffd8b1", "#000075", "#808080", "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
      "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  return palette;
}

std::string svg_lines(const PlotFrame& frame, const std::vector<Series>& series) {
  double xlo = std::numeric_limits<double>::infinity(), xhi = -xlo, ylo = xlo, yhi = -xlo;
  for (const auto& s : series) {
    for (double x : s.x) xlo = std::min(xlo, x), xhi = std::max(xhi, x);
    for (double y : s.y) ylo = std::min(ylo, y), yhi = std::max(yhi, y);
  }
  const Axes ax = make_axes(frame, xlo, xhi, ylo, yhi);
  std::ostringstream s;
  s << svg_open(frame, ax);
  double legend_y = kTop + 14;
  for (const auto& line : series) {
    const std::size_t n = std::min(line.x.size(), line.y.size());
    if (n > 0) {
      s << "<polyline fill=\"none\" stroke=\"" << line.color << "\" stroke-width=\"" << line.width
        << "\" stroke-opacity=\"" << line.opacity << "\" points=\"";
      for (std::size_t i = 0; i < n; ++i) {
        s << fmt(ax.px(line.x[i])) << ',' << fmt(ax.py(line.y[i])) << (i + 1 < n ? " " : "");
      }
      s << "\"/>\n";
    }
    if (!line.label.empty()) {
      s << "<text x=\"" << fmt(kWidth - kRight - 8) << "\" y=\"" << fmt(legend_y)
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\" fill=\"" << line.color
        << "\">" << escape_xml(line.label) << "</text>\n";
      legend_y += 14;
    }
  }
  s << "</svg>\n";
  return s.str();
}

std::string svg_scatter(const PlotFrame& frame, const std::vector<ScatterPoint>& points) {
  double xlo = std::numeric_limits<double>::infinity(), xhi = -xlo, ylo = xlo, yhi = -xlo;
  for (const auto& p : points) {
    xlo = std::min(xlo, p.x), xhi = std::max(xhi, p.x);
    ylo = std::min(ylo, p.y), yhi = std::max(yhi, p.y);
  }
  const Axes ax = make_axes(frame, xlo, xhi, ylo, yhi);
  const auto& pal = skill_palette();
  std::ostringstream s;
  s << svg_open(frame, ax);
  for (const auto& p : points) {
    const auto color = pal[static_cast<std::size_t>(std::max(p.group, 0)) % pal.size()];
    s << "<circle cx=\"" << fmt(ax.px(p.x)) << "\" cy=\"" << fmt(ax.py(p.y))
      << "\" r=\"3\" fill=\"" << color << "\" fill-opacity=\"0.7\"/>\n";
  }
  s << "</svg>\n";
  return s.str();
}

std::string svg_trajectories(const PlotFrame& frame, const std::vector<TrajectoryRecord>& records) {
  PlotFrame f = frame;
  if (!f.x_range) f.x_range = {-1.0, 1.0};
  if (!f.y_range) f.y_range = {-1.0, 1.0};
  const Axes ax = make_axes(f, -1.0, 1.0, -1.0, 1.0);
  const auto& pal = skill_palette();
  std::ostringstream s;
  s << svg_open(f, ax);
  for (const auto& rec : records) {
    const auto color = pal[static_cast<std::size_t>(std::max(rec.skill, 0)) % pal.size()];
    for (const auto& path : rec.agents) {
      if (path.empty()) continue;
      s << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.2\" points=\"";
      for (std::size_t t = 0; t < path.size(); ++t) {
        s << fmt(ax.px(path[t].x())) << ',' << fmt(ax.py(path[t].y())) << (t + 1 < path.size() ? " " : "");
      }
      s << "\"/>\n";
      s << "<circle cx=\"" << fmt(ax.px(path.back().x())) << "\" cy=\"" << fmt(ax.py(path.back().y()))
        << "\" r=\"2.5\" fill=\"" << color << "\"/>\n";
    }
  }
  s << "</svg>\n";
  return s.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace masd
