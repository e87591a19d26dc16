#include <kflearn/io.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

namespace kflearn {

namespace {

constexpr double kWidth = 720.0, kHeight = 480.0;
constexpr double kLeft = 80.0, kRight = 150.0, kTop = 40.0, kBottom = 60.0;

struct Series {
  std::vector<double> n, median, p95, p975;
};

std::string escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

const char* colour_for(const std::string& filter, std::size_t idx) {
  if (filter == "ce") return "#1f77b4";
  if (filter == "robust") return "#d62728";
  static const char* extra[] = {"#2ca02c", "#9467bd", "#8c564b"};
  return extra[idx % 3];
}

}  // namespace

void write_error_plot_svg(const std::filesystem::path& path, const std::vector<SummaryRow>& rows,
                          std::string_view title) {
  std::map<std::string, Series> series;
  double xmin = std::numeric_limits<double>::infinity(), xmax = 0.0;
  double ymin = std::numeric_limits<double>::infinity(), ymax = 0.0;
  for (const SummaryRow& r : rows) {
    if (r.ok == 0 || !(r.median > 0.0) || !(r.p975 > 0.0) || r.n_samples <= 0) continue;
    Series& s = series[r.filter];
    const double n = static_cast<double>(r.n_samples);
    s.n.push_back(n);
    s.median.push_back(r.median);
    s.p95.push_back(r.p95);
    s.p975.push_back(r.p975);
    xmin = std::min(xmin, n);
    xmax = std::max(xmax, n);
    ymin = std::min(ymin, r.median);
    ymax = std::max(ymax, r.p975);
  }

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << std::fixed << std::setprecision(2);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << kWidth / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"15\">"
      << escape(title) << "</text>\n";

  if (series.empty()) {
    out << "<text x=\"" << kWidth / 2 << "\" y=\"" << kHeight / 2
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\">no successful trials</text>\n</svg>\n";
    return;
  }

  // Decade-aligned log axes.
  double lx0 = std::floor(std::log10(xmin)), lx1 = std::ceil(std::log10(xmax));
  double ly0 = std::floor(std::log10(ymin)), ly1 = std::ceil(std::log10(ymax));
  if (lx1 <= lx0) lx1 = lx0 + 1;
  if (ly1 <= ly0) ly1 = ly0 + 1;
  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  auto px = [&](double x) { return kLeft + (std::log10(x) - lx0) / (lx1 - lx0) * pw; };
  auto py = [&](double y) { return kTop + ph - (std::log10(y) - ly0) / (ly1 - ly0) * ph; };

  out << "<g font-family=\"sans-serif\" font-size=\"11\" stroke-width=\"1\">\n";
  for (double d = lx0; d <= lx1 + 1e-9; d += 1.0) {
    const double x = kLeft + (d - lx0) / (lx1 - lx0) * pw;
    out << "<line x1=\"" << x << "\" y1=\"" << kTop << "\" x2=\"" << x << "\" y2=\"" << kTop + ph
        << "\" stroke=\"#ddd\"/>\n";
    out << "<text x=\"" << x << "\" y=\"" << kTop + ph + 16 << "\" text-anchor=\"middle\">1e"
        << static_cast<int>(d) << "</text>\n";
  }
  for (double d = ly0; d <= ly1 + 1e-9; d += 1.0) {
    const double y = kTop + ph - (d - ly0) / (ly1 - ly0) * ph;
    out << "<line x1=\"" << kLeft << "\" y1=\"" << y << "\" x2=\"" << kLeft + pw << "\" y2=\"" << y
        << "\" stroke=\"#ddd\"/>\n";
    out << "<text x=\"" << kLeft - 6 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">1e"
        << static_cast<int>(d) << "</text>\n";
  }
  out << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"black\"/>\n";
  out << "<text x=\"" << kLeft + pw / 2 << "\" y=\"" << kHeight - 18
      << "\" text-anchor=\"middle\">samples N</text>\n";
  out << "<text transform=\"translate(18 " << kTop + ph / 2
      << ") rotate(-90)\" text-anchor=\"middle\">prediction error</text>\n</g>\n";

  auto polyline = [&](const std::vector<double>& xs, const std::vector<double>& ys) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(2);
    for (std::size_t i = 0; i < xs.size(); ++i) os << (i ? " " : "") << px(xs[i]) << ',' << py(ys[i]);
    return os.str();
  };

  std::size_t idx = 0;
  double legend_y = kTop + 10;
  for (const auto& [name, s] : series) {
    const char* colour = colour_for(name, idx++);
    std::string band = polyline(s.n, s.p975);
    std::vector<double> rn(s.n.rbegin(), s.n.rend()), rm(s.median.rbegin(), s.median.rend());
    band += " " + polyline(rn, rm);
    out << "<polygon points=\"" << band << "\" fill=\"" << colour
        << "\" fill-opacity=\"0.15\" stroke=\"none\"/>\n";
    out << "<polyline points=\"" << polyline(s.n, s.median) << "\" fill=\"none\" stroke=\"" << colour
        << "\" stroke-width=\"2\"/>\n";
    out << "<polyline points=\"" << polyline(s.n, s.p95) << "\" fill=\"none\" stroke=\"" << colour
        << "\" stroke-dasharray=\"6 3\"/>\n";
    out << "<polyline points=\"" << polyline(s.n, s.p975) << "\" fill=\"none\" stroke=\"" << colour
        << "\" stroke-dasharray=\"2 2\"/>\n";
    for (std::size_t i = 0; i < s.n.size(); ++i)
      out << "<circle cx=\"" << px(s.n[i]) << "\" cy=\"" << py(s.median[i]) << "\" r=\"3\" fill=\""
          << colour << "\"/>\n";

    const double lx = kLeft + pw + 12;
    out << "<g font-family=\"sans-serif\" font-size=\"11\">\n";
    out << "<line x1=\"" << lx << "\" y1=\"" << legend_y << "\" x2=\"" << lx + 22 << "\" y2=\""
        << legend_y << "\" stroke=\"" << colour << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << lx + 28 << "\" y=\"" << legend_y + 4 << "\">" << escape(name)
        << " median</text>\n";
    out << "<line x1=\"" << lx << "\" y1=\"" << legend_y + 16 << "\" x2=\"" << lx + 22 << "\" y2=\""
        << legend_y + 16 << "\" stroke=\"" << colour << "\" stroke-dasharray=\"6 3\"/>\n";
    out << "<text x=\"" << lx + 28 << "\" y=\"" << legend_y + 20 << "\">" << escape(name)
        << " 95%</text>\n";
    out << "<line x1=\"" << lx << "\" y1=\"" << legend_y + 32 << "\" x2=\"" << lx + 22 << "\" y2=\""
        << legend_y + 32 << "\" stroke=\"" << colour << "\" stroke-dasharray=\"2 2\"/>\n";
    out << "<text x=\"" << lx + 28 << "\" y=\"" << legend_y + 36 << "\">" << escape(name)
        << " 97.5%</text>\n</g>\n";
    legend_y += 56;
  }
  out << "</svg>\n";
}

}  // namespace kflearn
