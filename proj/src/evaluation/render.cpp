#include <algorithm>
#include <cstdio>
#include <sstream>

#include "fiberspec/evaluation.hpp"

namespace fiberspec {

namespace {

std::string fixed2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string xml_escape(const std::string& s) {
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

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

void confusion_block(std::ostringstream& os, const ConfusionMatrix& m) {
  std::size_t w = 5;
  for (const auto& l : m.labels()) w = std::max(w, l.size());
  auto pad = [&](const std::string& s) { return s + std::string(w + 2 - std::min(w + 1, s.size()), ' '); };
  os << pad("");
  for (const auto& l : m.labels()) os << pad(l);
  os << '\n';
  for (std::size_t i = 0; i < m.n_classes(); ++i) {
    os << pad(m.labels()[i]);
    for (std::size_t j = 0; j < m.n_classes(); ++j) os << pad(std::to_string(m.at(i, j)));
    os << '\n';
  }
}

}  // namespace

std::string percent2(double fraction) { return fixed2(100.0 * fraction); }

std::string render_text(const EvaluationReport& report) {
  std::ostringstream os;
  os << "pixel accuracy (%): " << percent2(report.pixel_accuracy) << '\n';
  os << "object accuracy (%): " << percent2(report.object_accuracy) << '\n';
  os << "\nclass,pixels,pixel_acc,objects,object_acc\n";
  for (const auto& r : report.per_class) {
    if (r.pixels == 0 && r.objects == 0) continue;
    os << r.label << ',' << r.pixels << ',' << percent2(r.pixel_accuracy()) << ',' << r.objects << ','
       << percent2(r.object_accuracy()) << '\n';
  }
  os << "\npixel confusion (rows true, columns predicted)\n";
  confusion_block(os, report.pixel_confusion);
  os << "\nobject confusion (rows true, columns predicted)\n";
  confusion_block(os, report.object_confusion);
  return os.str();
}

std::string render_text(const DetectionReport& report, std::optional<double> threshold) {
  std::ostringstream os;
  if (threshold) os << "threshold: " << *threshold << '\n';
  os << "pixel accuracy (%): " << percent2(report.pixel_accuracy) << '\n';
  os << "object accuracy (%): " << percent2(report.object_accuracy) << "\n\n";
  os << detection_csv(report);
  return os.str();
}

std::string confusion_csv(const ConfusionMatrix& m) {
  std::ostringstream os;
  os << "true\\pred";
  for (const auto& l : m.labels()) os << ',' << csv_field(l);
  os << '\n';
  for (std::size_t i = 0; i < m.n_classes(); ++i) {
    os << csv_field(m.labels()[i]);
    for (std::size_t j = 0; j < m.n_classes(); ++j) os << ',' << m.at(i, j);
    os << '\n';
  }
  return os.str();
}

std::string detection_csv(const DetectionReport& report) {
  std::ostringstream os;
  os << "textile_type,pixel_acc,object_acc,median_re,pixels,objects\n";
  for (const auto& r : report.rows) {
    char re[64];
    std::snprintf(re, sizeof re, "%.6g", r.median_object_error);
    os << csv_field(r.group) << ',' << percent2(r.pixel_accuracy()) << ',' << percent2(r.object_accuracy()) << ','
       << re << ',' << r.pixels << ',' << r.objects << '\n';
  }
  return os.str();
}

std::string confusion_svg(const ConfusionMatrix& m, const std::string& title) {
  const std::size_t n = m.n_classes();
  const int cell = 44, left = 90, top = 60;
  const int width = left + cell * static_cast<int>(n) + 20;
  const int height = top + cell * static_cast<int>(n) + 40;
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\" font-family=\"sans-serif\" font-size=\"10\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << width / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << xml_escape(title)
     << "</text>\n";
  for (std::size_t i = 0; i < n; ++i) {
    const int y = top + cell * static_cast<int>(i);
    os << "<text x=\"" << left - 4 << "\" y=\"" << y + cell / 2 + 3 << "\" text-anchor=\"end\">"
       << xml_escape(m.labels()[i]) << "</text>\n";
    os << "<text x=\"" << left + cell * static_cast<int>(i) + cell / 2 << "\" y=\"" << top - 6
       << "\" text-anchor=\"middle\">" << xml_escape(m.labels()[i]) << "</text>\n";
    const std::size_t row = m.row_sum(i);
    for (std::size_t j = 0; j < n; ++j) {
      const int x = left + cell * static_cast<int>(j);
      const double frac = row ? static_cast<double>(m.at(i, j)) / static_cast<double>(row) : 0.0;
      const int shade = 255 - static_cast<int>(frac * 200.0);
      os << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << cell << "\" height=\"" << cell << "\" fill=\"rgb("
         << shade << ',' << shade << ",255)\" stroke=\"#999\"/>\n";
      os << "<text x=\"" << x + cell / 2 << "\" y=\"" << y + cell / 2 + 3 << "\" text-anchor=\"middle\">"
         << m.at(i, j) << "</text>\n";
    }
  }
  os << "<text x=\"" << left + cell * static_cast<int>(n) / 2 << "\" y=\"" << height - 10
     << "\" text-anchor=\"middle\">predicted</text>\n";
  os << "</svg>\n";
  return os.str();
}

std::string histogram_svg(const ReHistogram& h, const std::string& title) {
  static const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  const int left = 60, top = 40, plot_w = 600, plot_h = 300;
  const int width = left + plot_w + 180, height = top + plot_h + 50;
  std::size_t peak = 1;
  for (const auto& g : h.counts) {
    for (auto c : g) peak = std::max(peak, c);
  }
  const std::size_t bins = h.counts.empty() ? 0 : h.counts.front().size();
  auto px = [&](double v) { return left + static_cast<double>(plot_w) * (v - h.lower) / (h.upper - h.lower); };
  auto py = [&](std::size_t c) {
    return top + plot_h - static_cast<double>(plot_h) * static_cast<double>(c) / static_cast<double>(peak);
  };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\" font-family=\"sans-serif\" font-size=\"10\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << left + plot_w / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">"
     << xml_escape(title) << "</text>\n";
  os << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << plot_w << "\" height=\"" << plot_h
     << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (std::size_t g = 0; g < h.counts.size(); ++g) {
    const char* colour = palette[g % std::size(palette)];
    os << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t b = 0; b < bins; ++b) {
      const double x0 = px(h.lower + h.bin_width * static_cast<double>(b));
      const double x1 = px(h.lower + h.bin_width * static_cast<double>(b + 1));
      const double y = py(h.counts[g][b]);
      os << x0 << ',' << y << ' ' << x1 << ',' << y << ' ';
    }
    os << "\"/>\n";
    os << "<rect x=\"" << left + plot_w + 15 << "\" y=\"" << top + 16 * static_cast<int>(g) << "\" width=\"10\" "
       << "height=\"10\" fill=\"" << colour << "\"/>\n";
    os << "<text x=\"" << left + plot_w + 30 << "\" y=\"" << top + 16 * static_cast<int>(g) + 9 << "\">"
       << xml_escape(h.groups[g]) << "</text>\n";
  }
  if (h.threshold >= h.lower && h.threshold <= h.upper) {
    const double x = px(h.threshold);
    os << "<line x1=\"" << x << "\" y1=\"" << top << "\" x2=\"" << x << "\" y2=\"" << top + plot_h
       << "\" stroke=\"black\" stroke-dasharray=\"4,3\"/>\n";
    os << "<text x=\"" << x + 3 << "\" y=\"" << top + 12 << "\">threshold</text>\n";
  }
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4g", h.upper);
  os << "<text x=\"" << left << "\" y=\"" << top + plot_h + 15 << "\">0</text>\n";
  os << "<text x=\"" << left + plot_w << "\" y=\"" << top + plot_h + 15 << "\" text-anchor=\"end\">" << buf
     << "</text>\n";
  os << "<text x=\"" << left + plot_w / 2 << "\" y=\"" << top + plot_h + 35
     << "\" text-anchor=\"middle\">reconstruction error</text>\n";
  os << "<text x=\"" << left - 8 << "\" y=\"" << top + 10 << "\" text-anchor=\"end\">" << peak << "</text>\n";
  os << "</svg>\n";
  return os.str();
}

}  // namespace fiberspec
