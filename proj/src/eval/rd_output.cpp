#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ncdiff/eval.hpp"

namespace ncdiff {

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(9);
  os << v;
  return os.str();
}

double point_value(const RDPoint& p, RDMetric metric) {
  switch (metric) {
    case RDMetric::kPsnr:
      return p.psnr_db;
    case RDMetric::kMsSsim:
      return p.ms_ssim;
    case RDMetric::kPerceptual:
      return p.perceptual;
  }
  throw std::logic_error("rd plot: unknown metric");
}

const char* axis_name(RDMetric metric) {
  switch (metric) {
    case RDMetric::kPsnr:
      return "PSNR (dB)";
    case RDMetric::kMsSsim:
      return "MS-SSIM";
    case RDMetric::kPerceptual:
      return "perceptual distance";
  }
  return "";
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f << content;
  if (!f) throw std::runtime_error("write failed: " + path);
}

}  // namespace

std::string rd_csv_string(const std::vector<RDRow>& rows) {
  std::ostringstream os;
  os << "codec_id,variant,dataset,bpp,psnr,ms_ssim,perceptual\n";
  for (const RDRow& r : rows) {
    os << r.codec_id << ',' << r.variant << ',' << r.dataset << ',' << fmt(r.bpp) << ',' << fmt(r.psnr)
       << ',' << fmt(r.ms_ssim) << ',';
    if (!std::isnan(r.perceptual)) os << fmt(r.perceptual);
    os << '\n';
  }
  return os.str();
}

void write_rd_csv(const std::string& path, const std::vector<RDRow>& rows) {
  write_text_file(path, rd_csv_string(rows));
}

std::string rd_svg_string(const std::vector<RDCurve>& curves, RDMetric y_axis, const std::string& title) {
  constexpr double kW = 720, kH = 480, kLeft = 80, kRight = 30, kTop = 50, kBottom = 60;
  const std::array<const char*, 6> palette = {"#1f77b4", "#d62728", "#2ca02c",
                                              "#9467bd", "#ff7f0e", "#8c564b"};

  double x_lo = 0, x_hi = 0, y_lo = 0, y_hi = 0;
  bool first = true;
  for (const RDCurve& c : curves)
    for (const RDPoint& p : c.points) {
      const double y = point_value(p, y_axis);
      if (first) {
        x_lo = x_hi = p.bpp;
        y_lo = y_hi = y;
        first = false;
      } else {
        x_lo = std::min(x_lo, p.bpp);
        x_hi = std::max(x_hi, p.bpp);
        y_lo = std::min(y_lo, y);
        y_hi = std::max(y_hi, y);
      }
    }
  if (first) throw std::invalid_argument("rd plot: no points");
  if (x_hi - x_lo < 1e-12) {
    x_lo -= 0.5;
    x_hi += 0.5;
  }
  if (y_hi - y_lo < 1e-12) {
    y_lo -= 0.5;
    y_hi += 0.5;
  }
  const double x_pad = 0.05 * (x_hi - x_lo), y_pad = 0.05 * (y_hi - y_lo);
  x_lo -= x_pad;
  x_hi += x_pad;
  y_lo -= y_pad;
  y_hi += y_pad;

  auto sx = [&](double v) { return kLeft + (v - x_lo) / (x_hi - x_lo) * (kW - kLeft - kRight); };
  auto sy = [&](double v) { return kH - kBottom - (v - y_lo) / (y_hi - y_lo) * (kH - kTop - kBottom); };
  auto tick = [](double v) {
    std::ostringstream os;
    os.precision(4);
    os << v;
    return os.str();
  };

  std::ostringstream os;
  os.precision(7);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
     << "\" viewBox=\"0 0 " << kW << ' ' << kH << "\">\n";
  os << "<rect width=\"" << kW << "\" height=\"" << kH << "\" fill=\"white\"/>\n";
  os << "<text x=\"" << kW / 2 << "\" y=\"28\" text-anchor=\"middle\" font-size=\"17\" "
     << "font-family=\"sans-serif\">" << title << "</text>\n";

  constexpr int kTicks = 5;
  for (int i = 0; i <= kTicks; ++i) {
    const double fx = x_lo + (x_hi - x_lo) * i / kTicks;
    const double fy = y_lo + (y_hi - y_lo) * i / kTicks;
    os << "<line x1=\"" << sx(fx) << "\" y1=\"" << kTop << "\" x2=\"" << sx(fx) << "\" y2=\""
       << kH - kBottom << "\" stroke=\"#dddddd\"/>\n";
    os << "<line x1=\"" << kLeft << "\" y1=\"" << sy(fy) << "\" x2=\"" << kW - kRight << "\" y2=\""
       << sy(fy) << "\" stroke=\"#dddddd\"/>\n";
    os << "<text x=\"" << sx(fx) << "\" y=\"" << kH - kBottom + 18
       << "\" text-anchor=\"middle\" font-size=\"12\" font-family=\"sans-serif\">" << tick(fx)
       << "</text>\n";
    os << "<text x=\"" << kLeft - 8 << "\" y=\"" << sy(fy) + 4
       << "\" text-anchor=\"end\" font-size=\"12\" font-family=\"sans-serif\">" << tick(fy)
       << "</text>\n";
  }
  os << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << kW - kLeft - kRight
     << "\" height=\"" << kH - kTop - kBottom << "\" fill=\"none\" stroke=\"#333333\"/>\n";
  os << "<text x=\"" << (kLeft + kW - kRight) / 2 << "\" y=\"" << kH - 16
     << "\" text-anchor=\"middle\" font-size=\"14\" font-family=\"sans-serif\">bits per pixel</text>\n";
  os << "<text x=\"22\" y=\"" << (kTop + kH - kBottom) / 2
     << "\" text-anchor=\"middle\" font-size=\"14\" font-family=\"sans-serif\" transform=\"rotate(-90 22 "
     << (kTop + kH - kBottom) / 2 << ")\">" << axis_name(y_axis) << "</text>\n";

  for (size_t ci = 0; ci < curves.size(); ++ci) {
    const char* color = palette[ci % palette.size()];
    std::vector<RDPoint> pts = curves[ci].points;
    std::sort(pts.begin(), pts.end(), [](const RDPoint& a, const RDPoint& b) { return a.bpp < b.bpp; });
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (const RDPoint& p : pts) os << sx(p.bpp) << ',' << sy(point_value(p, y_axis)) << ' ';
    os << "\"/>\n";
    for (const RDPoint& p : pts)
      os << "<circle cx=\"" << sx(p.bpp) << "\" cy=\"" << sy(point_value(p, y_axis))
         << "\" r=\"3.5\" fill=\"" << color << "\"/>\n";
    const double ly = kTop + 18 + 18 * static_cast<double>(ci);
    os << "<line x1=\"" << kW - kRight - 150 << "\" y1=\"" << ly << "\" x2=\"" << kW - kRight - 120
       << "\" y2=\"" << ly << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << kW - kRight - 112 << "\" y=\"" << ly + 4
       << "\" font-size=\"12\" font-family=\"sans-serif\">" << curves[ci].codec_id << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

void write_rd_svg(const std::string& path, const std::vector<RDCurve>& curves, RDMetric y_axis,
                  const std::string& title) {
  write_text_file(path, rd_svg_string(curves, y_axis, title));
}

}  // namespace ncdiff
