#include "percnn/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

namespace percnn {

namespace {

void check_pair(const Trajectory& pred, const Trajectory& ref) {
  if (pred.size() == 0 || pred.size() != ref.size())
    throw ShapeError("prediction has " + std::to_string(pred.size()) +
                     " snapshots, reference " + std::to_string(ref.size()));
  if (std::abs(pred.dt - ref.dt) > 1e-12 * std::abs(ref.dt) ||
      std::abs(pred.t0 - ref.t0) > 1e-12 * std::max(1.0, std::abs(ref.t0)))
    throw ShapeError("prediction and reference use different time axes");
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (!pred[i].same_shape(ref[i]) || !pred[i].same_shape(pred[0]))
      throw ShapeError("snapshot " + std::to_string(i) + " shapes differ");
}

double snapshot_sse(const Field& a, const Field& b) {
  const auto av = a.values();
  const auto bv = b.values();
  double s = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double d = av[i] - bv[i];
    s += d * d;
  }
  return s;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string px(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace

const char* to_string(Phase phase) {
  return phase == Phase::train ? "train" : "extrapolation";
}

double accumulative_rmse(const Trajectory& pred, const Trajectory& ref, std::size_t k) {
  check_pair(pred, ref);
  if (k < 1 || k > pred.size())
    throw SpecError("k = " + std::to_string(k) + " outside 1.." + std::to_string(pred.size()));
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) total += snapshot_sse(pred[i], ref[i]);
  const double n = static_cast<double>(pred[0].size());
  return std::sqrt(total / (n * static_cast<double>(k)));
}

ErrorCurve error_curve(const Trajectory& pred, const Trajectory& ref,
                       std::size_t train_end_index) {
  check_pair(pred, ref);
  ErrorCurve c;
  const double n = static_cast<double>(pred[0].size());
  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    total += snapshot_sse(pred[i], ref[i]);
    c.times.push_back(pred.time(i));
    c.rmse.push_back(std::sqrt(total / (n * static_cast<double>(i + 1))));
    c.phase.push_back(i <= train_end_index ? Phase::train : Phase::extrapolation);
  }
  return c;
}

void write_curve_csv(std::ostream& os, const ErrorCurve& curve) {
  os << "k,t,rmse,phase\n";
  char buf[128];
  for (std::size_t i = 0; i < curve.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%s\n", i + 1, curve.times[i], curve.rmse[i],
                  to_string(curve.phase[i]));
    os << buf;
  }
}

namespace {

std::string xml_escape(const std::string& s) {
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

}  // namespace

void write_curve_svg(std::ostream& os, const std::vector<ErrorCurve>& curves,
                     const std::vector<std::string>& labels, const std::string& title) {
  static const char* const colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd"};
  const double W = 720, H = 440, left = 70, right = 20, top = 40, bottom = 50;
  double t0 = 0, t1 = 1, ymax = 0;
  bool first = true;
  for (const auto& c : curves) {
    if (c.size() == 0) continue;
    if (first) {
      t0 = c.times.front();
      t1 = c.times.back();
      first = false;
    }
    t0 = std::min(t0, c.times.front());
    t1 = std::max(t1, c.times.back());
    for (double r : c.rmse)
      if (std::isfinite(r)) ymax = std::max(ymax, r);
  }
  if (t1 <= t0) t1 = t0 + 1;
  if (ymax <= 0) ymax = 1;
  ymax *= 1.05;
  auto X = [&](double t) { return left + (t - t0) / (t1 - t0) * (W - left - right); };
  auto Y = [&](double r) { return H - bottom - r / ymax * (H - top - bottom); };

  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << xml_escape(title)
     << "</text>\n";
  os << "<line x1=\"" << left << "\" y1=\"" << H - bottom << "\" x2=\"" << W - right
     << "\" y2=\"" << H - bottom << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\""
     << H - bottom << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double t = t0 + (t1 - t0) * i / 5.0;
    const double r = ymax * i / 5.0;
    os << "<line x1=\"" << px(X(t)) << "\" y1=\"" << H - bottom << "\" x2=\"" << px(X(t))
       << "\" y2=\"" << H - bottom + 5 << "\" stroke=\"black\"/>";
    os << "<text x=\"" << px(X(t)) << "\" y=\"" << H - bottom + 18
       << "\" text-anchor=\"middle\">" << num(t) << "</text>\n";
    os << "<line x1=\"" << left - 5 << "\" y1=\"" << px(Y(r)) << "\" x2=\"" << left
       << "\" y2=\"" << px(Y(r)) << "\" stroke=\"black\"/>";
    os << "<text x=\"" << left - 8 << "\" y=\"" << px(Y(r) + 4) << "\" text-anchor=\"end\">"
       << num(r) << "</text>\n";
  }
  os << "<text x=\"" << (left + W - right) / 2 << "\" y=\"" << H - 12
     << "\" text-anchor=\"middle\">t</text>\n";
  os << "<text x=\"16\" y=\"" << (top + H - bottom) / 2 << "\" transform=\"rotate(-90 16 "
     << (top + H - bottom) / 2 << ")\" text-anchor=\"middle\">accumulative RMSE</text>\n";

  // Train/extrapolation boundary of the first curve.
  if (!curves.empty()) {
    const auto& c = curves.front();
    for (std::size_t i = 0; i < c.size(); ++i)
      if (c.phase[i] == Phase::extrapolation) {
        os << "<line x1=\"" << px(X(c.times[i])) << "\" y1=\"" << top << "\" x2=\""
           << px(X(c.times[i])) << "\" y2=\"" << H - bottom
           << "\" stroke=\"gray\" stroke-dasharray=\"5,4\"/>\n";
        break;
      }
  }
  for (std::size_t ci = 0; ci < curves.size(); ++ci) {
    const auto& c = curves[ci];
    const char* color = colors[ci % 5];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < c.size(); ++i) {
      if (!std::isfinite(c.rmse[i])) continue;
      os << px(X(c.times[i])) << ',' << px(Y(c.rmse[i])) << ' ';
    }
    os << "\"/>\n";
    const double ly = top + 10 + 18.0 * static_cast<double>(ci);
    os << "<line x1=\"" << W - right - 150 << "\" y1=\"" << px(ly) << "\" x2=\""
       << W - right - 125 << "\" y2=\"" << px(ly) << "\" stroke=\"" << color
       << "\" stroke-width=\"2\"/>";
    os << "<text x=\"" << W - right - 120 << "\" y=\"" << px(ly + 4) << "\">"
       << xml_escape(ci < labels.size() ? labels[ci] : "curve " + std::to_string(ci)) << "</text>\n";
  }
  os << "</svg>\n";
}

}  // namespace percnn
