#include "gin/geom.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace gin::geom {

namespace {

constexpr double kCollinearTol = 1e-9;

void require_finite(Point2 p) {
  if (!is_finite(p)) throw GeometryError("non-finite coordinate");
}

double max_abs(std::initializer_list<Point2> pts) {
  double m = 0.0;
  for (const auto& p : pts) m = std::max({m, std::abs(p.x), std::abs(p.y)});
  return m;
}

// p is known to be collinear with segment s; closed bounding-box test.
bool on_segment(const Segment& s, Point2 p) {
  return std::min(s.a.x, s.b.x) <= p.x && p.x <= std::max(s.a.x, s.b.x) &&
         std::min(s.a.y, s.b.y) <= p.y && p.y <= std::max(s.a.y, s.b.y);
}

}  // namespace

double dot(Point2 a, Point2 b) { return a.x * b.x + a.y * b.y; }
double cross(Point2 a, Point2 b) { return a.x * b.y - a.y * b.x; }
double norm(Point2 a) { return std::hypot(a.x, a.y); }
double distance(Point2 a, Point2 b) { return norm(a - b); }
bool is_finite(Point2 p) { return std::isfinite(p.x) && std::isfinite(p.y); }

double wrap_angle(double a) {
  constexpr double kPi = std::numbers::pi;
  if (a > -kPi && a <= kPi) return a;
  a = std::fmod(a + kPi, 2.0 * kPi);
  if (a <= 0.0) a += 2.0 * kPi;
  return a - kPi;
}

Polygon::Polygon(std::vector<Point2> vertices) : vertices_(std::move(vertices)) {
  const std::size_t n = vertices_.size();
  if (n < 3) throw GeometryError("polygon needs at least 3 vertices");
  for (const auto& p : vertices_) require_finite(p);
  for (std::size_t i = 0; i < n; ++i) {
    if (vertices_[i] == vertices_[(i + 1) % n]) {
      throw GeometryError("polygon has repeated consecutive vertices");
    }
  }
  double area2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) area2 += cross(vertices_[i], vertices_[(i + 1) % n]);
  if (area2 == 0.0) throw GeometryError("degenerate polygon");
  if (area2 < 0.0) std::reverse(vertices_.begin(), vertices_.end());

  // Convex and simple: no right turns, and total turning of exactly one loop.
  double turning = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Point2 a = vertices_[i];
    const Point2 b = vertices_[(i + 1) % n];
    const Point2 c = vertices_[(i + 2) % n];
    if (ccw(a, b, c) == Orientation::kRight) throw GeometryError("polygon is not convex");
    turning += std::atan2(cross(b - a, c - b), dot(b - a, c - b));
  }
  if (std::abs(turning - 2.0 * std::numbers::pi) > 1e-6) {
    throw GeometryError("polygon is not simple");
  }
}

Polyline::Polyline(std::vector<Point2> points) : points_(std::move(points)) {
  if (points_.size() < 2) throw GeometryError("polyline needs at least 2 points");
  for (const auto& p : points_) require_finite(p);
}

double Polyline::length() const {
  double s = 0.0;
  for (std::size_t i = 0; i + 1 < points_.size(); ++i) s += distance(points_[i], points_[i + 1]);
  return s;
}

Orientation ccw(Point2 p, Point2 q, Point2 r) {
  require_finite(p);
  require_finite(q);
  require_finite(r);
  const double c = cross(q - p, r - p);
  const double scale = max_abs({p, q, r});
  if (std::abs(c) <= kCollinearTol * scale * scale) return Orientation::kCollinear;
  return c > 0.0 ? Orientation::kLeft : Orientation::kRight;
}

bool segments_intersect(const Segment& s1, const Segment& s2) {
  const Orientation d1 = ccw(s2.a, s2.b, s1.a);
  const Orientation d2 = ccw(s2.a, s2.b, s1.b);
  const Orientation d3 = ccw(s1.a, s1.b, s2.a);
  const Orientation d4 = ccw(s1.a, s1.b, s2.b);

  const bool straddle1 = (d1 == Orientation::kLeft && d2 == Orientation::kRight) ||
                         (d1 == Orientation::kRight && d2 == Orientation::kLeft);
  const bool straddle2 = (d3 == Orientation::kLeft && d4 == Orientation::kRight) ||
                         (d3 == Orientation::kRight && d4 == Orientation::kLeft);
  if (straddle1 && straddle2) return true;

  if (d1 == Orientation::kCollinear && on_segment(s2, s1.a)) return true;
  if (d2 == Orientation::kCollinear && on_segment(s2, s1.b)) return true;
  if (d3 == Orientation::kCollinear && on_segment(s1, s2.a)) return true;
  if (d4 == Orientation::kCollinear && on_segment(s1, s2.b)) return true;
  return false;
}

bool point_in_polygon(Point2 p, const Polygon& g) {
  for (std::size_t i = 0; i < g.size(); ++i) {
    const Segment e = g.edge(i);
    if (ccw(e.a, e.b, p) == Orientation::kRight) return false;
  }
  return true;
}

namespace {

// True if some edge normal of `g` separates the projections of g and h.
bool has_separating_axis(const Polygon& g, const Polygon& h) {
  for (std::size_t i = 0; i < g.size(); ++i) {
    const Segment e = g.edge(i);
    const Point2 axis{-(e.b.y - e.a.y), e.b.x - e.a.x};
    double min_g = dot(axis, g.vertices()[0]);
    double max_g = min_g;
    for (const auto& v : g.vertices()) {
      const double p = dot(axis, v);
      min_g = std::min(min_g, p);
      max_g = std::max(max_g, p);
    }
    double min_h = dot(axis, h.vertices()[0]);
    double max_h = min_h;
    for (const auto& v : h.vertices()) {
      const double p = dot(axis, v);
      min_h = std::min(min_h, p);
      max_h = std::max(max_h, p);
    }
    if (max_g < min_h || max_h < min_g) return true;
  }
  return false;
}

}  // namespace

bool polygons_intersect(const Polygon& g1, const Polygon& g2) {
  return !has_separating_axis(g1, g2) && !has_separating_axis(g2, g1);
}

bool polygon_polyline_intersect(const Polygon& g, const Polyline& l) {
  for (const auto& p : l.points()) {
    if (point_in_polygon(p, g)) return true;
  }
  for (std::size_t i = 0; i < l.num_segments(); ++i) {
    const Segment s = l.segment(i);
    for (std::size_t j = 0; j < g.size(); ++j) {
      if (segments_intersect(s, g.edge(j))) return true;
    }
  }
  return false;
}

bool polylines_intersect(const Polyline& l1, const Polyline& l2) {
  for (std::size_t i = 0; i < l1.num_segments(); ++i) {
    for (std::size_t j = 0; j < l2.num_segments(); ++j) {
      if (segments_intersect(l1.segment(i), l2.segment(j))) return true;
    }
  }
  return false;
}

Polygon vehicle_footprint(const Pose& pose, double length, double width, double margin_l,
                          double margin_w) {
  if (!(length > 0.0) || !(width > 0.0)) {
    throw GeometryError("vehicle dimensions must be positive");
  }
  if (!(margin_l >= 0.0) || !(margin_w >= 0.0)) {
    throw GeometryError("safety margins must be non-negative");
  }
  if (!std::isfinite(pose.x) || !std::isfinite(pose.y) || !std::isfinite(pose.theta)) {
    throw GeometryError("non-finite pose");
  }
  const double hl = 0.5 * length + margin_l;
  const double hw = 0.5 * width + margin_w;
  const double c = std::cos(pose.theta);
  const double s = std::sin(pose.theta);
  const Point2 local[4] = {{hl, -hw}, {hl, hw}, {-hl, hw}, {-hl, -hw}};
  std::vector<Point2> corners;
  corners.reserve(4);
  for (const auto& q : local) {
    corners.push_back({pose.x + c * q.x - s * q.y, pose.y + s * q.x + c * q.y});
  }
  return Polygon(std::move(corners));
}

RiskCases risk_cases(const Polygon& ego_g, const Polyline& ego_l,
                     std::span<const Polygon> others_g, std::span<const Polyline> others_l) {
  if (others_g.size() != others_l.size()) {
    throw GeometryError("other-vehicle polygons and polylines are not index-aligned");
  }
  RiskCases cases;
  for (std::size_t i = 0; i < others_g.size(); ++i) {
    cases.polygon_polygon = cases.polygon_polygon || polygons_intersect(ego_g, others_g[i]);
    cases.polygon_polyline =
        cases.polygon_polyline || polygon_polyline_intersect(ego_g, others_l[i]);
    cases.polyline_polygon =
        cases.polyline_polygon || polygon_polyline_intersect(others_g[i], ego_l);
    cases.polyline_polyline = cases.polyline_polyline || polylines_intersect(ego_l, others_l[i]);
  }
  return cases;
}

int auxiliary_cost(const Polygon& ego_g, const Polyline& ego_l,
                   std::span<const Polygon> others_g, std::span<const Polyline> others_l) {
  return risk_cases(ego_g, ego_l, others_g, others_l).any() ? 1 : 0;
}

PathProjection project_onto(const Polyline& path, Point2 p) {
  return project_onto(path, p, -std::numeric_limits<double>::infinity(),
                      std::numeric_limits<double>::infinity());
}

PathProjection project_onto(const Polyline& path, Point2 p, double s_lo, double s_hi) {
  require_finite(p);
  PathProjection best;
  double best_d2 = std::numeric_limits<double>::infinity();
  double arc = 0.0;
  for (std::size_t i = 0; i < path.num_segments(); ++i) {
    const Segment s = path.segment(i);
    const Point2 d = s.b - s.a;
    const double len2 = dot(d, d);
    const double len = std::sqrt(len2);
    if (arc + len < s_lo || arc > s_hi) {
      arc += len;
      continue;
    }
    double t = len2 > 0.0 ? dot(p - s.a, d) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const Point2 foot = s.a + t * d;
    const Point2 off = p - foot;
    const double d2 = dot(off, off);
    if (d2 < best_d2) {
      best_d2 = d2;
      best.segment = i;
      best.t = t;
      best.arc_length = arc + t * len;
      best.foot = foot;
      best.tangent = len2 > 0.0 ? std::atan2(d.y, d.x) : best.tangent;
      // Distance to the foot, so points beyond either end of the path count
      // their full distance from the endpoint.
      best.lateral = std::copysign(std::sqrt(d2), cross(d, p - s.a));
    }
    arc += len;
  }
  if (std::isinf(best_d2)) return project_onto(path, p);
  return best;
}

Pose pose_at_arc_length(const Polyline& path, double s) {
  const auto& pts = path.points();
  double remaining = std::max(0.0, s);
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    const Point2 d = pts[i + 1] - pts[i];
    const double len = norm(d);
    const bool last = i + 2 == pts.size();
    if (len > 0.0 && (remaining <= len || last)) {
      const double t = std::min(remaining, len) / len;
      const Point2 q = pts[i] + t * d;
      return {q.x, q.y, std::atan2(d.y, d.x)};
    }
    remaining -= len;
  }
  const Point2 d = pts.back() - pts[pts.size() - 2];
  return {pts.back().x, pts.back().y, std::atan2(d.y, d.x)};
}

Polyline offset_polyline(const Polyline& path, double offset) {
  const auto& pts = path.points();
  const std::size_t n = pts.size();
  auto left_normal = [&](std::size_t i) {
    const Point2 d = pts[i + 1] - pts[i];
    const double len = norm(d);
    return Point2{-d.y / len, d.x / len};
  };
  std::vector<Point2> out;
  out.reserve(n);
  out.push_back(pts[0] + offset * left_normal(0));
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const Point2 n0 = left_normal(i - 1);
    const Point2 n1 = left_normal(i);
    Point2 m = n0 + n1;
    const double denom = 1.0 + dot(n0, n1);
    if (denom < 1e-6) {
      // Full reversal: no finite mitre, keep both offset points.
      out.push_back(pts[i] + offset * n0);
      out.push_back(pts[i] + offset * n1);
      continue;
    }
    out.push_back(pts[i] + (offset / denom) * m);
  }
  out.push_back(pts[n - 1] + offset * left_normal(n - 2));
  return Polyline(std::move(out));
}

}  // namespace gin::geom
