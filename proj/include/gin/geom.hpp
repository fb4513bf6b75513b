#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace gin::geom {

// Raised for non-finite coordinates, non-convex polygons and malformed shapes.
class GeometryError : public std::invalid_argument {
 public:
  explicit GeometryError(const std::string& what) : std::invalid_argument(what) {}
};

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend Point2 operator+(Point2 a, Point2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Point2 operator-(Point2 a, Point2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Point2 operator*(double s, Point2 p) { return {s * p.x, s * p.y}; }
  friend bool operator==(Point2 a, Point2 b) = default;
};

double dot(Point2 a, Point2 b);
double cross(Point2 a, Point2 b);
double norm(Point2 a);
double distance(Point2 a, Point2 b);
bool is_finite(Point2 p);

// Wraps an angle into (-pi, pi].
double wrap_angle(double a);

struct Segment {
  Point2 a;
  Point2 b;
};

struct Pose {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;
};

// Convex polygon with counter-clockwise winding. Clockwise input is
// reversed on construction; anything non-convex is rejected.
class Polygon {
 public:
  explicit Polygon(std::vector<Point2> vertices);

  const std::vector<Point2>& vertices() const { return vertices_; }
  std::size_t size() const { return vertices_.size(); }
  Segment edge(std::size_t i) const {
    return {vertices_[i], vertices_[(i + 1) % vertices_.size()]};
  }

 private:
  std::vector<Point2> vertices_;
};

class Polyline {
 public:
  explicit Polyline(std::vector<Point2> points);

  const std::vector<Point2>& points() const { return points_; }
  std::size_t size() const { return points_.size(); }
  std::size_t num_segments() const { return points_.size() - 1; }
  Segment segment(std::size_t i) const { return {points_[i], points_[i + 1]}; }
  double length() const;

 private:
  std::vector<Point2> points_;
};

enum class Orientation { kLeft, kRight, kCollinear };

// Orientation of r relative to the directed line p->q. Cross products within
// 1e-9 * scale^2 (scale = largest coordinate magnitude involved) count as
// collinear.
Orientation ccw(Point2 p, Point2 q, Point2 r);

// Closed-segment intersection; degenerate segments behave as points.
bool segments_intersect(const Segment& s1, const Segment& s2);

// Closed containment test (boundary counts as inside).
bool point_in_polygon(Point2 p, const Polygon& g);

// Separating axis test on closed convex polygons.
bool polygons_intersect(const Polygon& g1, const Polygon& g2);

bool polygon_polyline_intersect(const Polygon& g, const Polyline& l);

bool polylines_intersect(const Polyline& l1, const Polyline& l2);

// Rectangle of (length + 2*margin_l) x (width + 2*margin_w) centred on the
// pose and rotated by its heading.
Polygon vehicle_footprint(const Pose& pose, double length, double width,
                          double margin_l = 0.0, double margin_w = 0.0);

// Which of the four ego/other conflict cases fired.
struct RiskCases {
  bool polygon_polygon = false;    // ego footprint vs other footprint
  bool polygon_polyline = false;   // ego footprint vs other trajectory
  bool polyline_polygon = false;   // ego trajectory vs other footprint
  bool polyline_polyline = false;  // ego trajectory vs other trajectory

  bool any() const {
    return polygon_polygon || polygon_polyline || polyline_polygon || polyline_polyline;
  }
};

RiskCases risk_cases(const Polygon& ego_g, const Polyline& ego_l,
                     std::span<const Polygon> others_g,
                     std::span<const Polyline> others_l);

// Indicator OR of the four risk cases over all other vehicles: 0 or 1.
int auxiliary_cost(const Polygon& ego_g, const Polyline& ego_l,
                   std::span<const Polygon> others_g,
                   std::span<const Polyline> others_l);

// Projection of a point onto a polyline (nearest segment).
struct PathProjection {
  std::size_t segment = 0;
  double t = 0.0;           // parameter within the segment, [0, 1]
  double arc_length = 0.0;  // distance along the polyline to the foot point
  double lateral = 0.0;     // signed offset, positive to the left of travel
  double tangent = 0.0;     // heading of the segment
  Point2 foot;
};

PathProjection project_onto(const Polyline& path, Point2 p);
// Same, restricted to segments overlapping the arc-length window [s_lo, s_hi].
// Used to track progress on routes that pass the same place twice.
PathProjection project_onto(const Polyline& path, Point2 p, double s_lo, double s_hi);

// Point and tangent heading at an arc length, clamped to the polyline ends.
Pose pose_at_arc_length(const Polyline& path, double s);

// Shifts a polyline sideways by `offset` (positive = left) with mitred joints.
Polyline offset_polyline(const Polyline& path, double offset);

}  // namespace gin::geom
