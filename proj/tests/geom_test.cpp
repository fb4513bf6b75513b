#include "gin/geom.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "oracles.hpp"

using namespace gin::geom;

namespace {

Polygon square(double x0, double y0, double side = 1.0) {
  return Polygon({{x0, y0}, {x0 + side, y0}, {x0 + side, y0 + side}, {x0, y0 + side}});
}

Point2 rotate(Point2 p, double th, Point2 t) {
  return {std::cos(th) * p.x - std::sin(th) * p.y + t.x, std::sin(th) * p.x + std::cos(th) * p.y + t.y};
}

}  // namespace

TEST(Ccw, Examples) {
  EXPECT_EQ(ccw({0, 0}, {1, 0}, {0, 1}), Orientation::kLeft);
  EXPECT_EQ(ccw({0, 0}, {1, 0}, {2, 0}), Orientation::kCollinear);
  EXPECT_EQ(ccw({0, 0}, {1, 0}, {1, -1}), Orientation::kRight);
}

TEST(Ccw, ToleranceScalesWithCoordinates) {
  // 1e-7 off a line at coordinate scale 1000: cross ~1e-4 < 1e-9 * 1e6.
  EXPECT_EQ(ccw({1000, 1000}, {1001, 1000}, {1002, 1000 + 1e-7}), Orientation::kCollinear);
  EXPECT_EQ(ccw({0, 0}, {1, 0}, {2, 1e-6}), Orientation::kLeft);
}

TEST(Ccw, RejectsNonFinite) {
  EXPECT_THROW(ccw({0, 0}, {NAN, 0}, {1, 1}), GeometryError);
  EXPECT_THROW(ccw({0, 0}, {1, 0}, {INFINITY, 1}), GeometryError);
}

TEST(Segments, Examples) {
  EXPECT_TRUE(segments_intersect({{0, 0}, {2, 2}}, {{0, 2}, {2, 0}}));
  EXPECT_FALSE(segments_intersect({{0, 0}, {1, 0}}, {{2, 0}, {3, 0}}));
  EXPECT_TRUE(segments_intersect({{0, 0}, {1, 1}}, {{1, 1}, {2, 0}}));
}

TEST(Segments, CollinearOverlapAndDegenerate) {
  EXPECT_TRUE(segments_intersect({{0, 0}, {2, 0}}, {{1, 0}, {3, 0}}));
  EXPECT_TRUE(segments_intersect({{1, 1}, {1, 1}}, {{0, 0}, {2, 2}}));
  EXPECT_FALSE(segments_intersect({{1, 1.5}, {1, 1.5}}, {{0, 0}, {2, 2}}));
  EXPECT_TRUE(segments_intersect({{1, 1}, {1, 1}}, {{1, 1}, {1, 1}}));
}

TEST(Segments, AgreesWithParametricOracle) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-10, 10);
  int checked = 0;
  for (int i = 0; i < 5000; ++i) {
    Point2 a{u(rng), u(rng)}, b{u(rng), u(rng)}, c{u(rng), u(rng)}, d{u(rng), u(rng)};
    auto v = oracle::segments(a, b, c, d);
    if (v.magnitude <= 1e-6) continue;
    ++checked;
    ASSERT_EQ(segments_intersect({a, b}, {c, d}), v.intersect) << i;
  }
  EXPECT_GT(checked, 4500);
}

TEST(Polygon, ValidatesInput) {
  EXPECT_THROW(Polygon({{0, 0}, {1, 0}}), GeometryError);
  EXPECT_THROW(Polygon({{0, 0}, {2, 0}, {1, 0.2}, {2, 2}, {0, 2}}), GeometryError);
  EXPECT_THROW(Polygon({{0, 0}, {1, 0}, {1, 0}, {0, 1}}), GeometryError);
  Polygon cw({{0, 0}, {0, 1}, {1, 1}, {1, 0}});
  double a = 0;
  for (std::size_t i = 0; i < cw.size(); ++i) a += cross(cw.edge(i).a, cw.edge(i).b);
  EXPECT_GT(a, 0);
}

TEST(Polygons, Examples) {
  EXPECT_TRUE(polygons_intersect(square(0, 0), square(0.5, 0.5)));
  EXPECT_FALSE(polygons_intersect(square(0, 0), square(3, 0)));
  EXPECT_TRUE(polygons_intersect(square(0, 0), square(1, 0)));  // shared edge
}

TEST(Polygons, RotatedSquareBoundaryCase) {
  const double h = std::sqrt(0.5);
  auto diamond = [h](double cx) {
    return std::vector<Point2>{{cx - h, 0.5}, {cx, 0.5 - h}, {cx + h, 0.5}, {cx, 0.5 + h}};
  };
  const std::vector<Point2> unit{{0, 0}, {1, 0}, {1, 1}, {0, 1}};
  for (double cx : {1.70, 1.72}) {
    const bool expected = oracle::polygons_by_sampling(unit, diamond(cx), 1000);
    EXPECT_EQ(polygons_intersect(Polygon(unit), Polygon(diamond(cx))), expected) << cx;
  }
  EXPECT_TRUE(polygons_intersect(Polygon(unit), Polygon(diamond(1.70))));
  EXPECT_FALSE(polygons_intersect(Polygon(unit), Polygon(diamond(1.72))));
}

TEST(Polygons, SymmetricAndRigidMotionInvariant) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-3, 3), th(-3.1, 3.1);
  for (int i = 0; i < 2000; ++i) {
    auto p = oracle::random_convex(rng, {u(rng), u(rng)}, 1.0);
    auto q = oracle::random_convex(rng, {u(rng), u(rng)}, 1.5);
    if (oracle::polygons(p, q).magnitude <= 1e-6) continue;
    const bool r = polygons_intersect(Polygon(p), Polygon(q));
    EXPECT_EQ(r, polygons_intersect(Polygon(q), Polygon(p)));
    const double a = th(rng);
    const Point2 t{u(rng) * 100, u(rng) * 100};
    for (auto& v : p) v = rotate(v, a, t);
    for (auto& v : q) v = rotate(v, a, t);
    EXPECT_EQ(r, polygons_intersect(Polygon(p), Polygon(q)));
  }
}

TEST(PolygonPolyline, Examples) {
  EXPECT_TRUE(polygon_polyline_intersect(square(0, 0), Polyline({{-1, 0.5}, {2, 0.5}})));
  EXPECT_FALSE(polygon_polyline_intersect(square(0, 0), Polyline({{5, 5}, {6, 6}})));
  EXPECT_TRUE(polygon_polyline_intersect(square(0, 0), Polyline({{0.2, 0.2}, {0.8, 0.8}})));
  // Stationary vehicle: degenerate polyline inside.
  EXPECT_TRUE(polygon_polyline_intersect(square(0, 0), Polyline({{0.5, 0.5}, {0.5, 0.5}})));
}

TEST(Polylines, Examples) {
  EXPECT_TRUE(polylines_intersect(Polyline({{0, 0}, {2, 0}}), Polyline({{1, -1}, {1, 1}})));
  EXPECT_FALSE(polylines_intersect(Polyline({{0, 0}, {1, 0}}), Polyline({{0, 1}, {1, 1}})));
}

TEST(Polylines, RandomWalksMatchAllPairs) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> step(0, 1);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<Point2> a{{0, 0}}, b{{step(rng) * 3, step(rng) * 3}};
    for (int i = 0; i < 9; ++i) {
      a.push_back(a.back() + Point2{step(rng), step(rng)});
      b.push_back(b.back() + Point2{step(rng), step(rng)});
    }
    bool brute = false;
    double margin = 1e300;
    for (std::size_t i = 0; i + 1 < a.size(); ++i) {
      for (std::size_t j = 0; j + 1 < b.size(); ++j) {
        auto v = oracle::segments(a[i], a[i + 1], b[j], b[j + 1]);
        brute = brute || v.intersect;
        margin = std::min(margin, v.magnitude);
      }
    }
    if (margin <= 1e-6) continue;
    EXPECT_EQ(polylines_intersect(Polyline(a), Polyline(b)), brute);
    EXPECT_EQ(polylines_intersect(Polyline(b), Polyline(a)), brute);
  }
}

TEST(Footprint, AxisAlignedAndRotated) {
  auto g = vehicle_footprint({0, 0, 0}, 4, 2, 0.5, 0.25);
  for (auto v : g.vertices()) {
    EXPECT_NEAR(std::abs(v.x), 2.5, 1e-12);
    EXPECT_NEAR(std::abs(v.y), 1.25, 1e-12);
  }
  auto r = vehicle_footprint({0, 0, std::numbers::pi / 2}, 4, 2, 0.5, 0.25);
  for (auto v : r.vertices()) {
    EXPECT_NEAR(std::abs(v.x), 1.25, 1e-12);
    EXPECT_NEAR(std::abs(v.y), 2.5, 1e-12);
  }
  const double th = std::numbers::pi / 4;
  auto q = vehicle_footprint({3, -1, th}, 4, 2, 0.5, 0.25);
  for (auto v : q.vertices()) {
    // Undo the rotation with an explicit 2x2 matrix and compare to the box.
    const double dx = v.x - 3, dy = v.y + 1;
    const double lx = std::cos(th) * dx + std::sin(th) * dy;
    const double ly = -std::sin(th) * dx + std::cos(th) * dy;
    EXPECT_NEAR(std::abs(lx), 2.5, 1e-12);
    EXPECT_NEAR(std::abs(ly), 1.25, 1e-12);
  }
  EXPECT_THROW(vehicle_footprint({0, 0, 0}, 0, 2), GeometryError);
  EXPECT_THROW(vehicle_footprint({0, 0, 0}, 4, 2, -0.1, 0), GeometryError);
}

TEST(AuxiliaryCost, Examples) {
  auto ego_g = vehicle_footprint({0, 0, 0}, 4, 2, 0.5, 0.5);
  Polyline ego_l({{0, 0}, {10, 0}});
  EXPECT_EQ(auxiliary_cost(ego_g, ego_l, {}, {}), 0);

  std::vector<Polygon> og{vehicle_footprint({2, 0.5, 0}, 4, 2)};
  std::vector<Polyline> ol{Polyline({{2, 0.5}, {2, 0.5}})};
  EXPECT_EQ(auxiliary_cost(ego_g, ego_l, og, ol), 1);
}

TEST(AuxiliaryCost, EachCaseFiresAlone) {
  auto ego_g = vehicle_footprint({0, 0, 0}, 4, 2, 0.5, 0.5);
  // (a) footprints overlap, trajectories parked far apart.
  {
    Polyline ego_l({{0, 0}, {0, 0}});
    std::vector<Polygon> og{vehicle_footprint({0, 2.5, 0}, 4, 2)};
    std::vector<Polyline> ol{Polyline({{0, 2.5}, {0, 2.5}})};
    auto rc = risk_cases(ego_g, ego_l, og, ol);
    EXPECT_TRUE(rc.polygon_polygon);
    EXPECT_FALSE(rc.polygon_polyline || rc.polyline_polygon || rc.polyline_polyline);
  }
  // (b) other's trajectory enters the ego footprint.
  {
    Polyline ego_l({{0, 0}, {-1, 0}});
    std::vector<Polygon> og{vehicle_footprint({20, 0, 0}, 4, 2)};
    std::vector<Polyline> ol{Polyline({{20, 0}, {2, 0.2}})};
    auto rc = risk_cases(ego_g, ego_l, og, ol);
    EXPECT_TRUE(rc.polygon_polyline);
    EXPECT_FALSE(rc.polygon_polygon || rc.polyline_polygon || rc.polyline_polyline);
  }
  // (c) ego trajectory enters the other's footprint.
  {
    Polyline ego_l({{0, 0}, {18.5, 0}});
    std::vector<Polygon> og{vehicle_footprint({20, 0, 0}, 4, 2)};
    std::vector<Polyline> ol{Polyline({{20, 0}, {25, 0}})};
    auto rc = risk_cases(ego_g, ego_l, og, ol);
    EXPECT_TRUE(rc.polyline_polygon);
    EXPECT_FALSE(rc.polygon_polygon || rc.polygon_polyline || rc.polyline_polyline);
  }
  // (d) crossing trajectories with disjoint footprints.
  {
    Polyline ego_l({{0, 0}, {10, 0}});
    std::vector<Polygon> og{vehicle_footprint({6, -8, std::numbers::pi / 2}, 4, 2)};
    std::vector<Polyline> ol{Polyline({{6, -8}, {6, 3}})};
    auto rc = risk_cases(ego_g, ego_l, og, ol);
    EXPECT_TRUE(rc.polyline_polyline);
    EXPECT_FALSE(rc.polygon_polygon || rc.polygon_polyline || rc.polyline_polygon);
    EXPECT_EQ(auxiliary_cost(ego_g, ego_l, og, ol), 1);
  }
}

TEST(AuxiliaryCost, MonotoneInAddedVehicles) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-15, 15), th(-3, 3);
  auto ego_g = vehicle_footprint({0, 0, 0}, 4.5, 1.9, 0.5, 0.5);
  Polyline ego_l({{0, 0}, {5, 0}, {10, 0.5}});
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<Polygon> og;
    std::vector<Polyline> ol;
    int prev = 0;
    for (int k = 0; k < 6; ++k) {
      Point2 c{u(rng), u(rng)};
      const double h = th(rng);
      og.push_back(vehicle_footprint({c.x, c.y, h}, 4.5, 1.9));
      ol.push_back(Polyline({c, c + Point2{5 * std::cos(h), 5 * std::sin(h)}}));
      const int now = auxiliary_cost(ego_g, ego_l, og, ol);
      EXPECT_GE(now, prev);
      prev = now;
    }
  }
}

TEST(PathProjection, LateralSignAndArcLength) {
  Polyline path({{0, 0}, {10, 0}, {10, 10}});
  auto pr = project_onto(path, {4, 1});
  EXPECT_NEAR(pr.lateral, 1.0, 1e-12);
  EXPECT_NEAR(pr.arc_length, 4.0, 1e-12);
  EXPECT_NEAR(pr.tangent, 0.0, 1e-12);
  auto pr2 = project_onto(path, {11, 5});
  EXPECT_NEAR(pr2.lateral, -1.0, 1e-12);
  EXPECT_NEAR(pr2.arc_length, 15.0, 1e-12);
  auto pose = pose_at_arc_length(path, 12);
  EXPECT_NEAR(pose.x, 10, 1e-12);
  EXPECT_NEAR(pose.y, 2, 1e-12);
  EXPECT_NEAR(pose.theta, std::numbers::pi / 2, 1e-12);
}

TEST(PathProjection, BeyondEndpointsMeasuresDistanceToEnd) {
  Polyline path({{0, 0}, {10, 0}});
  auto past = project_onto(path, {16, 8});
  EXPECT_NEAR(past.lateral, 10.0, 1e-12);
  EXPECT_NEAR(past.arc_length, 10.0, 1e-12);
  auto behind = project_onto(path, {-3, -4});
  EXPECT_NEAR(behind.lateral, -5.0, 1e-12);
  auto ahead = project_onto(path, {25, 0});
  EXPECT_NEAR(std::abs(ahead.lateral), 15.0, 1e-12);
}

TEST(PathProjection, OffsetPolylineKeepsDistance) {
  Polyline path({{0, 0}, {10, 0}, {10, 10}});
  auto right = offset_polyline(path, -1.5);
  // Outer corner of the left turn sits at arc length 11.5; points near the
  // mitre are farther than the offset from the corner vertex.
  for (double s = 0.5; s < right.length(); s += 0.7) {
    if (std::abs(s - 11.5) < 2.0) continue;
    auto p = pose_at_arc_length(right, s);
    EXPECT_NEAR(project_onto(path, {p.x, p.y}).lateral, -1.5, 1e-9);
  }
}

TEST(WrapAngle, Range) {
  EXPECT_NEAR(wrap_angle(3 * std::numbers::pi), std::numbers::pi, 1e-12);
  EXPECT_NEAR(wrap_angle(-std::numbers::pi), std::numbers::pi, 1e-12);
  EXPECT_NEAR(wrap_angle(0.5), 0.5, 1e-15);
}
