#include "gin/feat.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <string>

namespace gin::feat {

using geom::Point2;
using geom::Pose;
using world::Observation;
using world::VehicleState;

PathFeature build_path_feature(const geom::Polyline& path, const Pose& pose, double speed, double lookahead,
                               double s_hint) {
  const Point2 p{pose.x, pose.y};
  const auto proj = s_hint < 0 ? geom::project_onto(path, p)
                               : geom::project_onto(path, p, s_hint - 10.0, s_hint + lookahead + 10.0);
  PathFeature f;
  f.e_c_now = proj.lateral;
  f.e_h_now = geom::wrap_angle(pose.theta - proj.tangent);
  const Pose ahead = geom::pose_at_arc_length(path, proj.arc_length + lookahead);
  const Point2 dir{std::cos(ahead.theta), std::sin(ahead.theta)};
  f.e_c_ahead = geom::cross(dir, Point2{p.x - ahead.x, p.y - ahead.y});
  f.e_h_ahead = geom::wrap_angle(pose.theta - ahead.theta);
  f.speed = speed;
  return f;
}

namespace {

const VehicleState* find(const Observation& o, int id) {
  if (id == kEgoId) return &o.ego;
  for (std::size_t k = 0; k < o.npc_ids.size(); ++k) {
    if (o.npc_ids[k] == id) return &o.npcs[k];
  }
  return nullptr;
}

Point2 to_frame(const Pose& ref, Point2 p) {
  const double c = std::cos(ref.theta), s = std::sin(ref.theta);
  const double dx = p.x - ref.x, dy = p.y - ref.y;
  return {c * dx + s * dy, -s * dx + c * dy};
}

void check_square(const Tensor& t, const char* what) {
  if (t.rank() != 2 || t.dim(0) != t.dim(1)) {
    throw ad::ShapeError(std::string(what) + " must be square, got " + ad::shape_string(t.shape()));
  }
}

}  // namespace

Tensor multi_hop_adjacency(const Tensor& binary, const Tensor& dist, std::size_t hops, double tau, bool wedge,
                           bool raw_powers, const Tensor* mask) {
  check_square(binary, "binary adjacency");
  check_square(dist, "distance matrix");
  const std::size_t n = binary.dim(0);
  if (dist.dim(0) != n || (mask && mask->size() != n)) throw ad::ShapeError("multi_hop_adjacency: size mismatch");
  if (hops == 0) throw ad::ShapeError("multi_hop_adjacency: hops must be positive");

  std::vector<double> step(n * n), power(n * n), next(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) step[i * n + j] = (i == j) ? 1.0 : (binary[i * n + j] != 0.0 ? 1.0 : 0.0);
  }
  power = step;
  Tensor out({hops, n, n});
  for (std::size_t k = 0; k < hops; ++k) {
    if (k > 0) {
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          double acc = 0;
          for (std::size_t m = 0; m < n; ++m) acc += power[i * n + m] * step[m * n + j];
          next[i * n + j] = raw_powers ? acc : (acc > 0 ? 1.0 : 0.0);
        }
      }
      power.swap(next);
    }
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const bool keep = !mask || ((*mask)[i] != 0 && (*mask)[j] != 0);
        const double a = power[i * n + j];
        const double w = wedge ? std::exp(-dist[i * n + j] / tau) : 1.0;
        out[(k * n + i) * n + j] = keep && a != 0 ? a * w : 0.0;
      }
    }
  }
  return out;
}

SocialGraphFeature build_social_graph(std::span<const Observation> frames, const FeatConfig& config) {
  const std::size_t h = config.history, n = config.n_max;
  if (frames.size() < h) throw InsufficientHistory("social graph needs " + std::to_string(h) + " frames");
  if (n == 0) throw ad::ShapeError("n_max must be positive");
  const auto window = frames.subspan(frames.size() - h);
  const Observation& last = window.back();
  const Pose ref = last.ego.pose();

  // Nearest-first slot assignment among vehicles in range at the last frame.
  std::vector<std::pair<double, int>> near;
  for (std::size_t k = 0; k < last.npcs.size(); ++k) {
    const double d = geom::distance(last.npcs[k].position, last.ego.position);
    if (d <= config.range) near.push_back({d, last.npc_ids[k]});
  }
  std::sort(near.begin(), near.end());
  if (near.size() > n - 1) near.resize(n - 1);

  SocialGraphFeature f;
  f.ids.assign(n, -1);
  f.ids[0] = kEgoId;
  for (std::size_t k = 0; k < near.size(); ++k) f.ids[k + 1] = near[k].second;

  f.nodes = Tensor({n, h, kNodeDim});
  f.mask = Tensor({n});
  f.positions = Tensor({n, 2});
  for (std::size_t t = 0; t < h; ++t) {
    const Observation& o = window[t];
    for (std::size_t i = 0; i <= near.size(); ++i) {
      const VehicleState* v = find(o, f.ids[i]);
      if (!v) continue;
      const Point2 p = to_frame(ref, v->position);
      double* row = &f.nodes[(i * h + t) * kNodeDim];
      row[0] = p.x;
      row[1] = p.y;
      row[2] = geom::wrap_angle(v->heading - ref.theta);
      row[3] = v->speed - o.ego.speed;
      row[4] = v->accel - o.ego.accel;
      row[5] = v->yaw_rate - o.ego.yaw_rate;
      row[6] = 1.0;
      if (t + 1 == h) {
        f.mask[i] = 1.0;
        f.positions[i * 2] = p.x;
        f.positions[i * 2 + 1] = p.y;
      }
    }
  }

  Tensor binary({n, n}), dist({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double d = std::hypot(f.positions[i * 2] - f.positions[j * 2],
                                  f.positions[i * 2 + 1] - f.positions[j * 2 + 1]);
      dist[i * n + j] = d;
      binary[i * n + j] = (i != j && f.mask[i] != 0 && f.mask[j] != 0 && d <= config.d_close) ? 1.0 : 0.0;
    }
  }
  f.adjacency = multi_hop_adjacency(binary, dist, config.hops, config.tau, config.wedge, config.raw_powers, &f.mask);
  return f;
}

CenteredGraphFeature build_centered_feature(std::span<const Observation> frames, const FeatConfig& config) {
  const std::size_t h = config.history, n = config.n_max;
  if (frames.size() < 2 * h) throw InsufficientHistory("centered feature needs " + std::to_string(2 * h) + " frames");
  const auto window = frames.subspan(frames.size() - 2 * h);
  CenteredGraphFeature c;
  c.past = build_social_graph(window.first(h), config);
  c.future = Tensor({n, h, 2});
  c.valid = Tensor({n});
  const Pose ref = window[h - 1].ego.pose();
  for (std::size_t i = 0; i < n; ++i) {
    if (c.past.mask[i] == 0) continue;
    bool all = true;
    for (const auto& o : window) all = all && find(o, c.past.ids[i]) != nullptr;
    if (!all) continue;
    c.valid[i] = 1.0;
    for (std::size_t t = 0; t < h; ++t) {
      const Point2 p = to_frame(ref, find(window[h + t], c.past.ids[i])->position);
      c.future[(i * h + t) * 2] = p.x;
      c.future[(i * h + t) * 2 + 1] = p.y;
    }
  }
  return c;
}

void write_node_csv(std::ostream& os, int step, const SocialGraphFeature& f, bool header) {
  if (header) os << "step,slot,vehicle_id,frame,x,y,heading,v,a,omega,mask\n";
  const std::size_t n = f.nodes.dim(0), h = f.nodes.dim(1);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t t = 0; t < h; ++t) {
      os << step << ',' << i << ',' << f.ids[i] << ',' << t;
      for (std::size_t d = 0; d < kNodeDim; ++d) os << ',' << f.nodes[(i * h + t) * kNodeDim + d];
      os << '\n';
    }
  }
}

void write_adjacency_csv(std::ostream& os, int step, const SocialGraphFeature& f, bool header) {
  if (header) os << "step,k,i,j,weight\n";
  const std::size_t l = f.adjacency.dim(0), n = f.adjacency.dim(1);
  for (std::size_t k = 0; k < l; ++k) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const double w = f.adjacency[(k * n + i) * n + j];
        if (w != 0) os << step << ',' << k + 1 << ',' << i << ',' << j << ',' << w << '\n';
      }
    }
  }
}

}  // namespace gin::feat
