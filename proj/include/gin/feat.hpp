#pragma once

#include <array>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <vector>

#include "gin/geom.hpp"
#include "gin/tensor.hpp"
#include "gin/world.hpp"

namespace gin::feat {

using ad::Tensor;

// Width of a node vector: x, y, heading, v, a, omega (all relative to the
// ego) and the presence mask.
inline constexpr std::size_t kNodeDim = 7;
inline constexpr std::size_t kPathDim = 5;

class InsufficientHistory : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct FeatConfig {
  std::size_t n_max = 12;    // node slots, ego included
  std::size_t history = 12;  // H frames
  std::size_t hops = 3;      // L
  double d_close = 15.0;     // spatial edge threshold, m
  double range = 40.0;       // recognition range, m
  double tau = 10.0;         // edge temperature, m
  double lookahead = 10.0;   // m ahead along the path for the second error pair
  bool wedge = true;         // Boltzmann edge weights; false keeps binary weights
  bool raw_powers = false;   // walk counts of (A + I)^k instead of reachability
};

struct PathFeature {
  double e_c_now = 0, e_h_now = 0, e_c_ahead = 0, e_h_ahead = 0, speed = 0;

  std::array<double, kPathDim> values() const { return {e_c_now, e_h_now, e_c_ahead, e_h_ahead, speed}; }
};

// Cross-track and heading errors at the vehicle and `lookahead` metres
// farther along the path. `s_hint` >= 0 restricts the projection to a window
// around the known progress.
PathFeature build_path_feature(const geom::Polyline& path, const geom::Pose& pose, double speed,
                               double lookahead, double s_hint = -1.0);

struct SocialGraphFeature {
  Tensor nodes;      // [N, H, kNodeDim], egocentric to the last frame's ego pose
  Tensor adjacency;  // [L, N, N]
  Tensor mask;       // [N]
  Tensor positions;  // [N, 2] last-frame positions
  std::vector<int> ids;  // vehicle id per slot, -1 for empty; slot 0 is the ego
};

struct CenteredGraphFeature {
  SocialGraphFeature past;
  Tensor future;  // [N, H, 2] realised positions in the past feature's frame
  Tensor valid;   // [N] present in every one of the 2H frames
};

// Ego id used in slot bookkeeping.
inline constexpr int kEgoId = -1;

// `frames` holds at least H observations, oldest first; the last H are used.
SocialGraphFeature build_social_graph(std::span<const world::Observation> frames, const FeatConfig& config);

// Multi-hop weights: a_kij * exp(-d_ij / tau) for k = 1..L, where a_kij is
// k-hop reachability in A + I. Rows and columns of nodes with mask 0 are
// cleared. `binary` and `dist` are [N, N].
Tensor multi_hop_adjacency(const Tensor& binary, const Tensor& dist, std::size_t hops, double tau,
                           bool wedge = true, bool raw_powers = false, const Tensor* mask = nullptr);

// Past graph on frames [t-2H+1, t-H] and realised future on [t-H+1, t].
CenteredGraphFeature build_centered_feature(std::span<const world::Observation> frames,
                                            const FeatConfig& config);

// Debug dumps: node vectors (step, slot, frame, values...) and adjacency in
// coordinate-list form (step, k, i, j, weight). Headers are written when
// `header` is set.
void write_node_csv(std::ostream& os, int step, const SocialGraphFeature& f, bool header);
void write_adjacency_csv(std::ostream& os, int step, const SocialGraphFeature& f, bool header);

}  // namespace gin::feat
