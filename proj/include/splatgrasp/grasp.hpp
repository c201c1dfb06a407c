#pragma once

#include "splatgrasp/common.hpp"
#include "splatgrasp/geometry.hpp"

#include <array>
#include <filesystem>
#include <numbers>
#include <optional>
#include <vector>

namespace sg {

/// Parallel-jaw grasp in the world frame. The gripper frame's y axis is the
/// closing direction.
struct GraspProposal {
  RigidTransform pose;
  double width = 0.0;
  double height = 0.0;
  double depth = 0.0;
  double score = 0.0;
  std::optional<std::array<Vec3, 2>> contacts;

  /// Explicit contacts, or the finger positions pose.t -+ width/2 * pose.R.col(1).
  std::array<Vec3, 2> contact_points() const;
};

struct GraspFilterConfig {
  double angle_sum_threshold = std::numbers::pi / 3.0;  // 60 degrees
  double normal_lookup_radius = 0.005;

  void validate() const;
};

/// Per contact: mean of the cloud normals within the lookup radius, after
/// orienting them consistently with the majority; throws NoNearbySurface.
std::array<Vec3, 2> contact_normals(const GraspProposal& proposal, const PointCloud& cloud,
                                    const GraspFilterConfig& config);

struct ClosureResult {
  bool feasible = false;
  double angle_sum = 0.0;  // radians
};

/// Angles between the grasping line and each contact normal, direction-agnostic.
ClosureResult force_closure_feasible(const GraspProposal& proposal, const std::array<Vec3, 2>& normals,
                                     const GraspFilterConfig& config);

struct GraspEvaluation {
  bool surface_found = false;
  bool feasible = false;
  double angle_sum = 0.0;
};

struct GraspSelection {
  std::size_t best = 0;                  // index into the input list
  std::vector<std::size_t> ranked;       // feasible proposals, score descending, stable
  std::vector<GraspEvaluation> evaluations;  // one per input proposal
};

/// Drops proposals without nearby surface or failing the closure test and
/// ranks the rest by score. Throws NoFeasibleGrasp when nothing is left.
GraspSelection select_grasp(const std::vector<GraspProposal>& proposals, const PointCloud& cloud,
                            const GraspFilterConfig& config);

std::vector<GraspProposal> read_proposals(const std::filesystem::path& path);
/// Writes the proposals with "feasible" and "angle_sum_rad" added when
/// evaluations are given.
void write_proposals(const std::filesystem::path& path, const std::vector<GraspProposal>& proposals,
                     const std::vector<GraspEvaluation>* evaluations = nullptr);

}  // namespace sg
