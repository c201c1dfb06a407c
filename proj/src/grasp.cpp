#include "splatgrasp/grasp.hpp"
#include "splatgrasp/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace sg {

std::array<Vec3, 2> GraspProposal::contact_points() const {
  if (contacts) return *contacts;
  const Vec3 half = 0.5 * width * pose.rotation.col(1);
  return {pose.translation - half, pose.translation + half};
}

void GraspFilterConfig::validate() const {
  if (!(angle_sum_threshold > 0.0 && angle_sum_threshold < std::numbers::pi)) {
    throw Error(ErrorCode::InvalidArgument, "angle sum threshold must lie in (0, pi)");
  }
  if (!(normal_lookup_radius > 0.0)) throw Error(ErrorCode::InvalidArgument, "lookup radius must be positive");
}

std::array<Vec3, 2> contact_normals(const GraspProposal& proposal, const PointCloud& cloud,
                                    const GraspFilterConfig& config) {
  if (!cloud.has_normals()) throw Error(ErrorCode::InvalidArgument, "point cloud has no normals");
  const auto contacts = proposal.contact_points();
  const double r2 = config.normal_lookup_radius * config.normal_lookup_radius;
  std::array<Vec3, 2> out;
  for (int k = 0; k < 2; ++k) {
    std::vector<std::size_t> near;
    std::size_t closest = 0;
    double best = INFINITY;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      const double d2 = (cloud.points[i] - contacts[k]).squaredNorm();
      if (d2 > r2) continue;
      near.push_back(i);
      if (d2 < best) {
        best = d2;
        closest = i;
      }
    }
    if (near.empty()) {
      throw Error(ErrorCode::NoNearbySurface, "no surface point near contact " + std::to_string(k + 1));
    }
    const Vec3& ref = cloud.normals[closest];
    Vec3 sum = Vec3::Zero();
    int agree = 0;
    for (std::size_t i : near) {
      const Vec3& n = cloud.normals[i];
      const bool same = n.dot(ref) >= 0.0;
      agree += same ? 1 : -1;
      sum += same ? n : -n;
    }
    if (agree < 0) sum = -sum;
    if (!(sum.norm() > 0.0)) {
      throw Error(ErrorCode::NoNearbySurface, "normals near contact " + std::to_string(k + 1) + " cancel out");
    }
    out[k] = sum.normalized();
  }
  return out;
}

ClosureResult force_closure_feasible(const GraspProposal& proposal, const std::array<Vec3, 2>& normals,
                                     const GraspFilterConfig& config) {
  const auto c = proposal.contact_points();
  const Vec3 line = c[1] - c[0];
  if (line.norm() < 1e-6) throw Error(ErrorCode::DegenerateContacts, "contact points coincide");
  const Vec3 g = line.normalized();
  ClosureResult r;
  for (int k = 0; k < 2; ++k) {
    r.angle_sum += std::acos(std::clamp(std::abs(g.dot(normals[k].normalized())), 0.0, 1.0));
  }
  r.feasible = r.angle_sum <= config.angle_sum_threshold;
  return r;
}

GraspSelection select_grasp(const std::vector<GraspProposal>& proposals, const PointCloud& cloud,
                            const GraspFilterConfig& config) {
  config.validate();
  if (proposals.empty()) throw Error(ErrorCode::InvalidArgument, "no grasp proposals");
  GraspSelection sel;
  sel.evaluations.resize(proposals.size());
  for (std::size_t i = 0; i < proposals.size(); ++i) {
    GraspEvaluation& ev = sel.evaluations[i];
    std::array<Vec3, 2> normals;
    try {
      normals = contact_normals(proposals[i], cloud, config);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NoNearbySurface) throw;
      continue;
    }
    ev.surface_found = true;
    try {
      const ClosureResult r = force_closure_feasible(proposals[i], normals, config);
      ev.feasible = r.feasible;
      ev.angle_sum = r.angle_sum;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::DegenerateContacts) throw;
    }
    if (ev.feasible) sel.ranked.push_back(i);
  }
  if (sel.ranked.empty()) throw Error(ErrorCode::NoFeasibleGrasp, "every grasp proposal was filtered out");
  std::stable_sort(sel.ranked.begin(), sel.ranked.end(),
                   [&](std::size_t a, std::size_t b) { return proposals[a].score > proposals[b].score; });
  sel.best = sel.ranked.front();
  return sel;
}

std::vector<GraspProposal> read_proposals(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingFile, "file not found: '" + path.string() + "'");
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, "'" + path.string() + "': " + e.what());
  }
  if (!doc.is_array()) throw Error(ErrorCode::ParseError, "'" + path.string() + "': expected a JSON array");
  std::vector<GraspProposal> out;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto& e = doc[i];
    const std::string where = "'" + path.string() + "' proposal " + std::to_string(i);
    try {
      GraspProposal p;
      const auto pose = e.at("pose").get<std::vector<double>>();
      if (pose.size() != 16) throw Error(ErrorCode::ParseError, where + ": pose needs 16 values");
      std::array<double, 16> m;
      std::copy(pose.begin(), pose.end(), m.begin());
      p.pose = RigidTransform::from_row_major(m);
      if (!p.pose.is_rigid(1e-5)) throw Error(ErrorCode::InvariantViolation, where + ": pose is not rigid");
      p.width = e.at("width").get<double>();
      p.height = e.value("height", 0.0);
      p.depth = e.value("depth", 0.0);
      p.score = e.at("score").get<double>();
      if (e.contains("contacts")) {
        const auto c = e.at("contacts").get<std::vector<std::vector<double>>>();
        if (c.size() != 2 || c[0].size() != 3 || c[1].size() != 3) {
          throw Error(ErrorCode::ParseError, where + ": contacts must be 2x3");
        }
        p.contacts = std::array<Vec3, 2>{Vec3(c[0][0], c[0][1], c[0][2]), Vec3(c[1][0], c[1][1], c[1][2])};
      }
      if (!(p.width > 0.0)) throw Error(ErrorCode::InvariantViolation, where + ": width must be positive");
      if (p.contacts) {
        const double gap = ((*p.contacts)[1] - (*p.contacts)[0]).norm();
        if (!(gap > 0.0)) throw Error(ErrorCode::InvariantViolation, where + ": contacts coincide");
        if (gap > 1.5 * p.width) throw Error(ErrorCode::InvariantViolation, where + ": contacts wider than 1.5 x width");
      }
      out.push_back(p);
    } catch (const nlohmann::json::exception& ex) {
      throw Error(ErrorCode::ParseError, where + ": " + ex.what());
    }
  }
  return out;
}

void write_proposals(const std::filesystem::path& path, const std::vector<GraspProposal>& proposals,
                     const std::vector<GraspEvaluation>* evaluations) {
  nlohmann::json doc = nlohmann::json::array();
  for (std::size_t i = 0; i < proposals.size(); ++i) {
    const GraspProposal& p = proposals[i];
    nlohmann::json e;
    const auto m = p.pose.row_major();
    e["pose"] = std::vector<double>(m.begin(), m.end());
    e["width"] = p.width;
    e["height"] = p.height;
    e["depth"] = p.depth;
    e["score"] = p.score;
    if (p.contacts) {
      const auto& c = *p.contacts;
      e["contacts"] = {{c[0].x(), c[0].y(), c[0].z()}, {c[1].x(), c[1].y(), c[1].z()}};
    }
    if (evaluations) {
      e["feasible"] = (*evaluations)[i].feasible;
      e["angle_sum_rad"] = (*evaluations)[i].angle_sum;
    }
    doc.push_back(e);
  }
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot open '" + path.string() + "' for writing");
  out << doc.dump(2) << '\n';
}

}  // namespace sg
