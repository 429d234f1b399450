#include "shapegrasp/grasp.hpp"

#include "shapegrasp/occupancy.hpp"
#include "shapegrasp/parallel.hpp"

#include <json.hpp>

#include <Eigen/QR>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace shapegrasp {

namespace {

double deg(double d) { return d * M_PI / 180.0; }

Pose translation_pose(const Vec3& t) {
  Pose p = Pose::Identity();
  p.translation() = t;
  return p;
}

Pose rot_x(double angle) {
  Pose p = Pose::Identity();
  p.linear() = Eigen::AngleAxisd(angle, Vec3::UnitX()).toRotationMatrix();
  return p;
}

}  // namespace

HandModel HandModel::standard() {
  HandModel hand;
  const double lengths[3] = {0.05, 0.03, 0.025};
  const double pad = 0.008;    // pad surface offset from the link axis
  const double half_width = 0.007;
  for (int f = 0; f < kFingers; ++f) {
    FingerModel& finger = hand.fingers[f];
    if (f < 3) {
      finger.base = translation_pose(Vec3(0.055 * (f - 1), 0.035, 0));
    } else {
      finger.base = translation_pose(Vec3(0, -0.035, 0));
      finger.base.linear() =
          Eigen::AngleAxisd(M_PI, Vec3::UnitZ()).toRotationMatrix();
    }
    for (int j = 0; j < kJointsPerFinger; ++j) {
      LinkModel& link = finger.links[j];
      link.length = lengths[j];
      const double len = lengths[j];
      // 3 x 3 grid on the pad; the middle column is central.
      link.sites.clear();
      for (double t : {0.2, 0.5, 0.8})
        for (double x : {0.0, half_width, -half_width})
          link.sites.push_back({Vec3(x, -pad, t * len), -Vec3::UnitY(), x == 0.0});
      finger.lower[j] = j == 0 ? deg(-20) : 0.0;
      finger.upper[j] = deg(90);
    }
  }
  hand.palm.pose = translation_pose(Vec3(0, 0, -0.015));
  hand.palm.half = Vec3(0.065, 0.045, 0.015);
  hand.approach = Vec3::UnitZ();
  return hand;
}

void HandModel::validate() const {
  if (std::abs(approach.norm() - 1) > 1e-9)
    throw Error(ErrorKind::InvalidArgument, "approach must be a unit vector");
  if ((palm.half.array() <= 0).any())
    throw Error(ErrorKind::InvalidArgument, "palm box must have volume");
  for (const auto& f : fingers) {
    bool central = false;
    for (int j = 0; j < kJointsPerFinger; ++j) {
      if (!(f.lower[j] < f.upper[j]))
        throw Error(ErrorKind::InvalidArgument,
                    "joint lower limit must be below the upper limit");
      if (!(f.links[j].length > 0))
        throw Error(ErrorKind::InvalidArgument, "link length must be positive");
      for (const auto& s : f.links[j].sites) central = central || s.central;
    }
    if (!central)
      throw Error(ErrorKind::InvalidArgument,
                  "every finger needs a central contact site");
  }
}

JointVector HandModel::lower_limits() const {
  JointVector q;
  for (int f = 0; f < kFingers; ++f)
    for (int j = 0; j < kJointsPerFinger; ++j)
      q[f * kJointsPerFinger + j] = fingers[f].lower[j];
  return q;
}

JointVector HandModel::upper_limits() const {
  JointVector q;
  for (int f = 0; f < kFingers; ++f)
    for (int j = 0; j < kJointsPerFinger; ++j)
      q[f * kJointsPerFinger + j] = fingers[f].upper[j];
  return q;
}

bool HandModel::within_limits(const JointVector& q, double eps) const {
  if (!q.allFinite()) return false;
  return ((q - lower_limits()).array() >= -eps).all() &&
         ((upper_limits() - q).array() >= -eps).all();
}

namespace {

std::array<Pose, kJointsPerFinger> finger_frames(const FingerModel& finger,
                                                 const Pose& h, const double* q) {
  std::array<Pose, kJointsPerFinger> frames;
  Pose t = h * finger.base;
  for (int j = 0; j < kJointsPerFinger; ++j) {
    t = t * rot_x(q[j]);
    frames[j] = t;
    t = t * translation_pose(Vec3(0, 0, finger.links[j].length));
  }
  return frames;
}

}  // namespace

std::array<Pose, kJoints> link_frames(const HandModel& hand, const Pose& h,
                                      const JointVector& q) {
  std::array<Pose, kJoints> out;
  for (int f = 0; f < kFingers; ++f) {
    const auto frames =
        finger_frames(hand.fingers[f], h, q.data() + f * kJointsPerFinger);
    for (int j = 0; j < kJointsPerFinger; ++j)
      out[f * kJointsPerFinger + j] = frames[j];
  }
  return out;
}

std::vector<SiteState> forward_kinematics(const HandModel& hand, const Pose& h,
                                          const JointVector& q) {
  if (!hand.within_limits(q, 1e-9))
    throw Error(ErrorKind::InvalidArgument, "joint angles outside limits");
  const auto frames = link_frames(hand, h, q);
  std::vector<SiteState> sites;
  for (int f = 0; f < kFingers; ++f)
    for (int j = 0; j < kJointsPerFinger; ++j) {
      const Pose& frame = frames[f * kJointsPerFinger + j];
      const auto& link = hand.fingers[f].links[j];
      for (std::size_t s = 0; s < link.sites.size(); ++s)
        sites.push_back({frame * link.sites[s].position,
                         frame.linear() * link.sites[s].direction, f, j,
                         static_cast<int>(s), link.sites[s].central});
    }
  return sites;
}

bool site_touches(const TriangleBvh& bvh, const Vec3& p, double tolerance) {
  if (bvh.closest_point(p, tolerance)) return true;
  return bvh.watertight() && point_occupancy(bvh, p);
}

JointVector close_fingers(const HandModel& hand, const Pose& h,
                          const JointVector& q_start, const TriangleBvh& bvh,
                          const ClosingParams& params) {
  if (!hand.within_limits(q_start, 1e-9))
    throw Error(ErrorKind::InvalidArgument, "start configuration outside limits");
  if (!(params.step > 0))
    throw Error(ErrorKind::InvalidArgument, "closing step must be positive");
  JointVector q = q_start;
  for (int f = 0; f < kFingers; ++f) {
    const FingerModel& finger = hand.fingers[f];
    double* qf = q.data() + f * kJointsPerFinger;
    std::array<bool, kJointsPerFinger> active;
    for (int j = 0; j < kJointsPerFinger; ++j) active[j] = qf[j] < finger.upper[j];
    while (std::any_of(active.begin(), active.end(), [](bool a) { return a; })) {
      const auto frames = finger_frames(finger, h, qf);
      for (int l = kJointsPerFinger - 1; l >= 0; --l) {
        bool touch = false;
        for (const auto& site : finger.links[l].sites)
          if (site_touches(bvh, frames[l] * site.position, params.tolerance)) {
            touch = true;
            break;
          }
        if (touch) {
          for (int j = 0; j <= l; ++j) active[j] = false;
          break;
        }
      }
      for (int j = 0; j < kJointsPerFinger; ++j) {
        if (!active[j]) continue;
        qf[j] = std::min(qf[j] + params.step, finger.upper[j]);
        if (qf[j] >= finger.upper[j]) active[j] = false;
      }
    }
  }
  return q;
}

std::vector<Contact> find_contacts(const HandModel& hand, const Pose& h,
                                   const JointVector& q, const TriangleBvh& bvh,
                                   double tolerance) {
  std::vector<Contact> contacts;
  for (const auto& site : forward_kinematics(hand, h, q)) {
    if (!site_touches(bvh, site.position, tolerance)) continue;
    const auto surface = bvh.closest_point(site.position);
    if (!surface) continue;
    contacts.push_back({surface->point, -bvh.mesh().normal(surface->tri),
                        site.finger, site.link, site.central});
  }
  return contacts;
}

WrenchSet contact_wrenches(std::span<const Contact> contacts, double mu,
                           int cone_edges, double torque_scale,
                           const Vec3& origin) {
  if (!(mu >= 0)) throw Error(ErrorKind::InvalidArgument, "mu must be >= 0");
  if (cone_edges < 3)
    throw Error(ErrorKind::InvalidArgument, "need at least 3 cone edges");
  WrenchSet set;
  set.mu = mu;
  set.cone_edges = cone_edges;
  set.torque_scale = torque_scale;
  for (const auto& c : contacts) {
    const Vec3 n = c.normal.normalized();
    int axis;
    n.cwiseAbs().minCoeff(&axis);
    const Vec3 t1 = n.cross(Vec3::Unit(axis)).normalized();
    const Vec3 t2 = n.cross(t1);
    const int count = mu == 0 ? 1 : cone_edges;
    for (int k = 0; k < count; ++k) {
      const double theta = 2 * M_PI * k / cone_edges;
      const Vec3 f =
          (n + mu * (std::cos(theta) * t1 + std::sin(theta) * t2)).normalized();
      Wrench w;
      w.head<3>() = f;
      w.tail<3>() = torque_scale * (c.position - origin).cross(f);
      set.wrenches.push_back(w);
    }
  }
  return set;
}

double support(std::span<const Wrench> wrenches, const Wrench& u) {
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& w : wrenches) best = std::max(best, w.dot(u));
  return best;
}

namespace {

constexpr int kDim = 6;
using Ridge = std::array<int, kDim - 1>;

struct HullFacet {
  std::array<int, kDim> v{};
  // neighbor[k] shares every vertex of this facet except v[k].
  std::array<int, kDim> neighbor{};
  Wrench normal = Wrench::Zero();
  double offset = 0;
  std::vector<int> outside;
  bool alive = true;
};

// Hyperplane through six points with the normal pointing away from `inner`.
void set_plane(HullFacet& f, const std::vector<Wrench>& pts, const Wrench& inner) {
  Eigen::Matrix<double, kDim - 1, kDim> d;
  for (int k = 1; k < kDim; ++k) d.row(k - 1) = (pts[f.v[k]] - pts[f.v[0]]).transpose();
  Eigen::JacobiSVD<Eigen::Matrix<double, kDim - 1, kDim>> svd(d, Eigen::ComputeFullV);
  f.normal = svd.matrixV().col(kDim - 1);
  f.offset = f.normal.dot(pts[f.v[0]]);
  if (f.normal.dot(inner) > f.offset) {
    f.normal = -f.normal;
    f.offset = -f.offset;
  }
}

Ridge ridge_key(const std::array<int, kDim>& v, int skip) {
  Ridge r{};
  for (int k = 0, j = 0; k < kDim; ++k)
    if (k != skip) r[static_cast<std::size_t>(j++)] = v[static_cast<std::size_t>(k)];
  std::sort(r.begin(), r.end());
  return r;
}

// Affinely independent starting simplex chosen greedily; empty when the
// points span fewer than six dimensions.
std::vector<int> initial_simplex(const std::vector<Wrench>& pts, double tol) {
  std::vector<int> chosen{0};
  for (std::size_t i = 1; i < pts.size(); ++i)
    if (pts[i].norm() > pts[static_cast<std::size_t>(chosen[0])].norm()) chosen[0] = static_cast<int>(i);
  std::vector<Wrench> basis;
  const Wrench& base = pts[static_cast<std::size_t>(chosen[0])];
  while (static_cast<int>(chosen.size()) < kDim + 1) {
    double best = tol;
    int pick = -1;
    Wrench pick_dir = Wrench::Zero();
    for (std::size_t i = 0; i < pts.size(); ++i) {
      Wrench r = pts[i] - base;
      for (const auto& b : basis) r -= r.dot(b) * b;
      if (r.norm() > best) {
        best = r.norm();
        pick = static_cast<int>(i);
        pick_dir = r / best;
      }
    }
    if (pick < 0) return {};
    chosen.push_back(pick);
    basis.push_back(pick_dir);
  }
  return chosen;
}

}  // namespace

double epsilon_quality(std::span<const Wrench> wrenches) {
  if (wrenches.empty())
    throw Error(ErrorKind::InvalidArgument, "need at least one wrench");
  double scale = 0;
  for (const auto& w : wrenches) {
    if (!w.allFinite()) throw Error(ErrorKind::NonFinite, "non-finite wrench");
    scale = std::max(scale, w.norm());
  }
  if (scale == 0) return 0.0;

  // Canonical order makes the result independent of the input order.
  std::vector<Wrench> pts(wrenches.begin(), wrenches.end());
  const auto less = [](const Wrench& a, const Wrench& b) {
    return std::lexicographical_compare(a.data(), a.data() + kDim, b.data(), b.data() + kDim);
  };
  std::sort(pts.begin(), pts.end(), less);
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());

  const double tol = 1e-11 * scale;
  const auto simplex = initial_simplex(pts, tol);
  if (simplex.empty()) return 0.0;  // flat hull: the origin cannot be interior

  Wrench inner = Wrench::Zero();
  for (int i : simplex) inner += pts[static_cast<std::size_t>(i)];
  inner /= kDim + 1;

  std::vector<HullFacet> facets;
  for (int j = 0; j <= kDim; ++j) {
    HullFacet f;
    for (int k = 0, m = 0; k <= kDim; ++k) {
      if (k == j) continue;
      f.v[static_cast<std::size_t>(m)] = simplex[static_cast<std::size_t>(k)];
      f.neighbor[static_cast<std::size_t>(m)] = k;
      ++m;
    }
    set_plane(f, pts, inner);
    facets.push_back(std::move(f));
  }
  const auto dist = [&](const HullFacet& f, int i) {
    return f.normal.dot(pts[static_cast<std::size_t>(i)]) - f.offset;
  };
  std::vector<char> in_simplex(pts.size(), 0);
  for (int i : simplex) in_simplex[static_cast<std::size_t>(i)] = 1;
  for (int i = 0; i < static_cast<int>(pts.size()); ++i) {
    if (in_simplex[static_cast<std::size_t>(i)]) continue;
    for (auto& f : facets)
      if (dist(f, i) > tol) {
        f.outside.push_back(i);
        break;
      }
  }

  std::vector<int> stamp;
  std::vector<char> visible;
  int round = 0;
  for (std::size_t fi = 0; fi < facets.size(); ++fi) {
    if (!facets[fi].alive || facets[fi].outside.empty()) continue;
    ++round;
    stamp.resize(facets.size(), 0);
    visible.resize(facets.size(), 0);

    int apex = facets[fi].outside.front();
    for (int i : facets[fi].outside)
      if (dist(facets[fi], i) > dist(facets[fi], apex)) apex = i;

    // Visible region and its horizon, found by flooding across ridges.
    std::vector<int> region{static_cast<int>(fi)};
    std::vector<std::pair<int, int>> horizon;
    stamp[fi] = round;
    visible[fi] = 1;
    for (std::size_t r = 0; r < region.size(); ++r) {
      const int f = region[r];
      for (int k = 0; k < kDim; ++k) {
        const int nb = facets[static_cast<std::size_t>(f)].neighbor[static_cast<std::size_t>(k)];
        const auto n = static_cast<std::size_t>(nb);
        if (stamp[n] != round) {
          stamp[n] = round;
          visible[n] = dist(facets[n], apex) > tol;
          if (visible[n]) region.push_back(nb);
        }
        if (!visible[n]) horizon.emplace_back(f, k);
      }
    }

    std::map<Ridge, std::pair<int, int>> open;
    std::vector<int> created;
    for (const auto& [f, k] : horizon) {
      const auto& old = facets[static_cast<std::size_t>(f)];
      HullFacet nf;
      nf.v = old.v;
      nf.v[static_cast<std::size_t>(k)] = apex;
      nf.neighbor.fill(-1);
      const int nb = old.neighbor[static_cast<std::size_t>(k)];
      nf.neighbor[static_cast<std::size_t>(k)] = nb;
      set_plane(nf, pts, inner);
      const int id = static_cast<int>(facets.size());
      auto& back = facets[static_cast<std::size_t>(nb)].neighbor;
      *std::find(back.begin(), back.end(), f) = id;
      for (int j = 0; j < kDim; ++j) {
        if (j == k) continue;
        const Ridge key = ridge_key(nf.v, j);
        const auto it = open.find(key);
        if (it == open.end()) {
          open.emplace(key, std::make_pair(id, j));
        } else {
          nf.neighbor[static_cast<std::size_t>(j)] = it->second.first;
          facets[static_cast<std::size_t>(it->second.first)]
              .neighbor[static_cast<std::size_t>(it->second.second)] = id;
          open.erase(it);
        }
      }
      facets.push_back(std::move(nf));
      created.push_back(id);
    }

    for (int f : region) {
      auto& old = facets[static_cast<std::size_t>(f)];
      old.alive = false;
      for (int i : old.outside) {
        if (i == apex) continue;
        for (int c : created)
          if (dist(facets[static_cast<std::size_t>(c)], i) > tol) {
            facets[static_cast<std::size_t>(c)].outside.push_back(i);
            break;
          }
      }
      old.outside.clear();
      old.outside.shrink_to_fit();
    }
  }

  double best = std::numeric_limits<double>::infinity();
  for (const auto& f : facets)
    if (f.alive) best = std::min(best, f.offset);
  return best > tol ? best : 0.0;
}

double grasp_epsilon(const HandModel& hand, const Pose& h, const JointVector& q,
                     const TriangleBvh& bvh, const GraspModelParams& params) {
  const auto contacts =
      find_contacts(hand, h, q, bvh, params.closing.tolerance);
  if (contacts.empty()) return 0.0;
  const auto& mesh = bvh.mesh();
  Vec3 centroid = Vec3::Zero();
  for (std::size_t t = 0; t < mesh.triangle_count(); ++t)
    centroid += mesh.areas()[t] *
                (mesh.corner(t, 0) + mesh.corner(t, 1) + mesh.corner(t, 2)) / 3;
  centroid /= mesh.total_area();
  double radius = 0;
  for (const auto& v : mesh.vertices()) radius = std::max(radius, (v - centroid).norm());
  const auto set = contact_wrenches(contacts, params.mu, params.cone_edges,
                                    1.0 / radius, centroid);
  return epsilon_quality(set.wrenches);
}

bool palm_collides(const HandModel& hand, const Pose& h, const TriangleBvh& bvh) {
  OrientedBox box{h * hand.palm.pose, hand.palm.half};
  if (bvh.overlaps(box)) return true;
  return bvh.watertight() && point_occupancy(bvh, box.pose.translation());
}

Pose retreat_hand(const HandModel& hand, const Pose& h, const TriangleBvh& bvh,
                  const RetreatParams& params) {
  if (!palm_collides(hand, h, bvh)) return h;
  const Vec3 back = -(h.linear() * hand.approach);
  const int max_steps = static_cast<int>(std::floor(params.max_distance / params.step + 1e-9));
  for (int k = 1; k <= max_steps; ++k) {
    Pose moved = h;
    moved.translation() = h.translation() + (k * params.step) * back;
    if (!palm_collides(hand, moved, bvh)) return moved;
  }
  throw Error(ErrorKind::NoClearance,
              "hand base still collides after retreating the maximum distance");
}

void RobustnessParams::validate() const {
  if (!(translation > 0 && joint_tolerance > 0))
    throw Error(ErrorKind::InvalidArgument,
                "robustness translation and tolerance must be positive");
  if (!(devaluation > 0 && devaluation <= 1))
    throw Error(ErrorKind::InvalidArgument, "devaluation must lie in (0, 1]");
}

std::array<Vec3, 6> robustness_translations(double m) {
  return {Vec3(m, 0, 0), Vec3(-m, 0, 0), Vec3(0, m, 0),
          Vec3(0, -m, 0), Vec3(0, 0, m), Vec3(0, 0, -m)};
}

RobustnessReport robust_quality(const HandModel& hand, const Grasp& grasp,
                                const TriangleBvh& bvh,
                                const RobustnessParams& params,
                                const GraspModelParams& model) {
  params.validate();
  RobustnessReport report;
  report.s = grasp.raw_epsilon;
  report.s_prime = grasp.raw_epsilon;
  if (!(grasp.raw_epsilon > 0)) return report;

  std::array<bool, kFingers> touched{};
  for (const auto& c :
       find_contacts(hand, grasp.h, grasp.q, bvh, model.closing.tolerance))
    touched[c.finger] = true;

  const JointVector open = hand.open_configuration();
  for (const Vec3& dt : robustness_translations(params.translation)) {
    RobustnessTrial trial;
    trial.translation = dt;
    trial.h = retreat_hand(hand, translation_pose(-dt) * grasp.h, bvh);
    trial.q = close_fingers(hand, trial.h, open, bvh, model.closing);
    trial.max_joint_change = (trial.q - grasp.q).cwiseAbs().maxCoeff();
    trial.joints_ok = trial.max_joint_change < params.joint_tolerance;
    std::array<bool, kFingers> central{};
    for (const auto& c :
         find_contacts(hand, trial.h, trial.q, bvh, model.closing.tolerance))
      if (c.central) central[c.finger] = true;
    for (int f = 0; f < kFingers; ++f)
      if (touched[f] && !central[f]) trial.contacts_ok = false;
    if (!trial.passed()) report.devalued = true;
    report.trials.push_back(trial);
  }
  if (report.devalued) report.s_prime = params.devaluation * report.s;
  return report;
}

namespace {

struct PlannerState {
  Vec3 position;
  Mat3 rotation;
  double standoff = 0;
};

struct Evaluation {
  bool feasible = false;
  Grasp grasp;
};

bool score_better(const Grasp& a, const Grasp& b) {
  return a.s > b.s || (a.s == b.s && a.raw_epsilon > b.raw_epsilon);
}

bool any_site_touches(const HandModel& hand, const Pose& h, const JointVector& q,
                      const TriangleBvh& bvh, double tolerance) {
  for (const auto& site : forward_kinematics(hand, h, q))
    if (site_touches(bvh, site.position, tolerance)) return true;
  return false;
}

Evaluation evaluate(const HandModel& hand, const TriangleBvh& bvh,
                    const PlannerState& state, double travel_limit,
                    const PlannerParams& params) {
  Evaluation ev;
  Pose h = Pose::Identity();
  h.linear() = state.rotation;
  h.translation() = state.position;
  const Vec3 forward = state.rotation * hand.approach;
  double travel = 0;
  while (!palm_collides(hand, h, bvh)) {
    if (travel > travel_limit) return ev;  // passes the object
    h.translation() += params.advance_step * forward;
    travel += params.advance_step;
  }
  try {
    h = retreat_hand(hand, h, bvh);
  } catch (const Error&) {
    return ev;
  }
  const JointVector open = hand.open_configuration();
  const double tol = params.model.closing.tolerance;
  double backoff = 0;
  while (any_site_touches(hand, h, open, bvh, tol)) {
    if (backoff > params.max_standoff) return ev;
    h.translation() -= params.advance_step * forward;
    backoff += params.advance_step;
  }
  h.translation() -= state.standoff * forward;
  ev.feasible = true;
  ev.grasp.h = h;
  ev.grasp.q = close_fingers(hand, h, open, bvh, params.model.closing);
  ev.grasp.raw_epsilon = grasp_epsilon(hand, h, ev.grasp.q, bvh, params.model);
  const auto report =
      robust_quality(hand, ev.grasp, bvh, params.robustness, params.model);
  ev.grasp.s = report.s_prime;
  ev.grasp.devalued = report.devalued;
  return ev;
}

Mat3 random_rotation_step(Rng& rng, double sigma) {
  std::normal_distribution<double> gauss(0.0, sigma);
  const double x = gauss(rng), y = gauss(rng), z = gauss(rng);
  const Vec3 rv(x, y, z);
  const double angle = rv.norm();
  if (angle < 1e-15) return Mat3::Identity();
  return Eigen::AngleAxisd(angle, rv / angle).toRotationMatrix();
}

}  // namespace

PlanResult plan_grasps(const HandModel& hand, const TriangleBvh& bvh,
                       std::size_t n, std::uint64_t seed,
                       const PlannerParams& params) {
  hand.validate();
  PlanResult result;
  if (n == 0) return result;
  if (!bvh.watertight())
    throw Error(ErrorKind::Precondition, "grasp planning needs a watertight mesh");
  const auto box = bvh.mesh().bounds();
  const Vec3 center = box.center();
  double radius = 0;
  for (const auto& v : bvh.mesh().vertices())
    radius = std::max(radius, (v - center).norm());
  double reach = 0;
  for (const auto& link : hand.fingers[0].links) reach += link.length;
  const double start_distance = radius + reach + hand.palm.half.norm();
  const double travel_limit = start_distance + radius;
  const double initial_standoff =
      params.initial_standoff < 0 ? reach : params.initial_standoff;
  const Eigen::Quaterniond align =
      Eigen::Quaterniond::FromTwoVectors(hand.approach, Vec3::UnitZ());

  const int restarts = params.restarts > 0
                           ? params.restarts
                           : static_cast<int>(std::max<std::size_t>(4 * n, 8));
  result.restarts = restarts;
  std::vector<Evaluation> best(static_cast<std::size_t>(restarts));
  parallel_for(best.size(), [&](std::size_t r) {
    Rng rng(derive_seed(seed, r));
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    // Odd restarts approach along a bounding-box axis with the finger row
    // aligned to another box axis; even restarts sample freely.
    Vec3 dir, e1;
    double roll;
    if (r % 2 == 1) {
      std::uniform_int_distribution<int> pick(0, 5);
      const int face = pick(rng);
      const int axis = face / 2;
      dir = (face % 2 ? -1.0 : 1.0) * Vec3::Unit(axis);
      e1 = Vec3::Unit((axis + 1) % 3);
      std::uniform_int_distribution<int> quarter(0, 3);
      roll = 0.5 * M_PI * quarter(rng) + params.aligned_jitter * gauss(rng);
    } else {
      do {
        const double x = gauss(rng), y = gauss(rng), z = gauss(rng);
        dir = Vec3(x, y, z);
      } while (dir.norm() < 1e-9);
      dir.normalize();
      int axis;
      dir.cwiseAbs().minCoeff(&axis);
      e1 = dir.cross(Vec3::Unit(axis)).normalized();
      roll = 2 * M_PI * uni(rng);
    }
    const Vec3 zw = -dir;
    const Vec3 e2 = zw.cross(e1);
    const Vec3 xw = std::cos(roll) * e1 + std::sin(roll) * e2;
    Mat3 frame;
    frame.col(0) = xw;
    frame.col(1) = zw.cross(xw);
    frame.col(2) = zw;
    PlannerState state{center + dir * start_distance, frame * align.toRotationMatrix(),
                       initial_standoff * uni(rng)};
    Evaluation current = evaluate(hand, bvh, state, travel_limit, params);
    for (int step = 0; step < params.hill_climb_steps; ++step) {
      PlannerState next = state;
      const double dx = gauss(rng), dy = gauss(rng), dz = gauss(rng);
      next.position += params.translation_sigma * Vec3(dx, dy, dz);
      next.rotation = random_rotation_step(rng, params.rotation_sigma) * state.rotation;
      next.standoff = std::max(0.0, state.standoff + params.standoff_sigma * gauss(rng));
      // Keep the start outside the object's bounding sphere.
      const Vec3 rel = next.position - center;
      if (rel.norm() < start_distance)
        next.position = center + rel.normalized() * start_distance;
      Evaluation cand = evaluate(hand, bvh, next, travel_limit, params);
      if (cand.feasible &&
          (!current.feasible || score_better(cand.grasp, current.grasp))) {
        current = cand;
        state = next;
      }
    }
    best[r] = current;
  });

  std::vector<std::size_t> order;
  for (std::size_t r = 0; r < best.size(); ++r) {
    if (!best[r].feasible) continue;
    ++result.feasible;
    if (best[r].grasp.raw_epsilon > 0) ++result.force_closure;
    order.push_back(r);
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return best[a].grasp.s > best[b].grasp.s;
  });
  for (std::size_t i = 0; i < std::min(n, order.size()); ++i)
    result.grasps.push_back(best[order[i]].grasp);
  return result;
}

// JSON

namespace {

using nlohmann::json;

json pose_json(const Pose& p) {
  json rows = json::array();
  const Eigen::Matrix4d m = p.matrix();
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) rows.push_back(m(r, c));
  return rows;
}

Pose pose_from(const json& j) {
  if (!j.is_array() || j.size() != 16)
    throw Error(ErrorKind::InvalidArgument, "pose must be 16 numbers");
  Eigen::Matrix4d m;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) m(r, c) = j[r * 4 + c].get<double>();
  Pose p = Pose::Identity();
  p.linear() = m.topLeftCorner<3, 3>();
  p.translation() = m.topRightCorner<3, 1>();
  const Mat3 r = p.linear();
  if ((r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-6)
    throw Error(ErrorKind::InvalidArgument, "pose rotation is not orthonormal");
  return p;
}

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3 vec_from(const json& j) {
  if (!j.is_array() || j.size() != 3)
    throw Error(ErrorKind::InvalidArgument, "vector must be 3 numbers");
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

json parse(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidArgument, std::string("bad JSON: ") + e.what());
  }
}

}  // namespace

std::string grasps_to_json(std::span<const Grasp> grasps) {
  json arr = json::array();
  for (const auto& g : grasps) {
    json q = json::array();
    for (int i = 0; i < kJoints; ++i) q.push_back(g.q[i]);
    arr.push_back({{"pose", pose_json(g.h)},
                   {"q", q},
                   {"s", g.s},
                   {"raw_epsilon", g.raw_epsilon},
                   {"devalued", g.devalued}});
  }
  return arr.dump(2);
}

std::vector<Grasp> grasps_from_json(const std::string& text) {
  const json arr = parse(text);
  if (!arr.is_array())
    throw Error(ErrorKind::InvalidArgument, "grasp file must be a JSON list");
  std::vector<Grasp> out;
  try {
    for (const auto& j : arr) {
      Grasp g;
      g.h = pose_from(j.at("pose"));
      const auto& q = j.at("q");
      if (!q.is_array() || q.size() != kJoints)
        throw Error(ErrorKind::InvalidArgument, "q must have 12 entries");
      for (int i = 0; i < kJoints; ++i) g.q[i] = q[i].get<double>();
      g.s = j.at("s").get<double>();
      g.raw_epsilon = j.value("raw_epsilon", g.s);
      g.devalued = j.value("devalued", false);
      out.push_back(g);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidArgument, std::string("bad grasp: ") + e.what());
  }
  return out;
}

std::string hand_to_json(const HandModel& hand) {
  json fingers = json::array();
  for (const auto& f : hand.fingers) {
    json links = json::array();
    for (const auto& l : f.links) {
      json sites = json::array();
      for (const auto& s : l.sites)
        sites.push_back({{"position", vec_json(s.position)},
                         {"direction", vec_json(s.direction)},
                         {"central", s.central}});
      links.push_back({{"length", l.length}, {"sites", sites}});
    }
    fingers.push_back({{"base", pose_json(f.base)},
                       {"lower", f.lower},
                       {"upper", f.upper},
                       {"links", links}});
  }
  json doc = {{"approach", vec_json(hand.approach)},
              {"palm", {{"pose", pose_json(hand.palm.pose)},
                        {"half", vec_json(hand.palm.half)}}},
              {"fingers", fingers}};
  return doc.dump(2);
}

HandModel hand_from_json(const std::string& text) {
  const json doc = parse(text);
  HandModel hand;
  try {
    hand.approach = vec_from(doc.at("approach"));
    hand.palm.pose = pose_from(doc.at("palm").at("pose"));
    hand.palm.half = vec_from(doc.at("palm").at("half"));
    const auto& fingers = doc.at("fingers");
    if (!fingers.is_array() || fingers.size() != kFingers)
      throw Error(ErrorKind::InvalidArgument, "hand needs exactly 4 fingers");
    for (int f = 0; f < kFingers; ++f) {
      const auto& jf = fingers[f];
      auto& finger = hand.fingers[f];
      finger.base = pose_from(jf.at("base"));
      finger.lower = jf.at("lower").get<std::array<double, 3>>();
      finger.upper = jf.at("upper").get<std::array<double, 3>>();
      const auto& links = jf.at("links");
      if (!links.is_array() || links.size() != kJointsPerFinger)
        throw Error(ErrorKind::InvalidArgument, "finger needs exactly 3 links");
      for (int l = 0; l < kJointsPerFinger; ++l) {
        finger.links[l].length = links[l].at("length").get<double>();
        finger.links[l].sites.clear();
        for (const auto& s : links[l].at("sites"))
          finger.links[l].sites.push_back({vec_from(s.at("position")),
                                           vec_from(s.at("direction")),
                                           s.at("central").get<bool>()});
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidArgument, std::string("bad hand: ") + e.what());
  }
  hand.validate();
  return hand;
}

}  // namespace shapegrasp
