#ifndef SHAPEGRASP_GRASP_HPP
#define SHAPEGRASP_GRASP_HPP

#include "shapegrasp/bvh.hpp"

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace shapegrasp {

inline constexpr int kFingers = 4;
inline constexpr int kJointsPerFinger = 3;
inline constexpr int kJoints = kFingers * kJointsPerFinger;

using JointVector = Eigen::Matrix<double, kJoints, 1>;
using Wrench = Eigen::Matrix<double, 6, 1>;

/// Potential contact on a link, in the link frame.
struct ContactSite {
  Vec3 position = Vec3::Zero();
  Vec3 direction = -Vec3::UnitY();  // pad outward normal
  bool central = false;
};

struct LinkModel {
  double length = 0;  // along the link's +z
  std::vector<ContactSite> sites;
};

/// Serial chain of three revolute joints about the local x axis. A positive
/// angle swings the chain from +z toward -y of the base frame.
struct FingerModel {
  Pose base = Pose::Identity();  // palm -> finger base
  std::array<LinkModel, kJointsPerFinger> links;
  std::array<double, kJointsPerFinger> lower{};
  std::array<double, kJointsPerFinger> upper{};
};

struct HandModel {
  std::array<FingerModel, kFingers> fingers;
  OrientedBox palm;           // collision proxy, palm frame
  Vec3 approach = Vec3::UnitZ();  // palm frame, unit

  /// Parametric four-finger hand: three fingers in a row opposite one thumb.
  static HandModel standard();
  /// Throws ErrorKind::InvalidArgument when an invariant is violated.
  void validate() const;

  JointVector lower_limits() const;
  JointVector upper_limits() const;
  /// Lower limits: the most open pose.
  JointVector open_configuration() const { return lower_limits(); }
  bool within_limits(const JointVector& q, double eps = 1e-12) const;
};

/// A contact site placed in the object frame.
struct SiteState {
  Vec3 position;
  Vec3 direction;
  int finger = 0;
  int link = 0;
  int site = 0;
  bool central = false;
};

/// Frames of all links (link frame -> object frame), finger-major.
std::array<Pose, kJoints> link_frames(const HandModel& hand, const Pose& h,
                                      const JointVector& q);

/// All contact sites in the object frame, finger-major then link then site.
/// Throws ErrorKind::InvalidArgument for q outside the joint limits.
std::vector<SiteState> forward_kinematics(const HandModel& hand, const Pose& h,
                                          const JointVector& q);

struct Contact {
  Vec3 position;  // on the object surface
  Vec3 normal;    // unit, pointing into the object
  int finger = 0;
  int link = 0;
  bool central = false;
};

struct ClosingParams {
  double step = 0.5 * M_PI / 180;
  double tolerance = 1e-3;  // meters
};

/// Touching: within tolerance of the surface, or inside a watertight object.
bool site_touches(const TriangleBvh& bvh, const Vec3& p, double tolerance);

/// Advances every free joint by one step per iteration. A touching site on
/// link l freezes joints 0..l of its finger; joints at their upper limit
/// stop. Output joints are never below the input.
JointVector close_fingers(const HandModel& hand, const Pose& h,
                          const JointVector& q_start, const TriangleBvh& bvh,
                          const ClosingParams& params = {});

/// Touching sites as surface contacts.
std::vector<Contact> find_contacts(const HandModel& hand, const Pose& h,
                                   const JointVector& q, const TriangleBvh& bvh,
                                   double tolerance = 1e-3);

struct WrenchSet {
  std::vector<Wrench> wrenches;
  double mu = 0;
  int cone_edges = 0;
  double torque_scale = 1;
};

/// Per contact, `cone_edges` unit forces on the friction cone (one normal
/// force when mu == 0) with torque_scale * (p - origin) x f.
WrenchSet contact_wrenches(std::span<const Contact> contacts, double mu,
                           int cone_edges, double torque_scale,
                           const Vec3& origin);

/// min over unit u of max_i w_i . u, clamped at 0. Evaluated exactly as the
/// smallest facet offset of the 6D hull; a flat hull gives 0.
double epsilon_quality(std::span<const Wrench> wrenches);
/// Support function max_i w_i . u.
double support(std::span<const Wrench> wrenches, const Wrench& u);

struct GraspModelParams {
  double mu = 0.8;
  int cone_edges = 8;
  ClosingParams closing;
};

/// Epsilon quality of the contacts at (h, q); torque scale is 1 / the
/// largest vertex distance from the mesh centroid.
double grasp_epsilon(const HandModel& hand, const Pose& h, const JointVector& q,
                     const TriangleBvh& bvh, const GraspModelParams& params = {});

struct RetreatParams {
  double step = 1e-3;
  double max_distance = 0.5;
};

bool palm_collides(const HandModel& hand, const Pose& h, const TriangleBvh& bvh);

/// Moves the hand back along -R_h * approach in whole steps until the palm
/// is clear. Throws ErrorKind::NoClearance past max_distance.
Pose retreat_hand(const HandModel& hand, const Pose& h, const TriangleBvh& bvh,
                  const RetreatParams& params = {});

struct Grasp {
  Pose h = Pose::Identity();
  JointVector q = JointVector::Zero();
  double s = 0;            // after devaluation
  double raw_epsilon = 0;  // before devaluation
  bool devalued = false;
};

struct RobustnessParams {
  double translation = 0.02;
  double joint_tolerance = 23.0 * M_PI / 180;
  double devaluation = 0.3;
  void validate() const;
};

/// The six object translations: +-translation along each axis.
std::array<Vec3, 6> robustness_translations(double magnitude);

struct RobustnessTrial {
  Vec3 translation;
  Pose h;
  JointVector q;
  double max_joint_change = 0;
  bool joints_ok = true;
  bool contacts_ok = true;
  bool passed() const { return joints_ok && contacts_ok; }
};

struct RobustnessReport {
  double s = 0;
  double s_prime = 0;
  bool devalued = false;
  std::vector<RobustnessTrial> trials;  // empty when s == 0
};

/// For each translation: the object moves by dt (the hand by -dt), the hand
/// retreats until the palm is clear and the fingers close from the open
/// pose. A trial fails when a joint moves by the tolerance or more from the
/// grasp's q, or a finger that touched before has no central contact.
/// Any failure gives s' = devaluation * s.
RobustnessReport robust_quality(const HandModel& hand, const Grasp& grasp,
                                const TriangleBvh& bvh,
                                const RobustnessParams& params = {},
                                const GraspModelParams& model = {});

struct PlannerParams {
  int restarts = 0;  // 0: max(4 n, 8)
  int hill_climb_steps = 6;
  double translation_sigma = 0.01;
  double rotation_sigma = 0.15;
  double standoff_sigma = 0.01;
  /// Upper end of the uniform initial standoff; negative means finger length.
  double initial_standoff = -1;
  /// Roll noise (radians) for restarts aligned with the bounding box.
  double aligned_jitter = 0.05;
  double advance_step = 2e-3;
  double max_standoff = 0.15;
  GraspModelParams model;
  RobustnessParams robustness;
};

struct PlanResult {
  std::vector<Grasp> grasps;  // sorted by s descending
  int restarts = 0;
  int feasible = 0;        // restarts that produced a collision-free pose
  int force_closure = 0;   // of those, with raw epsilon > 0
};

/// Random-restart hill climbing on robust quality. Needs a watertight mesh.
PlanResult plan_grasps(const HandModel& hand, const TriangleBvh& bvh,
                       std::size_t n, std::uint64_t seed,
                       const PlannerParams& params = {});

std::string grasps_to_json(std::span<const Grasp> grasps);
std::vector<Grasp> grasps_from_json(const std::string& text);
std::string hand_to_json(const HandModel& hand);
HandModel hand_from_json(const std::string& text);

}  // namespace shapegrasp

#endif  // SHAPEGRASP_GRASP_HPP
