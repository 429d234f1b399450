#ifndef SHAPEGRASP_COMMON_HPP
#define SHAPEGRASP_COMMON_HPP

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace shapegrasp {

using Vec3 = Eigen::Vector3d;
using Vec3f = Eigen::Vector3f;
using Vec3i = Eigen::Vector3i;
using Mat3 = Eigen::Matrix3d;
using Pose = Eigen::Isometry3d;
using PointList = std::vector<Vec3>;

enum class ErrorKind {
  MalformedFile,
  EmptyGeometry,
  DegenerateGeometry,
  Precondition,
  Shortage,
  InvalidArgument,
  NonFinite,
  Divergence,
  NoModelFound,
  EmptyObject,
  NoClearance,
  UndefinedMetric,
  Io,
};

const char* to_string(ErrorKind kind);

/// Library-wide exception. `kind()` lets callers branch without parsing text.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Thrown by mesh readers; carries the 1-based line (or record) number.
class MalformedFileError : public Error {
 public:
  MalformedFileError(const std::string& file, std::size_t line,
                     const std::string& why);
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

using Rng = std::mt19937_64;

std::uint64_t splitmix64(std::uint64_t x);

/// Stable 64-bit FNV-1a; used to derive seeds from string identifiers.
std::uint64_t fnv1a(std::string_view text);

/// Seed derivation for independent random streams, e.g.
/// derive_seed(global, fnv1a(object_id), view_index).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a,
                          std::uint64_t b = 0);

/// Counter-based uniform in [0,1): the same (seed, counter) always gives the
/// same value, independent of evaluation order.
double counter_uniform(std::uint64_t seed, std::uint64_t counter);

/// Worker count used by parallel loops. Results never depend on it.
int worker_count();
void set_worker_count(int jobs);

bool all_finite(const Vec3& v);

}  // namespace shapegrasp

#endif  // SHAPEGRASP_COMMON_HPP
