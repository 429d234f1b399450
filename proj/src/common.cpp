#include "shapegrasp/common.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>

namespace shapegrasp {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::MalformedFile: return "malformed-file";
    case ErrorKind::EmptyGeometry: return "empty-geometry";
    case ErrorKind::DegenerateGeometry: return "degenerate-geometry";
    case ErrorKind::Precondition: return "precondition-violation";
    case ErrorKind::Shortage: return "shortage";
    case ErrorKind::InvalidArgument: return "invalid-argument";
    case ErrorKind::NonFinite: return "non-finite";
    case ErrorKind::Divergence: return "divergence";
    case ErrorKind::NoModelFound: return "no-model-found";
    case ErrorKind::EmptyObject: return "empty-object";
    case ErrorKind::NoClearance: return "no-clearance";
    case ErrorKind::UndefinedMetric: return "undefined-metric";
    case ErrorKind::Io: return "io";
  }
  return "unknown";
}

MalformedFileError::MalformedFileError(const std::string& file,
                                       std::size_t line,
                                       const std::string& why)
    : Error(ErrorKind::MalformedFile,
            file + ":" + std::to_string(line) + ": " + why),
      line_(line) {}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a,
                          std::uint64_t b) {
  return splitmix64(splitmix64(splitmix64(base) ^ a) ^ b);
}

double counter_uniform(std::uint64_t seed, std::uint64_t counter) {
  const std::uint64_t bits = splitmix64(seed ^ splitmix64(counter));
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

namespace {
std::atomic<int> g_workers{1};
}

int worker_count() { return g_workers.load(); }

void set_worker_count(int jobs) { g_workers.store(std::max(1, jobs)); }

bool all_finite(const Vec3& v) {
  return std::isfinite(v.x()) && std::isfinite(v.y()) && std::isfinite(v.z());
}

}  // namespace shapegrasp
