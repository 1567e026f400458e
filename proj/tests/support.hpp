#pragma once

#include <vesselmode/flowsynth.hpp>

#include <map>
#include <mutex>

namespace vesselmode::fixtures {

// Meshing and operator assembly dominate small tests, so cross-sections are
// built once per (shape, h) and shared.
inline CrossSectionPtr cached_section(const CurveDescriptor& d, double h, std::size_t nodes = 1024) {
  static std::mutex mu;
  static std::map<std::string, CrossSectionPtr> cache;
  const std::string key = describe(d) + "@" + std::to_string(h) + "#" + std::to_string(nodes);
  std::lock_guard lock(mu);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  const BoundaryCurve c(d, nodes);
  auto cs = make_cross_section(mesh_domain(c, h));
  cache[key] = cs;
  return cs;
}

inline const BoundaryCurve& unit_circle() {
  static const BoundaryCurve c(Circle{1.0}, 1024);
  return c;
}

inline const BoundaryCurve& ellipse21() {
  static const BoundaryCurve c(Ellipse{2.0, 1.0}, 1024);
  return c;
}

inline CrossSectionPtr disk(double h) { return cached_section(Circle{1.0}, h); }

}  // namespace vesselmode::fixtures
