#pragma once

#include <array>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "bssd/common.hpp"

namespace bssd {

using Vec3 = std::array<double, 3>;

inline Vec3 operator-(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline Vec3 operator+(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
inline double norm(const Vec3& a) { return std::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]); }

// Microphone positions in meters plus the speed of sound.
struct ArrayGeometry {
  std::vector<Vec3> positions;
  double speed_of_sound = kSpeedOfSound;

  std::size_t channels() const { return positions.size(); }

  Vec3 centroid() const {
    Vec3 c{0.0, 0.0, 0.0};
    for (const auto& p : positions) c = c + p;
    const double inv = 1.0 / static_cast<double>(positions.size());
    return {c[0] * inv, c[1] * inv, c[2] * inv};
  }

  double pair_distance(std::size_t i, std::size_t j) const {
    return norm(positions[i] - positions[j]);
  }

  void validate() const {
    if (positions.size() < 2) throw invalid_input("geometry: need at least 2 microphones");
  }
};

// Planar circular array centered at the origin, microphone 0 on the +x axis.
// Defaults match the 6-channel, 92.6 mm reference array.
inline ArrayGeometry circular_array(std::size_t m = 6, double diameter = 0.0926,
                                    double c = kSpeedOfSound) {
  ArrayGeometry g;
  g.speed_of_sound = c;
  const double r = diameter / 2.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double phi = 2.0 * kPi * static_cast<double>(i) / static_cast<double>(m);
    g.positions.push_back({r * std::cos(phi), r * std::sin(phi), 0.0});
  }
  return g;
}

// Geometry file: header line with the speed of sound, then M rows "x y z"
// in meters. '#' starts a comment.
inline ArrayGeometry load_geometry(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw invalid_input("load_geometry: cannot open " + path);
  ArrayGeometry g;
  bool have_c = false;
  std::string line;
  while (std::getline(f, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ss(line);
    if (!have_c) {
      double c;
      if (ss >> c) {
        g.speed_of_sound = c;
        have_c = true;
      }
      continue;
    }
    Vec3 p;
    if (ss >> p[0] >> p[1] >> p[2]) g.positions.push_back(p);
  }
  g.validate();
  return g;
}

inline void save_geometry(const std::string& path, const ArrayGeometry& g) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw invalid_input("save_geometry: cannot open " + path);
  f << "# speed of sound [m/s], then one microphone per row: x y z [m]\n";
  f << g.speed_of_sound << "\n";
  f.precision(17);
  for (const auto& p : g.positions) f << p[0] << " " << p[1] << " " << p[2] << "\n";
}

}  // namespace bssd
