#pragma once

#include <cmath>
#include <stdexcept>

namespace gtwr {

inline constexpr double pi = 3.14159265358979323846;

// Volume of the unit euclidean ball in R^d: pi^{d/2} / Gamma(d/2 + 1).
inline double lambda_ball(int d) {
  if (d < 1) throw std::invalid_argument("lambda_ball: dimension must be >= 1");
  return std::pow(pi, 0.5 * d) / std::tgamma(0.5 * d + 1.0);
}

// Surface measure of the unit sphere S^{d-1}.
inline double sphere_surface(int d) { return d * lambda_ball(d); }

// Volume of the intersection of two unit balls in R^d whose centers are a
// distance t apart.  Supported for d in {1,2,3}; zero once t >= 2.
inline double ball_overlap_volume(int d, double t) {
  if (t < 0.0) throw std::invalid_argument("ball_overlap_volume: distance must be >= 0");
  if (t >= 2.0) return 0.0;
  switch (d) {
    case 1:
      return 2.0 - t;
    case 2:
      // Lens area of two unit disks.
      return 2.0 * std::acos(0.5 * t) - 0.5 * t * std::sqrt(4.0 - t * t);
    case 3:
      // Sphere-sphere intersection with equal unit radii.
      return pi * (2.0 - t) * (2.0 - t) * (t + 4.0) / 12.0;
    default:
      throw std::invalid_argument("ball_overlap_volume: only d in {1,2,3} is supported");
  }
}

// d/dt of ball_overlap_volume at t = 0 (used by the continuation quadrature).
inline double ball_overlap_volume_slope0(int d) {
  switch (d) {
    case 1:
      return -1.0;
    case 2:
      return -2.0;  // derivative of the lens area is -sqrt(4 - t^2)
    case 3:
      return -pi;
    default:
      throw std::invalid_argument("ball_overlap_volume_slope0: only d in {1,2,3} is supported");
  }
}

}  // namespace gtwr
