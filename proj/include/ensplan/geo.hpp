#pragma once

// Spherical-earth helpers. Angles in degrees at the interface, courses
// measured clockwise from true north.

namespace ensplan::geo {

inline constexpr double kEarthRadiusM = 6371008.8;
inline constexpr double kPi = 3.14159265358979323846;

struct GeoPoint {
  double lat = 0.0;
  double lon = 0.0;
  friend bool operator==(const GeoPoint&, const GeoPoint&) = default;
};

constexpr double deg2rad(double d) { return d * kPi / 180.0; }
constexpr double rad2deg(double r) { return r * 180.0 / kPi; }

/// Central angle between two points, radians (haversine).
double central_angle(GeoPoint a, GeoPoint b);

/// Great-circle distance, metres.
double distance_m(GeoPoint a, GeoPoint b);

/// Initial course from a to b, degrees in [0, 360).
double initial_course_deg(GeoPoint a, GeoPoint b);

/// Point at fraction f ∈ [0,1] along the great circle a→b.
GeoPoint intermediate(GeoPoint a, GeoPoint b, double f);

/// Point reached from p travelling `angle_deg` of arc on `course_deg`.
GeoPoint destination(GeoPoint p, double course_deg, double angle_deg);

/// Longitude wrapped into [-180, 180).
double wrap_lon(double lon);

}  // namespace ensplan::geo
