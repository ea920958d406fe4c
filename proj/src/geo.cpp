#include "ensplan/geo.hpp"

#include <algorithm>
#include <cmath>

namespace ensplan::geo {

double central_angle(GeoPoint a, GeoPoint b) {
  const double p1 = deg2rad(a.lat), p2 = deg2rad(b.lat);
  const double dp = p2 - p1;
  const double dl = deg2rad(b.lon - a.lon);
  const double h = std::sin(dp / 2) * std::sin(dp / 2) +
                   std::cos(p1) * std::cos(p2) * std::sin(dl / 2) * std::sin(dl / 2);
  return 2.0 * std::atan2(std::sqrt(h), std::sqrt(std::max(0.0, 1.0 - h)));
}

double distance_m(GeoPoint a, GeoPoint b) { return kEarthRadiusM * central_angle(a, b); }

double initial_course_deg(GeoPoint a, GeoPoint b) {
  const double p1 = deg2rad(a.lat), p2 = deg2rad(b.lat);
  const double dl = deg2rad(b.lon - a.lon);
  const double y = std::sin(dl) * std::cos(p2);
  const double x = std::cos(p1) * std::sin(p2) - std::sin(p1) * std::cos(p2) * std::cos(dl);
  double c = rad2deg(std::atan2(y, x));
  if (c < 0) c += 360.0;
  if (c >= 360.0) c -= 360.0;
  return c;
}

GeoPoint intermediate(GeoPoint a, GeoPoint b, double f) {
  const double d = central_angle(a, b);
  if (d == 0.0) return a;
  const double p1 = deg2rad(a.lat), l1 = deg2rad(a.lon);
  const double p2 = deg2rad(b.lat), l2 = deg2rad(b.lon);
  const double s = std::sin(d);
  const double wa = std::sin((1.0 - f) * d) / s;
  const double wb = std::sin(f * d) / s;
  const double x = wa * std::cos(p1) * std::cos(l1) + wb * std::cos(p2) * std::cos(l2);
  const double y = wa * std::cos(p1) * std::sin(l1) + wb * std::cos(p2) * std::sin(l2);
  const double z = wa * std::sin(p1) + wb * std::sin(p2);
  return {rad2deg(std::atan2(z, std::sqrt(x * x + y * y))), rad2deg(std::atan2(y, x))};
}

GeoPoint destination(GeoPoint p, double course_deg, double angle_deg) {
  const double p1 = deg2rad(p.lat), l1 = deg2rad(p.lon);
  const double c = deg2rad(course_deg), d = deg2rad(angle_deg);
  const double p2 = std::asin(std::sin(p1) * std::cos(d) + std::cos(p1) * std::sin(d) * std::cos(c));
  const double l2 = l1 + std::atan2(std::sin(c) * std::sin(d) * std::cos(p1),
                                    std::cos(d) - std::sin(p1) * std::sin(p2));
  return {rad2deg(p2), wrap_lon(rad2deg(l2))};
}

double wrap_lon(double lon) {
  double w = std::fmod(lon + 180.0, 360.0);
  if (w < 0) w += 360.0;
  return w - 180.0;
}

}  // namespace ensplan::geo
