#pragma once

// Topocentric solar position from latitude/longitude/UTC time.
//
// Implements the NOAA solar-calculator formulation (low-precision ephemeris
// in Julian centuries: mean longitude / mean anomaly / equation-of-center
// polynomials, apparent longitude with nutation-scale correction, mean
// obliquity, equation of time). Returns geometric (unrefracted) altitude and
// compass azimuth (0 = north, clockwise, east = 90 deg). Documented accuracy
// target: within 0.5 deg of a high-precision ephemeris for years 1950-2050;
// verified in tests against independently computed reference points.

#include <cmath>
#include <cstdint>
#include <string>

#include "sunattn/geometry.hpp"

namespace sunattn {

// Days from 1970-01-01 for a civil date (proleptic Gregorian).
inline std::int64_t days_from_civil(int y, int m, int d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);             // [0, 399]
    const unsigned doy = (153u * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;  // [0, 365]
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;            // [0, 146096]
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

// Parses a strict "YYYY-MM-DDTHH:MM:SSZ" UTC timestamp to epoch seconds.
inline std::int64_t parse_utc_timestamp(const std::string& s) {
    auto fail = [&] {
        throw std::invalid_argument("invalid UTC timestamp '" + s +
                                    "', expected YYYY-MM-DDTHH:MM:SSZ");
    };
    if (s.size() != 20 || s[4] != '-' || s[7] != '-' || s[10] != 'T' || s[13] != ':' ||
        s[16] != ':' || s[19] != 'Z')
        fail();
    auto num = [&](int pos, int len) {
        int v = 0;
        for (int i = pos; i < pos + len; ++i) {
            if (s[i] < '0' || s[i] > '9') fail();
            v = v * 10 + (s[i] - '0');
        }
        return v;
    };
    int year = num(0, 4), month = num(5, 2), day = num(8, 2);
    int hh = num(11, 2), mm = num(14, 2), ss = num(17, 2);
    if (month < 1 || month > 12 || day < 1 || day > 31 || hh > 23 || mm > 59 || ss > 59) fail();
    static const int mdays[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    int dim = mdays[month - 1];
    if (month == 2 && (year % 4 == 0 && (year % 100 != 0 || year % 400 == 0))) dim = 29;
    if (day > dim) fail();
    return days_from_civil(year, month, day) * 86400ll + hh * 3600ll + mm * 60ll + ss;
}

struct SolarPosition {
    double azimuth;   // radians, compass convention: 0 = north, clockwise
    double altitude;  // radians, geometric (no refraction)
};

// Valid input window: [1950-01-01T00:00:00Z, 2051-01-01T00:00:00Z).
inline constexpr std::int64_t kSolarEpochMin = -631152000ll;  // 1950-01-01
inline constexpr std::int64_t kSolarEpochMax = 2556144000ll;  // 2051-01-01

inline SolarPosition sun_from_gps_time(double lat_deg, double lon_deg, std::int64_t epoch_s) {
    if (!(lat_deg >= -90.0 && lat_deg <= 90.0))
        throw std::invalid_argument("sun_from_gps_time: latitude out of [-90, 90]");
    if (!(lon_deg >= -180.0 && lon_deg <= 180.0))
        throw std::invalid_argument("sun_from_gps_time: longitude out of [-180, 180]");
    if (epoch_s < kSolarEpochMin || epoch_s >= kSolarEpochMax)
        throw std::invalid_argument("sun_from_gps_time: timestamp outside years 1950-2050");

    const double jd = static_cast<double>(epoch_s) / 86400.0 + 2440587.5;
    const double T = (jd - 2451545.0) / 36525.0;  // Julian centuries since J2000

    // Geometric mean longitude and anomaly of the sun (degrees).
    const double L0 = std::fmod(280.46646 + T * (36000.76983 + T * 0.0003032), 360.0);
    const double M = 357.52911 + T * (35999.05029 - T * 0.0001537);
    const double e = 0.016708634 - T * (0.000042037 + T * 0.0000001267);

    const double Mr = deg2rad(M);
    const double C = std::sin(Mr) * (1.914602 - T * (0.004817 + T * 0.000014)) +
                     std::sin(2 * Mr) * (0.019993 - T * 0.000101) + std::sin(3 * Mr) * 0.000289;
    const double true_long = L0 + C;
    const double omega = deg2rad(125.04 - 1934.136 * T);
    const double lambda = deg2rad(true_long - 0.00569 - 0.00478 * std::sin(omega));

    // Obliquity of the ecliptic, corrected.
    const double eps0 =
        23.0 + (26.0 + (21.448 - T * (46.815 + T * (0.00059 - T * 0.001813))) / 60.0) / 60.0;
    const double eps = deg2rad(eps0 + 0.00256 * std::cos(omega));

    const double decl = std::asin(std::sin(eps) * std::sin(lambda));

    // Equation of time, minutes.
    const double y = std::tan(eps / 2) * std::tan(eps / 2);
    const double L0r = deg2rad(L0);
    const double eqtime =
        4.0 * rad2deg(y * std::sin(2 * L0r) - 2.0 * e * std::sin(Mr) +
                      4.0 * e * y * std::sin(Mr) * std::cos(2 * L0r) -
                      0.5 * y * y * std::sin(4 * L0r) - 1.25 * e * e * std::sin(2 * Mr));

    // True solar time (minutes) and hour angle (degrees from solar noon).
    std::int64_t sec_of_day = ((epoch_s % 86400) + 86400) % 86400;
    const double tst =
        std::fmod(static_cast<double>(sec_of_day) / 60.0 + eqtime + 4.0 * lon_deg + 1440.0 * 4,
                  1440.0);
    const double ha = deg2rad(tst / 4.0 - 180.0);

    const double lat = deg2rad(lat_deg);
    const double sin_alt =
        std::sin(lat) * std::sin(decl) + std::cos(lat) * std::cos(decl) * std::cos(ha);
    const double altitude = std::asin(std::clamp(sin_alt, -1.0, 1.0));

    // Azimuth from north, clockwise.
    const double az = std::atan2(std::sin(ha),
                                 std::cos(ha) * std::sin(lat) - std::tan(decl) * std::cos(lat));
    const double azimuth = wrap_angle(az + kPi);

    return {azimuth, altitude};
}

inline SolarPosition sun_from_gps_time(double lat_deg, double lon_deg,
                                       const std::string& utc_timestamp) {
    return sun_from_gps_time(lat_deg, lon_deg, parse_utc_timestamp(utc_timestamp));
}

// Maps a solar position to a world-frame direction under the convention that
// world +x = east and +y = north (so math azimuth = 90 deg - compass).
inline Vec3 direction_from_solar(const SolarPosition& p) {
    return direction_from_spherical(kPi / 2 - p.azimuth, p.altitude);
}

}  // namespace sunattn
