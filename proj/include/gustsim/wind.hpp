#pragma once

#include "gustsim/dynamics.hpp"
#include "gustsim/geometry.hpp"
#include "gustsim/rng.hpp"

namespace gustsim {

/// Three-stage gust schedule: "Low" until t_start_slope, a linear "Slope"
/// to u_high, a "High" stage with a raised-cosine dip, then a symmetric
/// ramp back down to u_low. The down-ramp keeps the profile continuous.
struct GustProfile {
    double u_low = 0.0;          // m/s
    double u_high = 5.0;         // m/s
    double t_start_slope = 1.5;  // s
    double slope_duration = 1.0; // s
    double high_duration = 5.0;  // s
    double dip_depth = 1.0;      // m/s
    double dip_time = 5.0;       // s, center of the dip
    double dip_width = 0.5;      // s
    Vec3 direction{1, 0, 0};     // unit, world frame

    double high_start() const { return t_start_slope + slope_duration; }
    double high_end() const { return high_start() + high_duration; }

    /// Throws ConfigError when the invariants do not hold.
    void validate() const;
};

struct WindSample {
    Vec3 velocity;  // m/s, world frame
    double t = 0.0; // s
};

/// Aerodynamic drag model: quadratic bluff-body drag per body axis plus a
/// linear induced-drag term, both acting on the wind velocity relative to
/// the airframe.
struct DragParams {
    double air_density = 1.225;          // kg/m^3
    Vec3 bluff_area{0.12, 0.12, 0.18};   // m^2 per body axis
    Vec3 bluff_drag_coeff{1.0, 1.0, 1.0};
    double induced_drag_coeff = 0.25;    // N/(m/s)

    void validate() const;
};

struct Range {
    double min = 0.0;
    double max = 0.0;
    bool well_ordered() const { return min <= max; }
};

/// Randomization bounds for gust sampling. The four ranges named in the
/// defaults below bracket the hardware gusts (peak ~5 m/s, 4-6 s duration).
struct GustRanges {
    Range u_low{0.0, 0.5};
    Range u_high{3.5, 6.0};
    Range t_start_slope{1.0, 2.5};
    Range slope_duration{0.3, 1.5};
    Range high_duration{4.0, 6.0};
    Range dip_depth{0.5, 2.0};
    Range dip_width{0.2, 0.8};
    Vec3 direction{1, 0, 0};

    void validate() const;
};

GustProfile sample_gust_profile(Rng& rng, const GustRanges& ranges);
GustProfile sample_gust_profile(std::uint64_t seed, const GustRanges& ranges);

/// Scalar wind speed of the profile at time t (total function of t >= 0).
double gust_speed_at(const GustProfile& profile, double t);

WindSample wind_at(const GustProfile& profile, double t);

/// World-frame drag force for the given relative flow.
Vec3 drag_force(const DragParams& dp, const WindSample& wind, const DroneState& state);

}  // namespace gustsim
