#include "gustsim/wind.hpp"

#include <cmath>
#include <string>

#include "gustsim/errors.hpp"

namespace gustsim {

void GustProfile::validate() const {
    if (!(u_low >= 0.0) || !(u_low < u_high))
        throw ConfigError("gust profile: requires 0 <= u_low < u_high");
    if (!(slope_duration > 0.0)) throw ConfigError("gust profile: slope_duration must be > 0");
    if (!(t_start_slope >= 0.0) || !(high_duration > 0.0) || !(dip_width > 0.0) ||
        !(dip_depth >= 0.0))
        throw ConfigError("gust profile: negative stage parameter");
    if (u_high - dip_depth < 0.0)
        throw ConfigError("gust profile: dip_depth exceeds u_high");
    if (dip_time - 0.5 * dip_width < high_start() || dip_time + 0.5 * dip_width > high_end())
        throw ConfigError("gust profile: dip must lie within the High stage");
}

void DragParams::validate() const {
    auto nonneg = [](double v) { return std::isfinite(v) && v >= 0.0; };
    bool ok = nonneg(air_density) && nonneg(induced_drag_coeff) && nonneg(bluff_area.x) &&
              nonneg(bluff_area.y) && nonneg(bluff_area.z) && nonneg(bluff_drag_coeff.x) &&
              nonneg(bluff_drag_coeff.y) && nonneg(bluff_drag_coeff.z);
    if (!ok) throw ConfigError("drag params: all fields must be finite and non-negative");
}

void GustRanges::validate() const {
    const Range* all[] = {&u_low, &u_high, &t_start_slope, &slope_duration,
                          &high_duration, &dip_depth, &dip_width};
    const char* names[] = {"u_low", "u_high", "t_start_slope", "slope_duration",
                           "high_duration", "dip_depth", "dip_width"};
    for (int i = 0; i < 7; ++i)
        if (!all[i]->well_ordered())
            throw ConfigError(std::string("gust ranges: ") + names[i] + " has min > max");
}

GustProfile sample_gust_profile(Rng& rng, const GustRanges& ranges) {
    ranges.validate();
    auto draw = [&rng](const Range& r) { return rng.uniform(r.min, r.max); };

    GustProfile p;
    p.direction = ranges.direction.normalized();
    constexpr int kMaxAttempts = 1000;
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
        p.u_low = draw(ranges.u_low);
        p.u_high = draw(ranges.u_high);
        p.t_start_slope = draw(ranges.t_start_slope);
        p.slope_duration = draw(ranges.slope_duration);
        p.high_duration = draw(ranges.high_duration);
        p.dip_depth = draw(ranges.dip_depth);
        p.dip_width = draw(ranges.dip_width);
        // Resample dip_time until the whole well sits inside the High stage.
        double lo = p.high_start() + 0.5 * p.dip_width;
        double hi = p.high_end() - 0.5 * p.dip_width;
        if (lo > hi) continue;
        p.dip_time = rng.uniform(lo, hi);
        try {
            p.validate();
            return p;
        } catch (const ConfigError&) {
            continue;
        }
    }
    throw ConfigError("sample_gust_profile: bounds admit no valid profile");
}

GustProfile sample_gust_profile(std::uint64_t seed, const GustRanges& ranges) {
    Rng rng(seed);
    return sample_gust_profile(rng, ranges);
}

double gust_speed_at(const GustProfile& profile, double t) {
    const double t1 = profile.t_start_slope;
    const double t2 = profile.high_start();
    const double t3 = profile.high_end();
    const double t4 = t3 + profile.slope_duration;

    if (t < t1) return profile.u_low;
    if (t < t2) {
        double frac = (t - t1) / profile.slope_duration;
        return profile.u_low + (profile.u_high - profile.u_low) * frac;
    }
    if (t < t3) {
        double speed = profile.u_high;
        double off = t - profile.dip_time;
        if (std::abs(off) <= 0.5 * profile.dip_width) {
            // Raised-cosine well, zero at its edges, -dip_depth at the center.
            speed -= profile.dip_depth * 0.5 * (1.0 + std::cos(2.0 * kPi * off / profile.dip_width));
        }
        return speed;
    }
    if (t < t4) {
        double frac = (t - t3) / profile.slope_duration;
        return profile.u_high + (profile.u_low - profile.u_high) * frac;
    }
    return profile.u_low;
}

WindSample wind_at(const GustProfile& profile, double t) {
    WindSample s;
    s.t = t;
    s.velocity = profile.direction * gust_speed_at(profile, t);
    return s;
}

Vec3 drag_force(const DragParams& dp, const WindSample& wind, const DroneState& state) {
    Vec3 v_rel_world = wind.velocity - state.v;
    Vec3 v = state.q.rotate_inverse(v_rel_world);

    Vec3 f_body;
    const double half_rho = 0.5 * dp.air_density;
    f_body.x = half_rho * dp.bluff_drag_coeff.x * dp.bluff_area.x * std::abs(v.x) * v.x;
    f_body.y = half_rho * dp.bluff_drag_coeff.y * dp.bluff_area.y * std::abs(v.y) * v.y;
    f_body.z = half_rho * dp.bluff_drag_coeff.z * dp.bluff_area.z * std::abs(v.z) * v.z;
    f_body += v * dp.induced_drag_coeff;

    return state.q.rotate(f_body);
}

}  // namespace gustsim
