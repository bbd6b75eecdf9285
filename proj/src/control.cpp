#include "gustsim/control.hpp"

#include <cmath>
#include <string>

#include "gustsim/errors.hpp"

namespace gustsim {

const char* to_string(ControllerMode mode) {
    switch (mode) {
        case ControllerMode::baseline: return "baseline";
        case ControllerMode::wind_unaware: return "wind-unaware";
        case ControllerMode::wind_aware: return "wind-aware";
    }
    return "?";
}

ControllerMode controller_mode_from_string(const std::string& s) {
    if (s == "baseline") return ControllerMode::baseline;
    if (s == "wind-unaware" || s == "wind_unaware") return ControllerMode::wind_unaware;
    if (s == "wind-aware" || s == "wind_aware") return ControllerMode::wind_aware;
    throw ConfigError("unknown controller mode: " + s);
}

CascadedController::CascadedController(const DroneParams& params, const ControllerGains& gains)
    : params_(params), gains_(gains) {
    params_.validate();
    reset();
}

void CascadedController::reset() {
    rate_integral_ = Vec3{};
    prev_rate_err_ = Vec3{};
    has_prev_err_ = false;
}

std::pair<Quat, double> CascadedController::position_controller(const DroneState& state,
                                                                const Vec3& r_sp,
                                                                const Vec3& psi_sp) const {
    Vec3 err = r_sp - state.r;
    Vec3 a_des = gains_.pos_kp.cwise_mul(err) - gains_.pos_kd.cwise_mul(state.v);
    a_des.z += params_.gravity;

    // Keep the demanded acceleration pointing upward and within tilt_max.
    double min_az = 0.2 * params_.gravity;
    if (a_des.z < min_az) a_des.z = min_az;
    double max_horiz = std::tan(gains_.tilt_max) * a_des.z;
    double horiz = std::hypot(a_des.x, a_des.y);
    if (horiz > max_horiz) {
        double s = max_horiz / horiz;
        a_des.x *= s;
        a_des.y *= s;
    }

    Vec3 zb = a_des.normalized();
    double yaw = psi_sp.z;
    Vec3 xc{std::cos(yaw), std::sin(yaw), 0.0};
    Vec3 yb = zb.cross(xc);
    double yb_norm = yb.norm();
    if (yb_norm < 1e-6) {
        // Degenerate: thrust direction parallel to the yaw heading.
        yb = Vec3{-std::sin(yaw), std::cos(yaw), 0.0};
    } else {
        yb = yb / yb_norm;
    }
    Vec3 xb = yb.cross(zb);
    Quat q_sp = quat_from_basis(xb, yb, zb);

    double thrust = params_.mass * a_des.dot(state.q.rotate(Vec3{0, 0, 1}));
    thrust = std::clamp(thrust, 0.0, max_thrust());
    return {q_sp, thrust};
}

Vec3 CascadedController::attitude_controller(const DroneState& state, const Quat& q_sp) const {
    Quat q_err = state.q.conjugate() * q_sp;
    double sign = q_err.w >= 0.0 ? 1.0 : -1.0;
    return Vec3{2.0 * gains_.att_kp.x * sign * q_err.x,
                2.0 * gains_.att_kp.y * sign * q_err.y,
                2.0 * gains_.att_kp.z * sign * q_err.z};
}

Vec3 CascadedController::clip_rate_setpoint(const Vec3& omega_sp, ControllerMode mode) const {
    if (mode == ControllerMode::baseline) return omega_sp;
    double c = gains_.rate_clip;
    return Vec3{std::clamp(omega_sp.x, -c, c), std::clamp(omega_sp.y, -c, c),
                std::clamp(omega_sp.z, -c, c)};
}

std::pair<Vec3, double> CascadedController::combine_residual(const Vec3& omega_sp,
                                                             double thrust_sp,
                                                             const ResidualAction& res) const {
    Vec3 omega_net = omega_sp + res.omega_res;
    double thrust_net = std::clamp(thrust_sp + res.thrust_res, 0.0, max_thrust());
    return {omega_net, thrust_net};
}

Vec3 CascadedController::rate_controller(const DroneState& state, const Vec3& omega_net,
                                         double dt) {
    if (!(dt > 0.0)) throw SimulationFault("rate_controller: dt must be > 0");
    Vec3 err = omega_net - state.w;

    rate_integral_ += err * dt;
    rate_integral_ = {std::clamp(rate_integral_.x, -gains_.rate_int_limit.x, gains_.rate_int_limit.x),
                      std::clamp(rate_integral_.y, -gains_.rate_int_limit.y, gains_.rate_int_limit.y),
                      std::clamp(rate_integral_.z, -gains_.rate_int_limit.z, gains_.rate_int_limit.z)};

    Vec3 derr{};
    if (has_prev_err_) derr = (err - prev_rate_err_) / dt;
    prev_rate_err_ = err;
    has_prev_err_ = true;

    Vec3 u = gains_.rate_kp.cwise_mul(err) + gains_.rate_ki.cwise_mul(rate_integral_) +
             gains_.rate_kd.cwise_mul(derr);
    Vec3 torque = params_.inertia_diag.cwise_mul(u);

    // Saturate to what the allocation can reasonably produce.
    double f_max = params_.thrust_coeff * params_.max_rotor_speed * params_.max_rotor_speed;
    double d = params_.arm_length / std::sqrt(2.0);
    double kappa = params_.torque_coeff / params_.thrust_coeff;
    double lim_xy = 1.6 * f_max * d;
    double lim_z = 1.6 * f_max * kappa;
    torque = {std::clamp(torque.x, -lim_xy, lim_xy), std::clamp(torque.y, -lim_xy, lim_xy),
              std::clamp(torque.z, -lim_z, lim_z)};
    return torque;
}

std::array<double, 4> CascadedController::allocate(double thrust, const Vec3& torque) const {
    double d = params_.arm_length / std::sqrt(2.0);
    double kappa = params_.torque_coeff / params_.thrust_coeff;
    double a = torque.x / (4.0 * d);
    double b = torque.y / (4.0 * d);
    double c = torque.z / (4.0 * kappa);
    double t4 = thrust / 4.0;
    // Rotor order: 0 FR, 1 RL, 2 FL, 3 RR (see RotorLayout::x_config).
    return {t4 - a - b - c, t4 + a + b - c, t4 + a - b + c, t4 - a + b + c};
}

MotorCommand CascadedController::mixer(double thrust_net, const Vec3& torque) const {
    if (thrust_net < 0.0) throw SimulationFault("mixer: negative collective thrust");
    const double f_max =
        params_.thrust_coeff * params_.max_rotor_speed * params_.max_rotor_speed;

    auto feasible = [&](const std::array<double, 4>& f) {
        for (double v : f)
            if (v < -1e-12 || v > f_max + 1e-12) return false;
        return true;
    };

    std::array<double, 4> f = allocate(thrust_net, torque);
    if (!feasible(f)) {
        // Yaw gives way first: find the largest lambda in [0, 1] keeping
        // every rotor inside [0, f_max].
        std::array<double, 4> base = allocate(thrust_net, {torque.x, torque.y, 0.0});
        double kappa = params_.torque_coeff / params_.thrust_coeff;
        double c = torque.z / (4.0 * kappa);
        std::array<double, 4> sign{-1.0, -1.0, 1.0, 1.0};
        double lo = 0.0, hi = 1.0;
        for (int i = 0; i < 4; ++i) {
            double coef = sign[i] * c;
            if (std::abs(coef) < 1e-15) continue;
            double l1 = (0.0 - base[i]) / coef;
            double l2 = (f_max - base[i]) / coef;
            if (l1 > l2) std::swap(l1, l2);
            lo = std::max(lo, l1);
            hi = std::min(hi, l2);
        }
        double lambda = (lo <= hi) ? std::clamp(hi, 0.0, 1.0) : 0.0;
        for (int i = 0; i < 4; ++i) f[i] = base[i] + sign[i] * c * lambda;

        // Clamp what remains and redistribute the thrust deficit across
        // unsaturated rotors (total thrust has priority over yaw).
        for (int pass = 0; pass < 4; ++pass) {
            double total = 0.0;
            int free_count = 0;
            for (int i = 0; i < 4; ++i) {
                f[i] = std::clamp(f[i], 0.0, f_max);
                total += f[i];
                if (f[i] > 1e-12 && f[i] < f_max - 1e-12) ++free_count;
            }
            double deficit = thrust_net - total;
            if (std::abs(deficit) < 1e-9 || free_count == 0) break;
            double share = deficit / free_count;
            for (int i = 0; i < 4; ++i)
                if (f[i] > 1e-12 && f[i] < f_max - 1e-12) f[i] += share;
        }
        for (int i = 0; i < 4; ++i) f[i] = std::clamp(f[i], 0.0, f_max);
    }

    MotorCommand cmd;
    for (int i = 0; i < 4; ++i) {
        double w = std::sqrt(std::max(0.0, f[i]) / params_.thrust_coeff);
        cmd.duty[i] = std::clamp(w / params_.max_rotor_speed, 0.0, 1.0);
    }
    return cmd;
}

}  // namespace gustsim
