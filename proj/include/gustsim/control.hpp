#pragma once

#include <algorithm>

#include "gustsim/dynamics.hpp"
#include "gustsim/geometry.hpp"

namespace gustsim {

enum class ControllerMode { baseline, wind_unaware, wind_aware };

const char* to_string(ControllerMode mode);
ControllerMode controller_mode_from_string(const std::string& s);

/// Body-rate and thrust residuals added to the cascade setpoints.
struct ResidualAction {
    Vec3 omega_res;          // rad/s, bounded to +-omega_bound per axis
    double thrust_res = 0.0; // N, bounded to +-thrust_bound

    static constexpr double omega_bound = 0.3;
    static constexpr double thrust_bound = 1.0;

    ResidualAction clamped() const {
        ResidualAction r;
        r.omega_res = {std::clamp(omega_res.x, -omega_bound, omega_bound),
                       std::clamp(omega_res.y, -omega_bound, omega_bound),
                       std::clamp(omega_res.z, -omega_bound, omega_bound)};
        r.thrust_res = std::clamp(thrust_res, -thrust_bound, thrust_bound);
        return r;
    }
};

struct Setpoints {
    Vec3 r_sp;
    Vec3 psi_sp;        // roll/pitch unused by the position stage; yaw tracked
    Quat q_sp = Quat::identity();
    Vec3 omega_sp;      // rad/s, post-clip
    double thrust_sp = 0.0;  // N
};

/// Cascade gains; tuned once in-repo against the closed-loop hover and
/// rate-step regressions, then frozen. All overridable via config.
struct ControllerGains {
    Vec3 pos_kp{4.0, 4.0, 6.0};
    Vec3 pos_kd{3.2, 3.2, 4.0};
    Vec3 att_kp{6.0, 6.0, 3.0};
    Vec3 rate_kp{16.0, 16.0, 8.0};
    Vec3 rate_ki{20.0, 20.0, 10.0};
    Vec3 rate_kd{0.0, 0.0, 0.0};
    Vec3 rate_int_limit{0.4, 0.4, 0.4};  // rad, clamp on the error integral
    double rate_clip = 0.1;              // rad/s, active in non-baseline modes
    double tilt_max = 0.9;               // rad, attitude-setpoint tilt clamp
};

/// PX4-style cascade: position PD -> attitude quaternion-P -> body-rate PID
/// -> X-configuration mixer. The residual combination point sits between
/// the attitude stage and the rate loop.
class CascadedController {
public:
    CascadedController(const DroneParams& params, const ControllerGains& gains);

    void reset();

    /// PD position stage with gravity feed-forward; returns the attitude
    /// setpoint quaternion and collective thrust along body z.
    std::pair<Quat, double> position_controller(const DroneState& state, const Vec3& r_sp,
                                                const Vec3& psi_sp) const;

    /// Quaternion-error proportional law (shortest rotation).
    Vec3 attitude_controller(const DroneState& state, const Quat& q_sp) const;

    Vec3 clip_rate_setpoint(const Vec3& omega_sp, ControllerMode mode) const;

    /// Net setpoints per the residual combination; thrust clamped to
    /// [0, max thrust].
    std::pair<Vec3, double> combine_residual(const Vec3& omega_sp, double thrust_sp,
                                             const ResidualAction& res) const;

    /// Body-rate PID with clamped integrator; returns body torques.
    Vec3 rate_controller(const DroneState& state, const Vec3& omega_net, double dt);

    /// Solves the 4x4 X-configuration allocation. Infeasible demands are
    /// resolved by scaling yaw torque first, then clamping with thrust
    /// redistribution across unsaturated rotors.
    MotorCommand mixer(double thrust_net, const Vec3& torque) const;

    const ControllerGains& gains() const { return gains_; }
    const DroneParams& params() const { return params_; }
    double max_thrust() const { return params_.max_total_thrust(); }

    /// Per-rotor thrusts for a feasible demand; exposed for allocation tests.
    std::array<double, 4> allocate(double thrust, const Vec3& torque) const;

private:
    DroneParams params_;
    ControllerGains gains_;
    Vec3 rate_integral_;  // integral of rate error, rad
    bool has_prev_err_ = false;
    Vec3 prev_rate_err_;
};

}  // namespace gustsim
