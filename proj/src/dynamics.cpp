#include "gustsim/dynamics.hpp"

#include <algorithm>
#include <cmath>

#include "gustsim/errors.hpp"

namespace gustsim {

void DroneParams::validate() const {
    auto positive = [](double v) { return std::isfinite(v) && v > 0.0; };
    bool ok = positive(mass) && positive(arm_length) && positive(thrust_coeff) &&
              positive(torque_coeff) && positive(motor_time_constant) &&
              positive(max_rotor_speed) && positive(gravity) &&
              positive(inertia_diag.x) && positive(inertia_diag.y) && positive(inertia_diag.z);
    if (!ok) throw ConfigError("drone params: all fields must be finite and strictly positive");
    if (!flyable())
        throw ConfigError("drone params: max thrust " + std::to_string(max_total_thrust()) +
                          " N does not exceed 1.5x weight " +
                          std::to_string(1.5 * mass * gravity) + " N");
}

bool DroneState::is_finite() const {
    bool rotors = true;
    for (double s : rotor_speeds) rotors = rotors && std::isfinite(s);
    return r.is_finite() && q.is_finite() && v.is_finite() && w.is_finite() && rotors &&
           std::isfinite(t);
}

MotorCommand MotorCommand::clamped() const {
    MotorCommand c = *this;
    for (double& d : c.duty) d = std::clamp(d, 0.0, 1.0);
    return c;
}

bool MotorCommand::is_finite() const {
    for (double d : duty)
        if (!std::isfinite(d)) return false;
    return true;
}

RotorWrench rotor_wrench(const DroneParams& p, const DroneState& s) {
    const RotorLayout layout = RotorLayout::x_config(p.arm_length);
    double total_thrust = 0.0;
    Vec3 torque;
    for (int i = 0; i < 4; ++i) {
        double w2 = s.rotor_speeds[i] * s.rotor_speeds[i];
        double f = p.thrust_coeff * w2;
        total_thrust += f;
        torque += layout.position[i].cross(Vec3{0, 0, f});
        torque.z += -layout.spin_dir[i] * p.torque_coeff * w2;
    }
    RotorWrench out;
    out.force_world = s.q.rotate(Vec3{0, 0, total_thrust});
    out.torque_body = torque;
    return out;
}

namespace {

struct Derivatives {
    Vec3 accel;      // world
    Vec3 ang_accel;  // body
};

Derivatives eval(const DroneParams& p, const DroneState& s, const Vec3& f_ext) {
    RotorWrench rw = rotor_wrench(p, s);
    Derivatives d;
    d.accel = (rw.force_world + f_ext) / p.mass - Vec3{0, 0, p.gravity};
    const Vec3& inertia = p.inertia_diag;
    Vec3 l{inertia.x * s.w.x, inertia.y * s.w.y, inertia.z * s.w.z};
    Vec3 gyro = s.w.cross(l);
    d.ang_accel = Vec3{(rw.torque_body.x - gyro.x) / inertia.x,
                       (rw.torque_body.y - gyro.y) / inertia.y,
                       (rw.torque_body.z - gyro.z) / inertia.z};
    return d;
}

std::array<double, 4> motor_lag(const DroneParams& p, const std::array<double, 4>& speeds,
                                const MotorCommand& cmd, double dt) {
    // Exact discretization of the first-order lag toward duty * max speed.
    double alpha = 1.0 - std::exp(-dt / p.motor_time_constant);
    std::array<double, 4> out;
    for (int i = 0; i < 4; ++i) {
        double target = cmd.duty[i] * p.max_rotor_speed;
        out[i] = std::clamp(speeds[i] + alpha * (target - speeds[i]), 0.0, p.max_rotor_speed);
    }
    return out;
}

}  // namespace

DroneState step(const DroneParams& p, const DroneState& state, const MotorCommand& cmd_in,
                const Vec3& external_force, double dt) {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw SimulationFault("step: dt must be positive");
    if (!state.is_finite() || !cmd_in.is_finite() || !external_force.is_finite())
        throw SimulationFault("step: non-finite input at t=" + std::to_string(state.t));

    const MotorCommand cmd = cmd_in.clamped();

    Derivatives k1 = eval(p, state, external_force);

    DroneState mid = state;
    mid.r = state.r + state.v * (0.5 * dt);
    mid.v = state.v + k1.accel * (0.5 * dt);
    mid.q = (state.q * Quat::exp_map(state.w * (0.5 * dt))).normalized();
    mid.w = state.w + k1.ang_accel * (0.5 * dt);
    mid.rotor_speeds = motor_lag(p, state.rotor_speeds, cmd, 0.5 * dt);

    Derivatives k2 = eval(p, mid, external_force);

    DroneState next = state;
    next.r = state.r + mid.v * dt;
    next.v = state.v + k2.accel * dt;
    next.q = (state.q * Quat::exp_map(mid.w * dt)).normalized();
    next.w = state.w + k2.ang_accel * dt;
    next.rotor_speeds = motor_lag(p, state.rotor_speeds, cmd, dt);
    next.t = state.t + dt;

    if (!next.is_finite()) throw SimulationFault("step: state diverged at t=" + std::to_string(next.t));
    return next;
}

EulerAngles euler_angles(const Quat& q) { return euler_zyx(q); }

double hover_rotor_speed(const DroneParams& p) {
    return std::sqrt(p.mass * p.gravity / (4.0 * p.thrust_coeff));
}

double hover_duty(const DroneParams& p) {
    p.validate();
    return hover_rotor_speed(p) / p.max_rotor_speed;
}

}  // namespace gustsim
