#pragma once

#include <array>

#include "gustsim/geometry.hpp"

namespace gustsim {

/// Physical parameters of the quadrotor. Defaults are plausible for a
/// 2 kg X500-class airframe and are overridable via config.
struct DroneParams {
    double mass = 2.0;                      // kg
    Vec3 inertia_diag{0.022, 0.022, 0.035}; // kg m^2, principal moments
    double arm_length = 0.25;               // m, center to rotor
    double thrust_coeff = 1.2e-5;           // N/(rad/s)^2
    double torque_coeff = 2.0e-7;           // N m/(rad/s)^2
    double motor_time_constant = 0.05;      // s
    double max_rotor_speed = 1000.0;        // rad/s
    double gravity = 9.81;                  // m/s^2

    double max_total_thrust() const {
        return 4.0 * thrust_coeff * max_rotor_speed * max_rotor_speed;
    }
    bool flyable() const {
        return max_total_thrust() > 1.5 * mass * gravity;
    }
    /// Throws ConfigError on non-positive fields or a non-flyable setup.
    void validate() const;
};

/// Full rigid-body state. World frame is ENU (x east, y north, z up);
/// body frame is FLU (x forward, y left, z up). q rotates body -> world.
struct DroneState {
    Vec3 r;                                  // m, world
    Quat q = Quat::identity();               // body -> world
    Vec3 v;                                  // m/s, world
    Vec3 w;                                  // rad/s, body
    std::array<double, 4> rotor_speeds{};    // rad/s
    double t = 0.0;                          // s

    bool is_finite() const;
};

/// Normalized motor duty per rotor, clamped to [0, 1].
struct MotorCommand {
    std::array<double, 4> duty{};

    static MotorCommand uniform(double d) { return {{d, d, d, d}}; }
    MotorCommand clamped() const;
    bool is_finite() const;
};

/// X-configuration rotor geometry shared by the dynamics and the mixer.
/// Rotor order: 0 front-right, 1 rear-left, 2 front-left, 3 rear-right.
/// spin_dir is +1 for counter-clockwise rotors seen from above.
struct RotorLayout {
    std::array<Vec3, 4> position;
    std::array<double, 4> spin_dir;

    static RotorLayout x_config(double arm_length) {
        double d = arm_length / std::sqrt(2.0);
        RotorLayout l;
        l.position = {Vec3{d, -d, 0}, Vec3{-d, d, 0}, Vec3{d, d, 0}, Vec3{-d, -d, 0}};
        l.spin_dir = {1.0, 1.0, -1.0, -1.0};
        return l;
    }
};

/// Body force (world frame) and torque (body frame) produced by the rotors.
struct RotorWrench {
    Vec3 force_world;
    Vec3 torque_body;
};

RotorWrench rotor_wrench(const DroneParams& p, const DroneState& s);

/// Advance the state by dt (explicit midpoint for the rigid body, exact
/// first-order lag for the motors, exponential-map attitude update).
/// external_force is a world-frame force at the center of mass held
/// constant over the step. Throws SimulationFault on non-finite input.
DroneState step(const DroneParams& p, const DroneState& state, const MotorCommand& cmd,
                const Vec3& external_force, double dt);

/// ZYX yaw-pitch-roll angles of a unit quaternion.
EulerAngles euler_angles(const Quat& q);

/// Duty at which four rotors in steady state carry the weight exactly.
double hover_duty(const DroneParams& p);

/// Rotor speed at the hover duty, convenient for building trim states.
double hover_rotor_speed(const DroneParams& p);

}  // namespace gustsim
