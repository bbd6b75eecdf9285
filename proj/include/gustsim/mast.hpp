#pragma once

#include <array>
#include <deque>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gustsim/geometry.hpp"
#include "gustsim/mlp.hpp"
#include "gustsim/rng.hpp"

namespace gustsim {

/// One hot-wire bridge channel. Steady-state response follows King's law
/// E^2 = A + B * U_eff^n with a direction-dependent effective speed, and
/// the dynamic response is a first-order lag with `time_constant`.
struct SensorChannelModel {
    double kings_a = 1.0;     // V^2
    double kings_b = 0.25;    // V^2 / (m/s)^n
    double kings_n = 0.45;
    double azimuth_offset = 0.0;              // rad, channel facing in body frame
    double time_constant = 1.0 / (2.0 * kPi * 570.0);  // s, -3 dB at 570 Hz
    double noise_std = 0.005;                 // V

    void validate() const;
};

struct MastParams {
    std::array<SensorChannelModel, 5> channels;
    double gain_floor = 0.15;   // off-axis sensitivity of the cosine lobe
    double bridge_min = 0.0;    // V
    double bridge_max = 5.0;    // V

    /// Five identical channels at pentagon azimuths 2*pi*k/5.
    static MastParams pentagon();
    void validate() const;
};

struct MastReading {
    std::array<double, 5> bridge_voltages{};
    double t = 0.0;
};

struct WindEstimate {
    double speed = 0.0;      // m/s, >= 0
    double direction = 0.0;  // rad in (-pi, pi]
    double t = 0.0;
};

/// Directional gain of a channel: a forward cosine lobe with a floor that
/// models residual flow-through-window sensitivity at oblique and rear
/// angles. Monotone responses require gain > 0 everywhere.
double channel_gain(double delta_azimuth, double gain_floor);

/// Steady-state bridge voltages for a body-frame relative wind.
MastReading mast_steady_reading(const MastParams& p, const Vec3& wind_rel_body);

/// One bandwidth-limited, noisy sample. `prev` is the previous reading
/// (lag state); pass std::nullopt at the start of an episode to settle
/// instantly onto the steady-state value.
MastReading forward_mast(const MastParams& p, const Vec3& wind_rel_body,
                         const std::optional<MastReading>& prev, double dt, Rng& rng);

/// Rolling maximum over a trailing time window (t_now - window, t_now].
/// Monotonic-deque implementation; push times must be non-decreasing.
class RollingMax {
public:
    explicit RollingMax(double window);
    void push(double t, double value);
    double max() const;  // throws ConfigError when empty
    bool empty() const { return buf_.empty(); }
    void reset() { buf_.clear(); }
    double window() const { return window_; }

private:
    double window_;
    std::deque<std::pair<double, double>> buf_;  // (t, value), values decreasing
};

/// Brute-force window maximum over a sorted (t, value) history; the
/// oracle counterpart of RollingMax. Empty window falls back to the most
/// recent sample. Throws ConfigError on an empty history.
double rolling_max_filter(std::span<const std::pair<double, double>> history, double window);

/// Wind-measurement history with a fixed skip between taps: taps() returns
/// the newest sample plus `taps-1` older ones spaced `skip` pushes apart,
/// newest first. The first push pre-fills the whole buffer.
class WindHistoryBuffer {
public:
    explicit WindHistoryBuffer(int skip = 5, int taps = 5);
    void push(double value);
    std::array<double, 5> taps() const;
    bool primed() const { return !values_.empty(); }
    void reset() { values_.clear(); }

private:
    int skip_, taps_;
    std::vector<double> values_;  // ring of the last (taps-1)*skip + 1 values
    std::size_t head_ = 0;
};

struct CalibrationSample {
    MastReading reading;
    double speed = 0.0;  // m/s
    double angle = 0.0;  // rad, body-frame azimuth
};

struct CalibrationGrid {
    double speed_min = 0.0;
    double speed_max = 6.0;
    int n_speeds = 31;
    int n_angles = 72;
    int replicates = 3;      // noisy copies per grid point (1 when noiseless)
    bool with_noise = true;
};

std::vector<CalibrationSample> synth_calibration(const MastParams& p, const CalibrationGrid& g,
                                                 Rng& rng);

struct InverseTrainOptions {
    std::vector<int> angle_hidden{64, 64};
    std::vector<int> speed_hidden{32};
    double lr = 1e-3;
    int epochs = 1200;
    int batch_size = 256;
    double holdout_fraction = 0.2;
    double angle_eval_min_speed = 1.3;  // m/s; direction is unidentifiable near zero flow
    std::uint64_t seed = 0;
};

struct SensorErrorReport {
    double mean_angle_deg = 0.0;
    double p95_angle_deg = 0.0;
    double mean_speed = 0.0;
    double p95_speed = 0.0;
    int n_holdout = 0;
};

/// Trained inverse models: voltages -> (sin, cos) of azimuth and
/// voltages -> speed. Input normalization is baked into the first layer
/// so the flat network files are self-contained.
class SensorEstimator {
public:
    SensorEstimator() = default;
    SensorEstimator(Mlp<double> angle_net, Mlp<double> speed_net);

    bool trained() const { return trained_; }
    WindEstimate estimate(const MastReading& reading) const;

    void save(const std::string& angle_path, const std::string& speed_path) const;
    static SensorEstimator load(const std::string& angle_path, const std::string& speed_path);

    const Mlp<double>& angle_net() const { return angle_net_; }
    const Mlp<double>& speed_net() const { return speed_net_; }

private:
    Mlp<double> angle_net_;
    Mlp<double> speed_net_;
    bool trained_ = false;
};

struct InverseTrainResult {
    SensorEstimator estimator;
    SensorErrorReport holdout;
};

/// Fits the two inverse networks on a calibration set. Requires at least
/// 8 distinct angles and speed coverage reaching both 1.3 and 5.0 m/s.
InverseTrainResult train_inverse_models(std::span<const CalibrationSample> calibration,
                                        const InverseTrainOptions& opts);

/// Convenience wrapper mirroring the on-vehicle pipeline: body-frame
/// estimate from the inverse nets, azimuth rotated into the world frame
/// by the vehicle yaw.
WindEstimate estimate_wind_world(const SensorEstimator& est, const MastReading& reading,
                                 double yaw);

}  // namespace gustsim
