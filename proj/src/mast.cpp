#include "gustsim/mast.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "gustsim/errors.hpp"

namespace gustsim {

void SensorChannelModel::validate() const {
    if (!(kings_n > 0.0 && kings_n <= 1.0))
        throw ConfigError("sensor channel: kings_n must be in (0, 1]");
    if (!(time_constant > 0.0)) throw ConfigError("sensor channel: time_constant must be > 0");
    if (!(kings_a >= 0.0 && kings_b >= 0.0 && noise_std >= 0.0))
        throw ConfigError("sensor channel: negative coefficient");
}

MastParams MastParams::pentagon() {
    MastParams p;
    for (int k = 0; k < 5; ++k) p.channels[k].azimuth_offset = 2.0 * kPi * k / 5.0;
    return p;
}

void MastParams::validate() const {
    for (const auto& c : channels) c.validate();
    if (!(gain_floor > 0.0 && gain_floor <= 1.0))
        throw ConfigError("mast: gain_floor must be in (0, 1]");
    if (!(bridge_min < bridge_max)) throw ConfigError("mast: bridge range must be non-empty");
}

double channel_gain(double delta_azimuth, double gain_floor) {
    return std::max(std::cos(delta_azimuth), gain_floor);
}

MastReading mast_steady_reading(const MastParams& p, const Vec3& wind_rel_body) {
    const double speed = std::hypot(wind_rel_body.x, wind_rel_body.y);
    const double azimuth = (speed > 0.0) ? std::atan2(wind_rel_body.y, wind_rel_body.x) : 0.0;
    MastReading r;
    for (int k = 0; k < 5; ++k) {
        const auto& ch = p.channels[k];
        double u_eff = speed * channel_gain(azimuth - ch.azimuth_offset, p.gain_floor);
        double e2 = ch.kings_a + ch.kings_b * std::pow(u_eff, ch.kings_n);
        r.bridge_voltages[k] = std::sqrt(e2);
    }
    return r;
}

MastReading forward_mast(const MastParams& p, const Vec3& wind_rel_body,
                         const std::optional<MastReading>& prev, double dt, Rng& rng) {
    if (!(dt > 0.0)) throw ConfigError("forward_mast: dt must be > 0");
    MastReading steady = mast_steady_reading(p, wind_rel_body);
    MastReading out;
    for (int k = 0; k < 5; ++k) {
        const auto& ch = p.channels[k];
        double v;
        if (prev) {
            double alpha = 1.0 - std::exp(-dt / ch.time_constant);
            v = prev->bridge_voltages[k] +
                alpha * (steady.bridge_voltages[k] - prev->bridge_voltages[k]);
        } else {
            v = steady.bridge_voltages[k];
        }
        if (ch.noise_std > 0.0) v += ch.noise_std * rng.normal();
        out.bridge_voltages[k] = std::clamp(v, p.bridge_min, p.bridge_max);
    }
    out.t = (prev ? prev->t : 0.0) + dt;
    return out;
}

RollingMax::RollingMax(double window) : window_(window) {
    if (!(window > 0.0)) throw ConfigError("rolling max: window must be > 0");
}

void RollingMax::push(double t, double value) {
    while (!buf_.empty() && buf_.back().second <= value) buf_.pop_back();
    buf_.emplace_back(t, value);
    double cutoff = t - window_;
    while (buf_.size() > 1 && buf_.front().first <= cutoff) buf_.pop_front();
}

double RollingMax::max() const {
    if (buf_.empty()) throw ConfigError("rolling max: empty history");
    return buf_.front().second;
}

double rolling_max_filter(std::span<const std::pair<double, double>> history, double window) {
    if (history.empty()) throw ConfigError("rolling_max_filter: empty history");
    if (!(window > 0.0)) throw ConfigError("rolling_max_filter: window must be > 0");
    const double t_now = history.back().first;
    double best = history.back().second;
    for (const auto& [t, v] : history)
        if (t > t_now - window && t <= t_now) best = std::max(best, v);
    return best;
}

WindHistoryBuffer::WindHistoryBuffer(int skip, int taps) : skip_(skip), taps_(taps) {
    if (skip < 1 || taps < 1) throw ConfigError("wind history: skip and taps must be >= 1");
}

void WindHistoryBuffer::push(double value) {
    const std::size_t cap = static_cast<std::size_t>((taps_ - 1) * skip_ + 1);
    if (values_.empty()) {
        values_.assign(cap, value);
        head_ = 0;
        return;
    }
    head_ = (head_ + 1) % cap;
    values_[head_] = value;
}

std::array<double, 5> WindHistoryBuffer::taps() const {
    if (values_.empty()) throw ConfigError("wind history: no samples pushed");
    std::array<double, 5> out{};
    const std::size_t cap = values_.size();
    for (int i = 0; i < taps_ && i < 5; ++i) {
        std::size_t back = static_cast<std::size_t>(i * skip_) % cap;
        out[static_cast<std::size_t>(i)] = values_[(head_ + cap - back) % cap];
    }
    return out;
}

std::vector<CalibrationSample> synth_calibration(const MastParams& p, const CalibrationGrid& g,
                                                 Rng& rng) {
    if (g.n_speeds < 2 || g.n_angles < 2 || g.replicates < 1)
        throw ConfigError("calibration grid: need >= 2 speeds, >= 2 angles, >= 1 replicate");
    MastParams noiseless = p;
    for (auto& ch : noiseless.channels) ch.noise_std = 0.0;

    std::vector<CalibrationSample> out;
    out.reserve(static_cast<std::size_t>(g.n_speeds * g.n_angles * g.replicates));
    for (int si = 0; si < g.n_speeds; ++si) {
        double speed = g.speed_min + (g.speed_max - g.speed_min) * si / (g.n_speeds - 1);
        for (int ai = 0; ai < g.n_angles; ++ai) {
            double angle = -kPi + 2.0 * kPi * ai / g.n_angles;
            Vec3 wind{speed * std::cos(angle), speed * std::sin(angle), 0.0};
            MastReading steady = mast_steady_reading(p, wind);
            for (int rep = 0; rep < g.replicates; ++rep) {
                CalibrationSample s;
                s.reading = steady;
                if (g.with_noise) {
                    for (int k = 0; k < 5; ++k)
                        s.reading.bridge_voltages[k] = std::clamp(
                            steady.bridge_voltages[k] + p.channels[k].noise_std * rng.normal(),
                            p.bridge_min, p.bridge_max);
                }
                s.speed = speed;
                s.angle = angle;
                out.push_back(s);
            }
        }
    }
    return out;
}

SensorEstimator::SensorEstimator(Mlp<double> angle_net, Mlp<double> speed_net)
    : angle_net_(std::move(angle_net)), speed_net_(std::move(speed_net)), trained_(true) {}

WindEstimate SensorEstimator::estimate(const MastReading& reading) const {
    if (!trained_) throw ConfigError("sensor estimator: networks not trained");
    Eigen::MatrixXd x(5, 1);
    for (int k = 0; k < 5; ++k) x(k, 0) = reading.bridge_voltages[k];
    Eigen::MatrixXd sc = angle_net_.forward(x);
    Eigen::MatrixXd sp = speed_net_.forward(x);
    WindEstimate e;
    e.direction = std::atan2(sc(0, 0), sc(1, 0));
    e.speed = std::max(0.0, sp(0, 0));
    e.t = reading.t;
    return e;
}

void SensorEstimator::save(const std::string& angle_path, const std::string& speed_path) const {
    if (!trained_) throw ConfigError("sensor estimator: nothing to save");
    angle_net_.save(angle_path);
    speed_net_.save(speed_path);
}

SensorEstimator SensorEstimator::load(const std::string& angle_path,
                                      const std::string& speed_path) {
    SensorEstimator est(Mlp<double>::load(angle_path), Mlp<double>::load(speed_path));
    if (est.angle_net_.input_dim() != 5 || est.angle_net_.output_dim() != 2)
        throw ConfigError(angle_path + ": expected a 5-input, 2-output angle network, found " +
                          std::to_string(est.angle_net_.input_dim()) + " -> " +
                          std::to_string(est.angle_net_.output_dim()));
    if (est.speed_net_.input_dim() != 5 || est.speed_net_.output_dim() != 1)
        throw ConfigError(speed_path + ": expected a 5-input, 1-output speed network, found " +
                          std::to_string(est.speed_net_.input_dim()) + " -> " +
                          std::to_string(est.speed_net_.output_dim()));
    return est;
}

namespace {

// Fits `net` (already shaped, first layer reserved for input normalization)
// on columns of x -> y with Adam and a step lr decay.
void fit(Mlp<double>& net, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
         const InverseTrainOptions& opts, Rng& rng) {
    Adam<double> adam(net, opts.lr);
    const Eigen::Index n = x.cols();
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;

    typename Mlp<double>::Workspace ws;
    auto grads = net.make_grads();
    for (int epoch = 0; epoch < opts.epochs; ++epoch) {
        if (epoch == opts.epochs * 7 / 10) adam.set_lr(opts.lr * 0.1);
        // Fisher-Yates with the deterministic stream.
        for (std::size_t i = order.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(rng.uniform_int(i));
            std::swap(order[i - 1], order[j]);
        }
        for (Eigen::Index start = 0; start < n; start += opts.batch_size) {
            Eigen::Index b = std::min<Eigen::Index>(opts.batch_size, n - start);
            Eigen::MatrixXd xb(x.rows(), b), yb(y.rows(), b);
            for (Eigen::Index i = 0; i < b; ++i) {
                xb.col(i) = x.col(order[static_cast<std::size_t>(start + i)]);
                yb.col(i) = y.col(order[static_cast<std::size_t>(start + i)]);
            }
            const auto& out = net.forward(xb, ws);
            Eigen::MatrixXd dy = (out - yb) / static_cast<double>(b);
            grads.zero();
            net.backward(ws, dy, &grads);
            adam.step(net, grads);
        }
    }
}

// Affine input layer mapping each voltage to roughly [-1, 1].
void set_normalizing_first_layer(Mlp<double>& net, const Eigen::MatrixXd& x) {
    Eigen::VectorXd lo = x.rowwise().minCoeff();
    Eigen::VectorXd hi = x.rowwise().maxCoeff();
    auto& l0 = net.layers()[0];
    l0.w.setZero();
    for (Eigen::Index k = 0; k < x.rows(); ++k) {
        double span = std::max(hi(k) - lo(k), 1e-6);
        l0.w(k, k) = 2.0 / span;
        l0.b(k) = -(hi(k) + lo(k)) / span;
    }
    l0.act = Activation::linear;
}

double percentile(std::vector<double> v, double p) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    double idx = p * (static_cast<double>(v.size()) - 1.0);
    std::size_t lo = static_cast<std::size_t>(idx);
    std::size_t hi = std::min(lo + 1, v.size() - 1);
    double frac = idx - static_cast<double>(lo);
    return v[lo] * (1.0 - frac) + v[hi] * frac;
}

}  // namespace

InverseTrainResult train_inverse_models(std::span<const CalibrationSample> calibration,
                                        const InverseTrainOptions& opts) {
    if (calibration.empty()) throw ConfigError("train_inverse_models: empty calibration set");

    std::set<long> distinct_angles;
    double smin = calibration.front().speed, smax = smin;
    for (const auto& s : calibration) {
        distinct_angles.insert(std::lround(s.angle * 1e6));
        smin = std::min(smin, s.speed);
        smax = std::max(smax, s.speed);
    }
    if (distinct_angles.size() < 8)
        throw ConfigError("train_inverse_models: insufficient angular coverage (" +
                          std::to_string(distinct_angles.size()) + " distinct angles, need 8)");
    if (smin > 1.3 || smax < 5.0)
        throw ConfigError("train_inverse_models: calibration speeds must span 1.3-5.0 m/s");

    const Eigen::Index n = static_cast<Eigen::Index>(calibration.size());
    Eigen::MatrixXd x(5, n);
    Eigen::MatrixXd y_angle(2, n);
    Eigen::MatrixXd y_speed(1, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& s = calibration[static_cast<std::size_t>(i)];
        for (int k = 0; k < 5; ++k) x(k, i) = s.reading.bridge_voltages[k];
        y_angle(0, i) = std::sin(s.angle);
        y_angle(1, i) = std::cos(s.angle);
        y_speed(0, i) = s.speed;
    }

    // Deterministic holdout: every k-th sample.
    const int holdout_stride = std::max(2, static_cast<int>(std::lround(1.0 / opts.holdout_fraction)));
    std::vector<Eigen::Index> train_idx, test_idx;
    for (Eigen::Index i = 0; i < n; ++i)
        (i % holdout_stride == holdout_stride - 1 ? test_idx : train_idx).push_back(i);

    auto take = [](const Eigen::MatrixXd& m, const std::vector<Eigen::Index>& idx) {
        Eigen::MatrixXd out(m.rows(), static_cast<Eigen::Index>(idx.size()));
        for (std::size_t i = 0; i < idx.size(); ++i) out.col(static_cast<Eigen::Index>(i)) = m.col(idx[i]);
        return out;
    };
    Eigen::MatrixXd x_tr = take(x, train_idx), x_te = take(x, test_idx);
    Eigen::MatrixXd ya_tr = take(y_angle, train_idx);
    Eigen::MatrixXd ys_tr = take(y_speed, train_idx);

    // Angle samples below the identifiability threshold carry no directional
    // information; exclude them from the angle fit and evaluation.
    std::vector<Eigen::Index> ang_tr_cols, ang_te_cols;
    for (std::size_t i = 0; i < train_idx.size(); ++i)
        if (calibration[static_cast<std::size_t>(train_idx[i])].speed >= opts.angle_eval_min_speed)
            ang_tr_cols.push_back(static_cast<Eigen::Index>(i));
    for (std::size_t i = 0; i < test_idx.size(); ++i)
        if (calibration[static_cast<std::size_t>(test_idx[i])].speed >= opts.angle_eval_min_speed)
            ang_te_cols.push_back(static_cast<Eigen::Index>(i));
    Eigen::MatrixXd xa_tr = take(x_tr, ang_tr_cols), ya_trf = take(ya_tr, ang_tr_cols);

    Rng rng(derive_seed(opts.seed, "sensor-inverse"));

    std::vector<int> adims{5, 5};
    for (int h : opts.angle_hidden) adims.push_back(h);
    adims.push_back(2);
    Mlp<double> angle_net(adims, Activation::relu, Activation::linear);
    angle_net.init_random(rng);
    set_normalizing_first_layer(angle_net, x_tr);

    std::vector<int> sdims{5, 5};
    for (int h : opts.speed_hidden) sdims.push_back(h);
    sdims.push_back(1);
    Mlp<double> speed_net(sdims, Activation::tanh, Activation::linear);
    speed_net.init_random(rng);
    set_normalizing_first_layer(speed_net, x_tr);

    fit(angle_net, xa_tr, ya_trf, opts, rng);
    fit(speed_net, x_tr, ys_tr, opts, rng);

    InverseTrainResult result;
    result.estimator = SensorEstimator(std::move(angle_net), std::move(speed_net));

    std::vector<double> angle_errs, speed_errs;
    for (std::size_t i = 0; i < test_idx.size(); ++i) {
        const auto& s = calibration[static_cast<std::size_t>(test_idx[i])];
        MastReading r;
        for (int k = 0; k < 5; ++k) r.bridge_voltages[k] = x_te(k, static_cast<Eigen::Index>(i));
        WindEstimate e = result.estimator.estimate(r);
        speed_errs.push_back(std::abs(e.speed - s.speed));
        if (s.speed >= opts.angle_eval_min_speed)
            angle_errs.push_back(std::abs(wrap_angle(e.direction - s.angle)) * 180.0 / kPi);
    }
    SensorErrorReport rep;
    rep.n_holdout = static_cast<int>(test_idx.size());
    if (!angle_errs.empty()) {
        double sum = 0.0;
        for (double v : angle_errs) sum += v;
        rep.mean_angle_deg = sum / static_cast<double>(angle_errs.size());
        rep.p95_angle_deg = percentile(angle_errs, 0.95);
    }
    if (!speed_errs.empty()) {
        double sum = 0.0;
        for (double v : speed_errs) sum += v;
        rep.mean_speed = sum / static_cast<double>(speed_errs.size());
        rep.p95_speed = percentile(speed_errs, 0.95);
    }
    result.holdout = rep;
    return result;
}

WindEstimate estimate_wind_world(const SensorEstimator& est, const MastReading& reading,
                                 double yaw) {
    WindEstimate e = est.estimate(reading);
    e.direction = wrap_angle(e.direction + yaw);
    return e;
}

}  // namespace gustsim
