#pragma once

#include <stdexcept>
#include <string>

namespace gustsim {

/// Invalid configuration (bad ranges, schema violations, unknown keys).
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Non-finite state or command reached the simulator. Episodes that hit
/// this terminate with a failure status.
class SimulationFault : public std::runtime_error {
public:
    explicit SimulationFault(const std::string& what) : std::runtime_error(what) {}
};

/// Non-finite losses/activations or divergence during training.
class TrainingFault : public std::runtime_error {
public:
    explicit TrainingFault(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace gustsim
