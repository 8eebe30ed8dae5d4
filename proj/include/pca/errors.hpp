#pragma once

#include <stdexcept>
#include <string>

namespace pca {

/// Configuration rejected at load or override time.
class ConfigError : public std::runtime_error {
public:
    enum class Kind { MissingKey, NonPositiveCoefficient, NegativeSchedule, BadValue };

    ConfigError(Kind kind, const std::string& msg)
        : std::runtime_error(msg), kind_(kind) {}

    Kind kind() const { return kind_; }

    static ConfigError missing_key(const std::string& key) {
        return {Kind::MissingKey, "MissingKey: " + key};
    }
    static ConfigError non_positive(const std::string& coefficient) {
        return {Kind::NonPositiveCoefficient, "NonPositiveCoefficient: " + coefficient};
    }
    static ConfigError negative_schedule(const std::string& detail) {
        return {Kind::NegativeSchedule, "NegativeSchedule: " + detail};
    }
    static ConfigError bad_value(const std::string& detail) {
        return {Kind::BadValue, "BadValue: " + detail};
    }

private:
    Kind kind_;
};

class BcMismatch : public std::logic_error {
public:
    explicit BcMismatch(const std::string& msg) : std::logic_error("BcMismatch: " + msg) {}
};

class ShapeMismatch : public std::logic_error {
public:
    explicit ShapeMismatch(const std::string& msg) : std::logic_error("ShapeMismatch: " + msg) {}
};

class SolverDivergence : public std::runtime_error {
public:
    explicit SolverDivergence(const std::string& msg)
        : std::runtime_error("SolverDivergence: " + msg) {}
};

class NoConvergence : public std::runtime_error {
public:
    explicit NoConvergence(const std::string& msg)
        : std::runtime_error("NoConvergence: " + msg) {}
};

class CflViolation : public std::runtime_error {
public:
    CflViolation(double dt, double dt_max)
        : std::runtime_error("CflViolation: dt " + std::to_string(dt) +
                             " exceeds dt_max " + std::to_string(dt_max)) {}
};

class InvalidInitialState : public std::runtime_error {
public:
    explicit InvalidInitialState(const std::string& msg)
        : std::runtime_error("InvalidInitialState: " + msg) {}
};

/// Decay-rate condition on the coefficients does not hold; carries the margin.
class ConditionNotMet : public std::runtime_error {
public:
    explicit ConditionNotMet(double margin)
        : std::runtime_error("ConditionNotMet: margin " + std::to_string(margin)),
          margin_(margin) {}
    double margin() const { return margin_; }

private:
    double margin_;
};

class WindowTooShort : public std::runtime_error {
public:
    explicit WindowTooShort(const std::string& msg)
        : std::runtime_error("WindowTooShort: " + msg) {}
};

class SeriesUnderflow : public std::runtime_error {
public:
    explicit SeriesUnderflow(const std::string& msg)
        : std::runtime_error("SeriesUnderflow: " + msg) {}
};

class RunTooShort : public std::runtime_error {
public:
    explicit RunTooShort(const std::string& msg)
        : std::runtime_error("RunTooShort: " + msg) {}
};

}  // namespace pca
