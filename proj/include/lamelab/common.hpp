#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace lamelab {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline constexpr const char* kVersion = "0.3.0";

// Error taxonomy shared by every module. Callers (the CLI in particular) map
// these onto exit codes, so keep the hierarchy flat.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InputError : public Error {
public:
    using Error::Error;
};

class DomainError : public Error {
public:
    using Error::Error;
};

class ResolutionError : public Error {
public:
    using Error::Error;
};

class SolverError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class FitError : public Error {
public:
    using Error::Error;
};

class InvariantError : public Error {
public:
    using Error::Error;
};

inline Vec3 unit(int axis) {
    Vec3 e = Vec3::Zero();
    e[axis] = 1.0;
    return e;
}

}  // namespace lamelab
