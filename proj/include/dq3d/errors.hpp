#pragma once

#include <stdexcept>
#include <string>

namespace dq3d {

struct DimensionMismatch : std::runtime_error {
    explicit DimensionMismatch(const std::string& what) : std::runtime_error("dimension mismatch: " + what) {}
};

struct DepthOutOfRange : std::runtime_error {
    explicit DepthOutOfRange(const std::string& what) : std::runtime_error("depth out of range: " + what) {}
};

struct BehindCamera : std::runtime_error {
    explicit BehindCamera(const std::string& what) : std::runtime_error("point behind camera: " + what) {}
};

struct OutOfFrame : std::runtime_error {
    explicit OutOfFrame(const std::string& what) : std::runtime_error("pixel out of frame: " + what) {}
};

struct DegenerateBox : std::runtime_error {
    explicit DegenerateBox(const std::string& what) : std::runtime_error("degenerate box: " + what) {}
};

struct InfeasibleShape : std::runtime_error {
    explicit InfeasibleShape(const std::string& what) : std::runtime_error("infeasible shape: " + what) {}
};

struct PlacementFailure : std::runtime_error {
    explicit PlacementFailure(const std::string& what) : std::runtime_error("placement failure: " + what) {}
};

// Raised for bad or missing configuration keys; carries the offending key name.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& key, const std::string& what)
        : std::runtime_error("config error at '" + key + "': " + what), key_name(key) {}
    std::string key_name;
};

struct FileError : std::runtime_error {
    explicit FileError(const std::string& what) : std::runtime_error("file error: " + what) {}
};

struct SchemaError : std::runtime_error {
    explicit SchemaError(const std::string& what) : std::runtime_error("schema error: " + what) {}
};

}  // namespace dq3d
