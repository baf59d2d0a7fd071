#pragma once

#include <stdexcept>
#include <string>

namespace rgbdvos {

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct ShapeError : Error {
    explicit ShapeError(const std::string& msg) : Error("shape error: " + msg) {}
};

struct IngestError : Error {
    int frame_index;
    IngestError(int frame, const std::string& msg)
        : Error("ingest error at frame " + std::to_string(frame) + ": " + msg),
          frame_index(frame) {}
};

struct AnnotationError : Error {
    explicit AnnotationError(const std::string& msg) : Error("annotation error: " + msg) {}
};

struct EmptyMaskError : Error {
    EmptyMaskError() : Error("operation requires a non-empty mask") {}
};

struct EmptyMemoryError : Error {
    EmptyMemoryError() : Error("readout from empty memory") {}
};

struct EmptyHistoryError : Error {
    EmptyHistoryError() : Error("operation requires a non-empty object history") {}
};

struct EmptyRegionError : Error {
    EmptyRegionError() : Error("entropy of an empty region") {}
};

struct CropError : Error {
    explicit CropError(const std::string& msg) : Error("crop error: " + msg) {}
};

struct RefinerError : Error {
    explicit RefinerError(const std::string& msg) : Error("refiner error: " + msg) {}
};

struct TrainingDivergedError : Error {
    int step;
    explicit TrainingDivergedError(int at_step)
        : Error("training diverged (non-finite loss) at step " + std::to_string(at_step)),
          step(at_step) {}
};

struct EvalError : Error {
    int frame_index;
    EvalError(int frame, const std::string& msg)
        : Error("evaluation error at frame " + std::to_string(frame) + ": " + msg),
          frame_index(frame) {}
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error("config error: " + msg) {}
};

struct IoError : Error {
    explicit IoError(const std::string& msg) : Error("io error: " + msg) {}
};

}  // namespace rgbdvos
