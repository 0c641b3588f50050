#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace hutk {

// Error codes surfaced by the library. The CLI maps these to diagnostics and
// a nonzero exit status; tests assert on the code.
enum class ErrorCode {
    NotFound,
    IoError,
    MalformedWav,
    UnsupportedSampleRate,
    UnsupportedFormat,
    DegenerateData,
    DimensionMismatch,
    ShapeMismatch,
    TooShort,
    EmptyOutput,
    SequenceTooLong,
    LayerOutOfRange,
    EmptyMaskSet,
    TargetOutOfRange,
    InfeasibleAlignment,
    InstanceTooLarge,
    UnmappableCharacter,
    MissingTranscript,
    DuplicateId,
    MalformedRow,
    MissingFile,
    MissingLabels,
    VersionMismatch,
    Malformed,
    NonFinite,
    EmptyReference,
    BadConfig,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
          code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void raise(ErrorCode code, const std::string& message) {
    throw Error(code, message);
}

inline void require(bool cond, ErrorCode code, const std::string& message) {
    if (!cond) {
        raise(code, message);
    }
}

}  // namespace hutk
