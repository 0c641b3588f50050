#include "hutk/common.hpp"

namespace hutk {

const char* error_code_name(ErrorCode code) {
    switch (code) {
        case ErrorCode::NotFound: return "NotFound";
        case ErrorCode::IoError: return "IoError";
        case ErrorCode::MalformedWav: return "MalformedWav";
        case ErrorCode::UnsupportedSampleRate: return "UnsupportedSampleRate";
        case ErrorCode::UnsupportedFormat: return "UnsupportedFormat";
        case ErrorCode::DegenerateData: return "DegenerateData";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::TooShort: return "TooShort";
        case ErrorCode::EmptyOutput: return "EmptyOutput";
        case ErrorCode::SequenceTooLong: return "SequenceTooLong";
        case ErrorCode::LayerOutOfRange: return "LayerOutOfRange";
        case ErrorCode::EmptyMaskSet: return "EmptyMaskSet";
        case ErrorCode::TargetOutOfRange: return "TargetOutOfRange";
        case ErrorCode::InfeasibleAlignment: return "InfeasibleAlignment";
        case ErrorCode::InstanceTooLarge: return "InstanceTooLarge";
        case ErrorCode::UnmappableCharacter: return "UnmappableCharacter";
        case ErrorCode::MissingTranscript: return "MissingTranscript";
        case ErrorCode::DuplicateId: return "DuplicateId";
        case ErrorCode::MalformedRow: return "MalformedRow";
        case ErrorCode::MissingFile: return "MissingFile";
        case ErrorCode::MissingLabels: return "MissingLabels";
        case ErrorCode::VersionMismatch: return "VersionMismatch";
        case ErrorCode::Malformed: return "Malformed";
        case ErrorCode::NonFinite: return "NonFinite";
        case ErrorCode::EmptyReference: return "EmptyReference";
        case ErrorCode::BadConfig: return "BadConfig";
    }
    return "Unknown";
}

}  // namespace hutk
