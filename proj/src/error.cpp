#include "cavkit/error.hpp"

namespace cavkit {

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::UnknownConcept: return "UnknownConcept";
    case ErrorCode::UnknownLayer: return "UnknownLayer";
    case ErrorCode::Io: return "Io";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::UnsupportedVersion: return "UnsupportedVersion";
    case ErrorCode::UnsupportedDescriptor: return "UnsupportedDescriptor";
    case ErrorCode::UnsupportedLayout: return "UnsupportedLayout";
    case ErrorCode::MalformedHeader: return "MalformedHeader";
    case ErrorCode::TruncatedData: return "TruncatedData";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::Manifest: return "Manifest";
    case ErrorCode::Alignment: return "AlignmentError";
    case ErrorCode::DuplicateSampleId: return "DuplicateSampleId";
    case ErrorCode::UnknownClass: return "UnknownClass";
    case ErrorCode::MissingFile: return "MissingFile";
    case ErrorCode::NotTrainable: return "NotTrainable";
    case ErrorCode::SplitTooSmall: return "SplitTooSmall";
    case ErrorCode::EmptyClass: return "EmptyClass";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::MissingCavStore: return "MissingCavStore";
    case ErrorCode::Divergence: return "Divergence";
    case ErrorCode::DegenerateProbe: return "DegenerateProbe";
    case ErrorCode::DegenerateSample: return "DegenerateSample";
    }
    return "Unknown";
}

int exit_code_for(ErrorCode code) noexcept {
    switch (code) {
    case ErrorCode::InvalidArgument:
    case ErrorCode::UnknownConcept:
    case ErrorCode::UnknownLayer:
        return 2;
    case ErrorCode::Divergence:
    case ErrorCode::DegenerateProbe:
    case ErrorCode::DegenerateSample:
        return 4;
    default:
        return 3;
    }
}

namespace {

std::string join_violations(const std::vector<std::string>& violations) {
    std::string out = "bundle has " + std::to_string(violations.size()) + " violation(s):";
    for (const auto& v : violations) {
        out += "\n  - ";
        out += v;
    }
    return out;
}

} // namespace

BundleError::BundleError(ErrorCode first, std::vector<std::string> violations)
    : Error(first, join_violations(violations)), violations_(std::move(violations)) {}

} // namespace cavkit
