#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cavkit {

enum class ErrorCode {
    // configuration / usage
    InvalidArgument,
    UnknownConcept,
    UnknownLayer,
    // data and contract violations
    Io,
    BadMagic,
    UnsupportedVersion,
    UnsupportedDescriptor,
    UnsupportedLayout,
    MalformedHeader,
    TruncatedData,
    ShapeMismatch,
    NonFinite,
    Manifest,
    Alignment,
    DuplicateSampleId,
    UnknownClass,
    MissingFile,
    NotTrainable,
    SplitTooSmall,
    EmptyClass,
    DimensionMismatch,
    MissingCavStore,
    // numeric failures
    Divergence,
    DegenerateProbe,
    DegenerateSample,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Process exit status for an error: 2 config, 3 data/contract, 4 numeric.
int exit_code_for(ErrorCode code) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

/// Raised by load_bundle with every violation found, not only the first.
class BundleError : public Error {
public:
    BundleError(ErrorCode first, std::vector<std::string> violations);

    const std::vector<std::string>& violations() const noexcept { return violations_; }

private:
    std::vector<std::string> violations_;
};

} // namespace cavkit
