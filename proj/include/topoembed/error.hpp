#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace topoembed {

/// Broad classification used by the command line to pick an exit code.
enum class ErrorKind {
    data,   // malformed or unreadable input, I/O failure
    usage,  // invalid arguments or parameter ranges
};

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what, ErrorKind kind = ErrorKind::data)
        : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

#define TOPOEMBED_DEFINE_ERROR(Name, Kind)                                  \
    class Name : public Error {                                             \
    public:                                                                 \
        explicit Name(const std::string& what) : Error(#Name ": " + what, Kind) {} \
    };

// ingest
TOPOEMBED_DEFINE_ERROR(BadMagic, ErrorKind::data)
TOPOEMBED_DEFINE_ERROR(CountMismatch, ErrorKind::data)
TOPOEMBED_DEFINE_ERROR(TruncatedFile, ErrorKind::data)
TOPOEMBED_DEFINE_ERROR(UnparsableName, ErrorKind::data)
TOPOEMBED_DEFINE_ERROR(NonGrayscaleImage, ErrorKind::data)
TOPOEMBED_DEFINE_ERROR(InsufficientClassMembers, ErrorKind::data)
// filtration
TOPOEMBED_DEFINE_ERROR(GridTooSmall, ErrorKind::data)
TOPOEMBED_DEFINE_ERROR(DimensionMismatch, ErrorKind::data)
// vectorize / analysis
TOPOEMBED_DEFINE_ERROR(DegenerateScale, ErrorKind::data)
TOPOEMBED_DEFINE_ERROR(ResolutionMismatch, ErrorKind::data)
TOPOEMBED_DEFINE_ERROR(EigenFailure, ErrorKind::data)
TOPOEMBED_DEFINE_ERROR(PerplexityTooLarge, ErrorKind::usage)
// project store
TOPOEMBED_DEFINE_ERROR(ChecksumMismatch, ErrorKind::data)
TOPOEMBED_DEFINE_ERROR(MissingArtifact, ErrorKind::data)
TOPOEMBED_DEFINE_ERROR(VersionMismatch, ErrorKind::data)
TOPOEMBED_DEFINE_ERROR(IoError, ErrorKind::data)
// parameters
TOPOEMBED_DEFINE_ERROR(InvalidArgument, ErrorKind::usage)

#undef TOPOEMBED_DEFINE_ERROR

}  // namespace topoembed
