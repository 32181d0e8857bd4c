#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cellokit {

/// Failure categories surfaced by the library. The CLI maps InvalidArgument to
/// exit code 1 (usage error) and every other kind to exit code 2 (data error).
enum class ErrorKind {
    CycleDetected,
    DuplicateEdge,
    SelfLoop,
    MalformedLine,
    UnknownNode,
    NoConvergence,
    MissingSimilarity,
    EmptyCorpus,
    TokenOutOfRange,
    PositionOutOfRange,
    UnknownTypeId,
    LabelOutOfRange,
    SizeMismatch,
    NonFiniteLoss,
    NonFiniteGradient,
    CorruptCheckpoint,
    VersionMismatch,
    DegenerateInput,
    LengthMismatch,
    SingleCluster,
    OneClassOnly,
    ZeroVariance,
    MissingComponent,
    EmptyUnknownSet,
    MissingPPRRow,
    UnseenValLabel,
    MissingMetadata,
    NegativeCount,
    DuplicateCell,
    InvalidArgument,
    Io,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

    ErrorKind kind() const { return kind_; }

private:
    ErrorKind kind_;
};

} // namespace cellokit
