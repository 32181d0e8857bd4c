#include "cellokit/error.hpp"

namespace cellokit {

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::CycleDetected: return "CycleDetected";
    case ErrorKind::DuplicateEdge: return "DuplicateEdge";
    case ErrorKind::SelfLoop: return "SelfLoop";
    case ErrorKind::MalformedLine: return "MalformedLine";
    case ErrorKind::UnknownNode: return "UnknownNode";
    case ErrorKind::NoConvergence: return "NoConvergence";
    case ErrorKind::MissingSimilarity: return "MissingSimilarity";
    case ErrorKind::EmptyCorpus: return "EmptyCorpus";
    case ErrorKind::TokenOutOfRange: return "TokenOutOfRange";
    case ErrorKind::PositionOutOfRange: return "PositionOutOfRange";
    case ErrorKind::UnknownTypeId: return "UnknownTypeId";
    case ErrorKind::LabelOutOfRange: return "LabelOutOfRange";
    case ErrorKind::SizeMismatch: return "SizeMismatch";
    case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorKind::CorruptCheckpoint: return "CorruptCheckpoint";
    case ErrorKind::VersionMismatch: return "VersionMismatch";
    case ErrorKind::DegenerateInput: return "DegenerateInput";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::SingleCluster: return "SingleCluster";
    case ErrorKind::OneClassOnly: return "OneClassOnly";
    case ErrorKind::ZeroVariance: return "ZeroVariance";
    case ErrorKind::MissingComponent: return "MissingComponent";
    case ErrorKind::EmptyUnknownSet: return "EmptyUnknownSet";
    case ErrorKind::MissingPPRRow: return "MissingPPRRow";
    case ErrorKind::UnseenValLabel: return "UnseenValLabel";
    case ErrorKind::MissingMetadata: return "MissingMetadata";
    case ErrorKind::NegativeCount: return "NegativeCount";
    case ErrorKind::DuplicateCell: return "DuplicateCell";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::Io: return "Io";
    }
    return "Unknown";
}

} // namespace cellokit
