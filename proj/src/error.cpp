#include "labelkit/error.hpp"

namespace labelkit {

std::string_view to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Io: return "Io";
    case ErrorCode::DecodeError: return "DecodeError";
    case ErrorCode::MissingColumn: return "MissingColumn";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::DuplicateDataset: return "DuplicateDataset";
    case ErrorCode::UnknownDataset: return "UnknownDataset";
    case ErrorCode::EmptyQuery: return "EmptyQuery";
    case ErrorCode::DuplicateWorkspace: return "DuplicateWorkspace";
    case ErrorCode::UnknownWorkspace: return "UnknownWorkspace";
    case ErrorCode::DuplicateCategory: return "DuplicateCategory";
    case ErrorCode::UnknownCategory: return "UnknownCategory";
    case ErrorCode::UnknownElement: return "UnknownElement";
    case ErrorCode::UnknownDocument: return "UnknownDocument";
    case ErrorCode::MalformedRow: return "MalformedRow";
    case ErrorCode::EmptyCorpus: return "EmptyCorpus";
    case ErrorCode::SingleClass: return "SingleClass";
    case ErrorCode::TooFewExamples: return "TooFewExamples";
    case ErrorCode::ModelNotReady: return "ModelNotReady";
    case ErrorCode::UnknownModel: return "UnknownModel";
    case ErrorCode::NoPositives: return "NoPositives";
    case ErrorCode::InsufficientData: return "InsufficientData";
    case ErrorCode::NoModel: return "NoModel";
    case ErrorCode::NoPositivePredictions: return "NoPositivePredictions";
    case ErrorCode::UnknownSession: return "UnknownSession";
    case ErrorCode::SessionClosed: return "SessionClosed";
    case ErrorCode::IncompleteLabels: return "IncompleteLabels";
    case ErrorCode::SeedQueryTooSparse: return "SeedQueryTooSparse";
    }
    return "Unknown";
}

} // namespace labelkit
