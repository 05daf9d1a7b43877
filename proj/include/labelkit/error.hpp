#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace labelkit {

enum class ErrorCode {
    InvalidArgument,
    Io,
    DecodeError,
    MissingColumn,
    EmptyDataset,
    DuplicateDataset,
    UnknownDataset,
    EmptyQuery,
    DuplicateWorkspace,
    UnknownWorkspace,
    DuplicateCategory,
    UnknownCategory,
    UnknownElement,
    UnknownDocument,
    MalformedRow,
    EmptyCorpus,
    SingleClass,
    TooFewExamples,
    ModelNotReady,
    UnknownModel,
    NoPositives,
    InsufficientData,
    NoModel,
    NoPositivePredictions,
    UnknownSession,
    SessionClosed,
    IncompleteLabels,
    SeedQueryTooSparse,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library carries one of the codes above so the
/// HTTP layer can map it to a status without string matching.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
    throw Error(code, message);
}

} // namespace labelkit
