#include "pmlog/status.h"

namespace pmlog {

std::string_view StatusCodeName(StatusCode code) {
  switch (code) {
    case StatusCode::kOk: return "OK";
    case StatusCode::kInvalidArgument: return "InvalidArgument";
    case StatusCode::kOutOfRange: return "OutOfRange";
    case StatusCode::kLogFull: return "LogFull";
    case StatusCode::kWrongState: return "WrongState";
    case StatusCode::kTimeout: return "Timeout";
    case StatusCode::kFenced: return "Fenced";
    case StatusCode::kClosed: return "Closed";
    case StatusCode::kQuorumFailure: return "QuorumFailure";
    case StatusCode::kRecoveryFailure: return "RecoveryFailure";
    case StatusCode::kUnrecoverable: return "Unrecoverable";
    case StatusCode::kHeaderInvalid: return "HeaderInvalid";
    case StatusCode::kDataInvalid: return "DataInvalid";
    case StatusCode::kCorruption: return "Corruption";
    case StatusCode::kBadMagic: return "BadMagic";
    case StatusCode::kStaleEpoch: return "StaleEpoch";
    case StatusCode::kIoError: return "IoError";
    case StatusCode::kCrashed: return "Crashed";
  }
  return "Unknown";
}

std::string Status::ToString() const {
  std::string s(StatusCodeName(code_));
  if (!msg_.empty()) {
    s += ": ";
    s += msg_;
  }
  return s;
}

}  // namespace pmlog
