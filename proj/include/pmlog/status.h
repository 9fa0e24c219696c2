#pragma once

#include <cassert>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <variant>

namespace pmlog {

enum class StatusCode : uint8_t {
  kOk = 0,
  kInvalidArgument,
  kOutOfRange,
  kLogFull,
  kWrongState,
  kTimeout,
  kFenced,
  kClosed,
  kQuorumFailure,
  kRecoveryFailure,
  kUnrecoverable,
  kHeaderInvalid,
  kDataInvalid,
  kCorruption,
  kBadMagic,
  kStaleEpoch,
  kIoError,
  kCrashed,
};

std::string_view StatusCodeName(StatusCode code);

// Error model follows the RocksDB/Kudu convention: functions that can fail
// return a Status (or Result<T>) instead of throwing.
class [[nodiscard]] Status {
 public:
  Status() = default;
  Status(StatusCode code, std::string msg) : code_(code), msg_(std::move(msg)) {}

  static Status OK() { return {}; }
  static Status InvalidArgument(std::string m) { return {StatusCode::kInvalidArgument, std::move(m)}; }
  static Status OutOfRange(std::string m) { return {StatusCode::kOutOfRange, std::move(m)}; }
  static Status LogFull(std::string m) { return {StatusCode::kLogFull, std::move(m)}; }
  static Status WrongState(std::string m) { return {StatusCode::kWrongState, std::move(m)}; }
  static Status Timeout(std::string m) { return {StatusCode::kTimeout, std::move(m)}; }
  static Status Fenced(std::string m) { return {StatusCode::kFenced, std::move(m)}; }
  static Status Closed(std::string m) { return {StatusCode::kClosed, std::move(m)}; }
  static Status QuorumFailure(std::string m) { return {StatusCode::kQuorumFailure, std::move(m)}; }
  static Status RecoveryFailure(std::string m) { return {StatusCode::kRecoveryFailure, std::move(m)}; }
  static Status Unrecoverable(std::string m) { return {StatusCode::kUnrecoverable, std::move(m)}; }
  static Status HeaderInvalid(std::string m) { return {StatusCode::kHeaderInvalid, std::move(m)}; }
  static Status DataInvalid(std::string m) { return {StatusCode::kDataInvalid, std::move(m)}; }
  static Status Corruption(std::string m) { return {StatusCode::kCorruption, std::move(m)}; }
  static Status BadMagic(std::string m) { return {StatusCode::kBadMagic, std::move(m)}; }
  static Status StaleEpoch(std::string m) { return {StatusCode::kStaleEpoch, std::move(m)}; }
  static Status IoError(std::string m) { return {StatusCode::kIoError, std::move(m)}; }
  static Status Crashed(std::string m) { return {StatusCode::kCrashed, std::move(m)}; }

  bool ok() const { return code_ == StatusCode::kOk; }
  StatusCode code() const { return code_; }
  const std::string& message() const { return msg_; }
  std::string ToString() const;

  bool operator==(StatusCode c) const { return code_ == c; }

 private:
  StatusCode code_ = StatusCode::kOk;
  std::string msg_;
};

template <typename T>
class [[nodiscard]] Result {
 public:
  Result(T value) : v_(std::move(value)) {}  // NOLINT(google-explicit-constructor)
  Result(Status status) : v_(std::move(status)) {  // NOLINT(google-explicit-constructor)
    assert(!std::get<Status>(v_).ok());
  }

  bool ok() const { return std::holds_alternative<T>(v_); }
  Status status() const { return ok() ? Status::OK() : std::get<Status>(v_); }

  T& value() & { return std::get<T>(v_); }
  const T& value() const& { return std::get<T>(v_); }
  T&& value() && { return std::get<T>(std::move(v_)); }

  T* operator->() { return &value(); }
  const T* operator->() const { return &value(); }
  T& operator*() & { return value(); }
  const T& operator*() const& { return value(); }

 private:
  std::variant<T, Status> v_;
};

#define PMLOG_RETURN_IF_ERROR(expr)        \
  do {                                     \
    ::pmlog::Status _st = (expr);          \
    if (!_st.ok()) return _st;             \
  } while (0)

}  // namespace pmlog
