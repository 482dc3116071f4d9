#pragma once

#include <stdexcept>
#include <string>

namespace bosc {

enum class Errc {
    invalid_shape,
    invalid_label,
    invalid_config,
    invalid_argument,
    io_error,
    format_error,
    eval_error,
    numeric_error,
};

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& msg) : std::runtime_error(msg), code_(code) {}
    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& msg) { throw Error(code, msg); }

// Label convention used throughout: in-set classes are 1..N, the backdoor
// class is N+1, and 0 marks both out-of-set ground truth and the reject
// decision.
inline constexpr int kOutOfSet = 0;
inline constexpr int kReject = 0;

}  // namespace bosc
