#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace mcrc {

enum class ErrorCode {
    parse,        // malformed input file or model output
    integrity,    // cross-reference violations inside a corpus
    config,       // bad configuration or missing script entry
    usage,        // bad command line
    transient,    // backend transport failure after retries
    permanent,    // backend rejected the request (4xx)
    exhaustion,   // generation retries used up
    validation,   // submitted data incomplete or out of range
    stage_order,  // annotation stage requested out of order
    conflict,     // resubmission of a completed stage
    not_found,
    unauthorized,
    export_error,
    invalid_argument,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

class IntegrityError : public Error {
public:
    IntegrityError(const std::string& message, std::vector<std::string> offenders)
        : Error(ErrorCode::integrity, message), offenders_(std::move(offenders)) {}

    const std::vector<std::string>& offenders() const noexcept { return offenders_; }

private:
    std::vector<std::string> offenders_;
};

class PermanentError : public Error {
public:
    PermanentError(int status, const std::string& message)
        : Error(ErrorCode::permanent, message), status_(status) {}

    int status() const noexcept { return status_; }

private:
    int status_;
};

class ValidationError : public Error {
public:
    ValidationError(const std::string& message, std::vector<std::string> details)
        : Error(ErrorCode::validation, message), details_(std::move(details)) {}

    const std::vector<std::string>& details() const noexcept { return details_; }

private:
    std::vector<std::string> details_;
};

}  // namespace mcrc
