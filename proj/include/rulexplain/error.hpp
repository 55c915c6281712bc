#pragma once

#include <stdexcept>
#include <string>

namespace rulexplain {

// Base of everything the library throws. Callers that only care about
// "something in the pipeline failed" catch this.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class HorizonMismatch : public Error {
public:
    using Error::Error;
};

class UndefinedNormalization : public Error {
public:
    using Error::Error;
};

class InvalidSpec : public Error {
public:
    using Error::Error;
};

class SchemaError : public Error {
public:
    using Error::Error;
};

class PreconditionError : public Error {
public:
    using Error::Error;
};

/// Unknown trend/phase token. Carries the token and the 1-based row it appeared on.
class VocabularyError : public Error {
public:
    VocabularyError(std::string token, int row)
        : Error("unknown vocabulary token '" + token + "' on row " + std::to_string(row)),
          token_(std::move(token)), row_(row) {}

    const std::string& token() const noexcept { return token_; }
    int row() const noexcept { return row_; }

private:
    std::string token_;
    int row_;
};

class SyntaxError : public Error {
public:
    SyntaxError(const std::string& what, int row)
        : Error("syntax error on row " + std::to_string(row) + ": " + what), row_(row) {}

    int row() const noexcept { return row_; }

private:
    int row_;
};

class DegenerateWindow : public Error {
public:
    using Error::Error;
};

class InfeasibleRule : public Error {
public:
    InfeasibleRule(std::string rule_id, const std::string& why)
        : Error("rule " + rule_id + ": " + why), rule_id_(std::move(rule_id)) {}

    const std::string& rule_id() const noexcept { return rule_id_; }

private:
    std::string rule_id_;
};

// External simulator failures.
class ProcessFailure : public Error {
public:
    using Error::Error;
};

class TimeoutError : public Error {
public:
    using Error::Error;
};

class MalformedReply : public Error {
public:
    using Error::Error;
};

class LengthMismatch : public Error {
public:
    using Error::Error;
};

class TemplateError : public Error {
public:
    using Error::Error;
};

/// Synthesizer backend failed (transport, HTTP status, or unusable reply).
class BackendError : public Error {
public:
    BackendError(const std::string& what, std::string raw_reply = {})
        : Error(what), raw_reply_(std::move(raw_reply)) {}

    const std::string& raw_reply() const noexcept { return raw_reply_; }

private:
    std::string raw_reply_;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace rulexplain
