#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace rstd {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed document (not well-formed JSON, or the wrong top-level shape).
class ParseError : public Error {
public:
    using Error::Error;
};

// Document parsed but violates a structural invariant. `path` locates the
// offending field, e.g. "subtasks[1].prompt_template".
class SpecError : public Error {
public:
    SpecError(std::string path, const std::string& message)
        : Error(path + ": " + message), path_(std::move(path)) {}
    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

class CycleError : public Error {
public:
    explicit CycleError(std::vector<std::string> cycle);
    const std::vector<std::string>& cycle() const noexcept { return cycle_; }

private:
    std::vector<std::string> cycle_;
};

class UnknownSubtask : public Error {
public:
    explicit UnknownSubtask(const std::string& id) : Error("unknown subtask '" + id + "'") {}
};

class NoParsableValue : public Error {
public:
    NoParsableValue() : Error("no parsable JSON value in text") {}
};

class PreconditionViolated : public Error {
public:
    using Error::Error;
};

// State store.
class AlreadyCompleted : public Error {
public:
    explicit AlreadyCompleted(const std::string& id) : Error("subtask '" + id + "' already completed") {}
};

class InvalidTransition : public Error {
public:
    using Error::Error;
};

class NotCompleted : public Error {
public:
    explicit NotCompleted(const std::string& id) : Error("subtask '" + id + "' has no completed value") {}
};

class MissingRequiredInput : public Error {
public:
    MissingRequiredInput(std::string key, std::string source, std::string source_status)
        : Error("required input '" + key + "' from '" + source + "' unavailable (status " + source_status + ")"),
          key_(std::move(key)),
          source_(std::move(source)),
          source_status_(std::move(source_status)) {}
    const std::string& key() const noexcept { return key_; }
    const std::string& source() const noexcept { return source_; }
    const std::string& source_status() const noexcept { return source_status_; }

private:
    std::string key_;
    std::string source_;
    std::string source_status_;
};

// Backends.
class ScriptMiss : public Error {
public:
    using Error::Error;
};

class ScriptError : public Error {
public:
    using Error::Error;
};

class TransportError : public Error {
public:
    using Error::Error;
};

// Fault injection: the configured path is absent from the target value.
class PathNotFound : public Error {
public:
    explicit PathNotFound(const std::string& path) : Error("path not found: " + path) {}
};

class MixedConfig : public Error {
public:
    using Error::Error;
};

}  // namespace rstd
