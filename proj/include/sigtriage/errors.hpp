#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sigtriage {

/// Failure to read an input (file, stream, directory).
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Failure to create or write an output file or directory.
class OutputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed textual value: fuzzy signature, hex digest, CSV row.
class FormatError : public std::runtime_error {
public:
    FormatError(std::string field, const std::string& message)
        : std::runtime_error(field + ": " + message), field_(std::move(field)) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

struct SourcePos {
    std::size_t line = 1;
    std::size_t column = 1;
};

/// Rule-language diagnostic. what() renders as "[file:]line:column: message".
class ParseError : public std::runtime_error {
public:
    ParseError(SourcePos pos, const std::string& message, const std::string& file = {})
        : std::runtime_error((file.empty() ? std::string() : file + ":") +
                             std::to_string(pos.line) + ":" + std::to_string(pos.column) + ": " +
                             message),
          pos_(pos),
          message_(message),
          file_(file) {}

    SourcePos position() const noexcept { return pos_; }
    const std::string& message() const noexcept { return message_; }
    const std::string& file() const noexcept { return file_; }

private:
    SourcePos pos_;
    std::string message_;
    std::string file_;
};

/// Raised by compile() when a pattern cannot be turned into scan data.
class CompileError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace sigtriage
