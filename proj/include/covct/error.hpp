//*****************************************************************************
// Copyright 2026 The covct Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//*****************************************************************************
#pragma once

#include <stdexcept>
#include <string>

namespace covct {

enum class ErrorKind {
    Io,
    Parse,
    Validation,
    DuplicateId,
    UnknownLabel,
    EmptyInput,
    CorruptImage,
    UnsupportedFormat,
    OutOfBounds,
    DegenerateInput,
    CountMismatch,
    OutOfRange,
    SingleClass,
    Backend,
    Timeout,
    MalformedOutput,
    IdMismatch,
    MissingLabel,
};

inline const char* to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::Io: return "io";
    case ErrorKind::Parse: return "parse";
    case ErrorKind::Validation: return "validation";
    case ErrorKind::DuplicateId: return "duplicate-id";
    case ErrorKind::UnknownLabel: return "unknown-label";
    case ErrorKind::EmptyInput: return "empty-input";
    case ErrorKind::CorruptImage: return "corrupt-image";
    case ErrorKind::UnsupportedFormat: return "unsupported-format";
    case ErrorKind::OutOfBounds: return "out-of-bounds";
    case ErrorKind::DegenerateInput: return "degenerate-input";
    case ErrorKind::CountMismatch: return "count-mismatch";
    case ErrorKind::OutOfRange: return "out-of-range";
    case ErrorKind::SingleClass: return "single-class";
    case ErrorKind::Backend: return "backend";
    case ErrorKind::Timeout: return "timeout";
    case ErrorKind::MalformedOutput: return "malformed-output";
    case ErrorKind::IdMismatch: return "id-mismatch";
    case ErrorKind::MissingLabel: return "missing-label";
    }
    return "unknown";
}

/// Every failure raised by the library. `kind()` lets callers and tests
/// branch on the category without parsing the message.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind), message_(message) {}

    ErrorKind kind() const noexcept { return kind_; }
    /// The message without the kind prefix.
    const std::string& message() const noexcept { return message_; }

private:
    ErrorKind kind_;
    std::string message_;
};

} // namespace covct
