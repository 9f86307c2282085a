#pragma once

#include <stdexcept>
#include <string>

namespace caucot {

// Base class for every error the library raises on purpose.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// core-model
class MalformedCase : public Error { using Error::Error; };
class EmptyChain : public Error { using Error::Error; };
class IndexOutOfRange : public Error { using Error::Error; };

// scorer-backend
class MissingBinding : public Error { using Error::Error; };
class ParseFailure : public Error { using Error::Error; };
class BackendError : public Error { using Error::Error; };
class AuthError : public BackendError { using BackendError::BackendError; };
class RateLimited : public BackendError { using BackendError::BackendError; };
class TransportError : public BackendError { using BackendError::BackendError; };
class MalformedResponse : public BackendError { using BackendError::BackendError; };
class UnregisteredCase : public Error { using Error::Error; };

// scoring-engine
class ConfigInvalid : public Error { using Error::Error; };
class AllSamplesUnparseable : public Error { using Error::Error; };

// Backend failure annotated with the step that was being scored.
class StepScoringError : public Error {
public:
    StepScoringError(int step_index, const std::string& msg)
        : Error("step " + std::to_string(step_index) + ": " + msg), step_index_(step_index) {}
    int step_index() const { return step_index_; }

private:
    int step_index_;
};

// causalizer
class GenerationEmpty : public Error { using Error::Error; };

// synth-bench
class SpecInvalid : public Error { using Error::Error; };
class IncompatibleKind : public Error { using Error::Error; };
class NotSynthetic : public Error { using Error::Error; };

// metrics
class EmptyRecords : public Error { using Error::Error; };
class MisalignedRecords : public Error { using Error::Error; };

// pipeline
class IoError : public Error { using Error::Error; };
class SchemaError : public Error { using Error::Error; };

}  // namespace caucot
