#pragma once

#include <stdexcept>
#include <string>

namespace flightstat {

// Base for every error the library raises. kind() is a stable machine-readable tag.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& what)
        : std::runtime_error(what), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

#define FLIGHTSTAT_ERROR(Name, tag)                                      \
    class Name : public Error {                                          \
    public:                                                              \
        explicit Name(const std::string& what) : Error(tag, what) {}     \
    }

FLIGHTSTAT_ERROR(SchemaError, "schema");
FLIGHTSTAT_ERROR(IoError, "io");
FLIGHTSTAT_ERROR(ArgumentError, "argument");
FLIGHTSTAT_ERROR(EmptyDatasetError, "empty_dataset");
FLIGHTSTAT_ERROR(InsufficientDataError, "insufficient_data");
FLIGHTSTAT_ERROR(SingularDesignError, "singular_design");
FLIGHTSTAT_ERROR(EncodingError, "encoding");
FLIGHTSTAT_ERROR(UndefinedVarianceError, "undefined_variance");
FLIGHTSTAT_ERROR(DegreesOfFreedomError, "degrees_of_freedom");
FLIGHTSTAT_ERROR(NotFoundError, "not_found");
FLIGHTSTAT_ERROR(SessionClosedError, "session_closed");
FLIGHTSTAT_ERROR(UnknownVersionError, "unknown_version");
FLIGHTSTAT_ERROR(CorruptDocumentError, "corrupt_document");
FLIGHTSTAT_ERROR(DivergenceError, "diverged");
FLIGHTSTAT_ERROR(UnresolvableError, "unresolvable");
FLIGHTSTAT_ERROR(ConflictError, "conflict");

#undef FLIGHTSTAT_ERROR

}  // namespace flightstat
