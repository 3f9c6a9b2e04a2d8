#pragma once

#include <stdexcept>
#include <string>

namespace topicdyn {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A precondition on an argument or configuration value was violated.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// Input data (files, records, snapshots) could not be used.
class DataError : public Error {
public:
    using Error::Error;
};

/// A pipeline stage needs an artifact that has not been produced yet.
class MissingArtifact : public Error {
public:
    MissingArtifact(const std::string& artifact, const std::string& producer)
        : Error("missing artifact '" + artifact + "'; run `topicdyn " + producer + "` first"),
          producer_(producer) {}

    const std::string& producer() const noexcept { return producer_; }

private:
    std::string producer_;
};

} // namespace topicdyn
