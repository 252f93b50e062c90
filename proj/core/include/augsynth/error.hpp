#pragma once

#include <stdexcept>
#include <string>

namespace augsynth {

/// Root of the library's exception hierarchy. The CLI maps each leaf
/// category onto its own process exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad argument to an otherwise well-formed call (alpha <= 0, p outside [0,1]).
class ParameterError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Dataset, manifest, image file, or cache problem.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Manifest parse/validation failure tied to one record.
class ManifestError : public DataError {
 public:
  ManifestError(std::size_t record, std::string record_id, const std::string& what)
      : DataError("manifest record " + std::to_string(record) +
                  (record_id.empty() ? std::string() : " (" + record_id + ")") + ": " + what),
        record_(record),
        record_id_(std::move(record_id)) {}

  std::size_t record() const noexcept { return record_; }
  const std::string& record_id() const noexcept { return record_id_; }

 private:
  std::size_t record_;
  std::string record_id_;
};

class GenerationError : public Error {
 public:
  GenerationError(const std::string& what, bool retriable, std::string request_key = {})
      : Error(what), retriable_(retriable), request_key_(std::move(request_key)) {}

  bool retriable() const noexcept { return retriable_; }
  const std::string& request_key() const noexcept { return request_key_; }

 private:
  bool retriable_;
  std::string request_key_;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace augsynth
