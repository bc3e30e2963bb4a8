#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mteforge {

// Base for every error raised by the toolkit. `kind()` is the stable name
// used in CLI messages and manifests.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(kind + ": " + message), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define MTEFORGE_DEFINE_ERROR(Name)                                  \
  class Name : public Error {                                        \
   public:                                                           \
    explicit Name(const std::string& message) : Error(#Name, message) {} \
  }

MTEFORGE_DEFINE_ERROR(MissingReference);
MTEFORGE_DEFINE_ERROR(EmptyReference);
MTEFORGE_DEFINE_ERROR(LengthMismatch);
MTEFORGE_DEFINE_ERROR(EmptyCorpus);
MTEFORGE_DEFINE_ERROR(DegenerateInput);
MTEFORGE_DEFINE_ERROR(DegenerateEvaluator);
MTEFORGE_DEFINE_ERROR(EmptyInput);
MTEFORGE_DEFINE_ERROR(MissingRepeats);
MTEFORGE_DEFINE_ERROR(InsufficientOverlap);
MTEFORGE_DEFINE_ERROR(Unreachable);
MTEFORGE_DEFINE_ERROR(TooFewDocuments);
MTEFORGE_DEFINE_ERROR(BadHeader);
MTEFORGE_DEFINE_ERROR(DimMismatch);
MTEFORGE_DEFINE_ERROR(DuplicateId);
MTEFORGE_DEFINE_ERROR(ShapeMismatch);
MTEFORGE_DEFINE_ERROR(MissingEmbedding);
MTEFORGE_DEFINE_ERROR(MissingLabel);
MTEFORGE_DEFINE_ERROR(InsufficientTrainingData);
MTEFORGE_DEFINE_ERROR(ProviderError);
MTEFORGE_DEFINE_ERROR(JudgeRunFailed);
MTEFORGE_DEFINE_ERROR(InvalidArgument);
MTEFORGE_DEFINE_ERROR(IoError);
MTEFORGE_DEFINE_ERROR(ConfigError);

#undef MTEFORGE_DEFINE_ERROR

// Schema violation while reading annotation files. `line()` is 1-based.
class MalformedRecord : public Error {
 public:
  MalformedRecord(std::size_t line, const std::string& reason)
      : Error("MalformedRecord",
              "line " + std::to_string(line) + ": " + reason),
        line_(line),
        reason_(reason) {}

  std::size_t line() const noexcept { return line_; }
  const std::string& reason() const noexcept { return reason_; }

 private:
  std::size_t line_;
  std::string reason_;
};

}  // namespace mteforge
