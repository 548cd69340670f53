#pragma once

#include <stdexcept>
#include <string>

namespace cordiet {

// Base of every error raised by the library. `kind()` is a stable tag used by
// the service layer to pick a status code.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

// Malformed XML/JSON input. Carries 1-based line and column when known.
class ParseError : public Error {
 public:
  ParseError(const std::string& msg, std::size_t line = 0, std::size_t column = 0)
      : Error("parse", line ? msg + " at line " + std::to_string(line) + ", column " +
                                  std::to_string(column)
                            : msg),
        line_(line),
        column_(column) {}
  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

#define CORDIET_DEFINE_ERROR(Name, tag)                                        \
  class Name : public Error {                                                  \
   public:                                                                     \
    explicit Name(const std::string& msg) : Error(tag, msg) {}                 \
  };

CORDIET_DEFINE_ERROR(IngestionError, "ingestion")
CORDIET_DEFINE_ERROR(ConfigError, "config")
CORDIET_DEFINE_ERROR(QueryError, "query")
CORDIET_DEFINE_ERROR(EvaluationError, "evaluation")
CORDIET_DEFINE_ERROR(RuleError, "rule")
CORDIET_DEFINE_ERROR(OntologyError, "ontology")
CORDIET_DEFINE_ERROR(LookupError, "lookup")
CORDIET_DEFINE_ERROR(ResourceError, "resource")
CORDIET_DEFINE_ERROR(InternalError, "internal")
CORDIET_DEFINE_ERROR(OrderingError, "ordering")
CORDIET_DEFINE_ERROR(NotFoundError, "not_found")

#undef CORDIET_DEFINE_ERROR

}  // namespace cordiet
