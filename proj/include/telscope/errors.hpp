#pragma once

#include <stdexcept>
#include <string>

namespace telscope {

// Base for every error raised by the toolkit. Subclasses name the failing contract.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define TELSCOPE_ERROR(Name)           \
  class Name : public Error {          \
   public:                             \
    using Error::Error;                \
  }

TELSCOPE_ERROR(GridError);
TELSCOPE_ERROR(SchemaError);
TELSCOPE_ERROR(ResampleError);
TELSCOPE_ERROR(EmptySeriesError);
TELSCOPE_ERROR(InsufficientHistoryError);
TELSCOPE_ERROR(EmptyTrainingError);
TELSCOPE_ERROR(ModelFormatError);
TELSCOPE_ERROR(AlignmentError);
TELSCOPE_ERROR(InsufficientDataError);
TELSCOPE_ERROR(ComplexityError);
TELSCOPE_ERROR(EmptySpanError);
TELSCOPE_ERROR(ConfigError);
TELSCOPE_ERROR(IoError);

#undef TELSCOPE_ERROR

/// Unparseable CSV cell. Row is 1-based counting the header, column is 0-based.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t row, std::size_t column)
      : Error(what + " (row " + std::to_string(row) + ", column " + std::to_string(column) + ")"),
        row_(row),
        column_(column) {}

  std::size_t row() const { return row_; }
  std::size_t column() const { return column_; }

 private:
  std::size_t row_;
  std::size_t column_;
};

}  // namespace telscope
