#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace fedpart {

enum class ErrorCode {
  DimensionMismatch,
  BadBoundary,
  BadHead,
  ShapeMismatch,
  LengthMismatch,
  EmptyDataset,
  TooManyClients,
  EmptyShard,
  IoError,
  ParseError,
  RaggedRow,
  BadLabel,
  LayoutMismatch,
  BadC,
  EmptyUpdateSet,
  EmptyTestSet,
  InvalidArgument,
};

std::string_view to_string(ErrorCode code);

// Every failure in the library surfaces as an Error. `index` carries the
// layer index, line number or client id the code refers to, when there is one.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string message, std::optional<std::size_t> index = std::nullopt);

  ErrorCode code() const noexcept { return code_; }
  std::optional<std::size_t> index() const noexcept { return index_; }

 private:
  ErrorCode code_;
  std::optional<std::size_t> index_;
};

}  // namespace fedpart
