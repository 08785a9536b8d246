#include "fedpart/error.hpp"

namespace fedpart {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DimensionMismatch: return "DIMENSION_MISMATCH";
    case ErrorCode::BadBoundary: return "BAD_BOUNDARY";
    case ErrorCode::BadHead: return "BAD_HEAD";
    case ErrorCode::ShapeMismatch: return "SHAPE_MISMATCH";
    case ErrorCode::LengthMismatch: return "LENGTH_MISMATCH";
    case ErrorCode::EmptyDataset: return "EMPTY_DATASET";
    case ErrorCode::TooManyClients: return "TOO_MANY_CLIENTS";
    case ErrorCode::EmptyShard: return "EMPTY_SHARD";
    case ErrorCode::IoError: return "IO_ERROR";
    case ErrorCode::ParseError: return "PARSE_ERROR";
    case ErrorCode::RaggedRow: return "RAGGED_ROW";
    case ErrorCode::BadLabel: return "BAD_LABEL";
    case ErrorCode::LayoutMismatch: return "LAYOUT_MISMATCH";
    case ErrorCode::BadC: return "BAD_C";
    case ErrorCode::EmptyUpdateSet: return "EMPTY_UPDATE_SET";
    case ErrorCode::EmptyTestSet: return "EMPTY_TEST_SET";
    case ErrorCode::InvalidArgument: return "INVALID_ARGUMENT";
  }
  return "UNKNOWN";
}

Error::Error(ErrorCode code, std::string message, std::optional<std::size_t> index)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code), index_(index) {}

}  // namespace fedpart
