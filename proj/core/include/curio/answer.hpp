#pragma once

#include <cstddef>
#include <optional>
#include <string_view>

namespace curio {

enum class AnswerKind { kValue, kAmbiguous, kInvalid };

std::string_view to_string(AnswerKind kind);

/// One of the three oracle responses. `concept_index`/`value` are set iff kind is kValue.
struct OracleAnswer {
  AnswerKind kind = AnswerKind::kInvalid;
  std::optional<std::size_t> concept_index;
  std::optional<int> value;

  static OracleAnswer of_value(std::size_t concept_idx, int v) {
    return {AnswerKind::kValue, concept_idx, v};
  }
  static OracleAnswer ambiguous() { return {AnswerKind::kAmbiguous, std::nullopt, std::nullopt}; }
  static OracleAnswer invalid() { return {AnswerKind::kInvalid, std::nullopt, std::nullopt}; }

  bool is_value() const { return kind == AnswerKind::kValue; }

  bool operator==(const OracleAnswer&) const = default;
};

}  // namespace curio
