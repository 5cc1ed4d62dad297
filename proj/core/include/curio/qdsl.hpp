#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "curio/answer.hpp"
#include "curio/memory.hpp"
#include "curio/scene.hpp"

namespace curio {

/// Raised by parse_program; `position()` is the byte offset of the offending token.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t position)
      : std::runtime_error(what + " at position " + std::to_string(position)), position_(position) {}
  std::size_t position() const { return position_; }

 private:
  std::size_t position_;
};

/// A program whose shape breaks the question grammar. Distinct from an
/// invalid question, which is a well-formed program with no referent.
class ProgramError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct QuestionAction {
  std::size_t target_object = 0;
  std::size_t target_concept = 0;
  bool use_reference = false;
  std::optional<std::size_t> reference_object;

  /// Throws ProgramError unless the action is consistent and within (K, concepts).
  void validate(std::size_t num_objects, std::size_t num_concepts) const;

  bool operator==(const QuestionAction&) const = default;
};

enum class NodeKind {
  kScene,
  kFilterAttribute,  // filter_<concept>(value, set)
  kFilterPosition,   // filter_position(P, set)
  kFilterRelation,   // filter_relation(R, object, set)
  kFilterExtreme,    // filter_extreme(closest, filter_relation(...))
  kUnique,           // unique(set) -> object
  kQuery,            // query_<concept>(object)
};

/// Functional question program stored as a node arena. Children are indices
/// into `nodes`; for filter_relation, children[0] is the anchor object and
/// children[1] the input set. For every other filter the input set is the
/// only child.
class Program {
 public:
  struct Node {
    NodeKind kind = NodeKind::kScene;
    std::size_t concept_index = 0;
    int value = 0;
    Position position = Position::kNone;
    Relation relation = Relation::kLeft;
    std::vector<std::size_t> children;
  };

  std::size_t add(Node node);
  void set_root(std::size_t r) { root_ = r; }

  std::size_t root() const { return root_; }
  const Node& node(std::size_t i) const { return nodes_.at(i); }
  std::size_t size() const { return nodes_.size(); }

  std::size_t query_concept() const { return node(root_).concept_index; }
  /// True iff the program contains a filter_relation hop.
  bool is_one_hop() const;

  /// Throws ProgramError unless the tree satisfies the question grammar:
  /// a query root over one unique, at most one relation hop.
  void validate(const AttributeSchema& schema) const;

  /// Structural equality (node order in the arena is irrelevant).
  friend bool operator==(const Program& a, const Program& b);

 private:
  std::vector<Node> nodes_;
  std::size_t root_ = 0;
};

/// Call-syntax form, e.g. "query_color(unique(filter_material(metal, scene)))".
std::string serialize_program(const Program& program, const AttributeSchema& schema);

/// Whitespace-insensitive inverse of serialize_program.
Program parse_program(std::string_view text, const AttributeSchema& schema);

struct ComposedQuestion {
  Program program;
  std::string text;
  bool one_hop = false;
};

/// Fills the zero-hop or one-hop template for `action`. Descriptions use
/// only committed memory slots; positional tokens come from the agent's
/// own object locations.
ComposedQuestion compose_program(const QuestionAction& action, const GraphMemory& memory);

/// Runs `program` against the ground truth. Throws ProgramError for
/// malformed programs.
OracleAnswer execute(const Program& program, const Scene& scene);

/// One line of a dialog transcript: round, program text, answer kind, answer value.
std::string transcript_line(std::size_t round, const Program& program, const OracleAnswer& answer,
                            const AttributeSchema& schema);

}  // namespace curio
