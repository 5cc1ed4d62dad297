#include "curio/qdsl.hpp"

#include <bit>
#include <cctype>
#include <cmath>
#include <limits>
#include <sstream>

namespace curio {

void QuestionAction::validate(std::size_t num_objects, std::size_t num_concepts) const {
  if (target_object >= num_objects) throw ProgramError("action: target object out of range");
  if (target_concept >= num_concepts) throw ProgramError("action: target concept out of range");
  if (use_reference != reference_object.has_value())
    throw ProgramError("action: reference object present iff use_reference");
  if (reference_object) {
    if (*reference_object >= num_objects) throw ProgramError("action: reference object out of range");
    if (*reference_object == target_object) throw ProgramError("action: reference equals target");
  }
}

std::size_t Program::add(Node node) {
  nodes_.push_back(std::move(node));
  return nodes_.size() - 1;
}

bool Program::is_one_hop() const {
  for (const auto& n : nodes_)
    if (n.kind == NodeKind::kFilterRelation) return true;
  return false;
}

namespace {

bool nodes_equal(const Program& a, std::size_t i, const Program& b, std::size_t j) {
  const auto& x = a.node(i);
  const auto& y = b.node(j);
  if (x.kind != y.kind || x.children.size() != y.children.size()) return false;
  switch (x.kind) {
    case NodeKind::kFilterAttribute:
      if (x.concept_index != y.concept_index || x.value != y.value) return false;
      break;
    case NodeKind::kQuery:
      if (x.concept_index != y.concept_index) return false;
      break;
    case NodeKind::kFilterPosition:
    case NodeKind::kFilterExtreme:
      if (x.position != y.position) return false;
      break;
    case NodeKind::kFilterRelation:
      if (x.relation != y.relation) return false;
      break;
    default:
      break;
  }
  for (std::size_t c = 0; c < x.children.size(); ++c)
    if (!nodes_equal(a, x.children[c], b, y.children[c])) return false;
  return true;
}

bool is_set_kind(NodeKind k) {
  return k == NodeKind::kScene || k == NodeKind::kFilterAttribute || k == NodeKind::kFilterPosition ||
         k == NodeKind::kFilterRelation || k == NodeKind::kFilterExtreme;
}

struct Validator {
  const Program& p;
  const AttributeSchema& schema;
  std::size_t relations = 0;
  std::size_t visited = 0;

  void expect_children(const Program::Node& n, std::size_t count) {
    if (n.children.size() != count) throw ProgramError("program node has wrong number of children");
    for (std::size_t c : n.children)
      if (c >= p.size()) throw ProgramError("program child index out of range");
  }

  void object(std::size_t i) {
    ++visited;
    const auto& n = p.node(i);
    if (n.kind != NodeKind::kUnique) throw ProgramError("expected unique(...) where an object is required");
    expect_children(n, 1);
    set(n.children[0]);
  }

  void set(std::size_t i) {
    if (++visited > p.size()) throw ProgramError("program graph has a cycle");
    const auto& n = p.node(i);
    if (!is_set_kind(n.kind)) throw ProgramError("expected a set expression");
    switch (n.kind) {
      case NodeKind::kScene:
        expect_children(n, 0);
        return;
      case NodeKind::kFilterAttribute:
        expect_children(n, 1);
        if (n.concept_index >= schema.num_concepts()) throw ProgramError("filter concept out of range");
        if (n.value < 0 || static_cast<std::size_t>(n.value) >= schema.num_values(n.concept_index))
          throw ProgramError("filter value out of range");
        set(n.children[0]);
        return;
      case NodeKind::kFilterPosition:
        expect_children(n, 1);
        if (n.position == Position::kNone) throw ProgramError("filter_position needs a concrete position");
        set(n.children[0]);
        return;
      case NodeKind::kFilterExtreme:
        expect_children(n, 1);
        if (n.position != Position::kClosest) throw ProgramError("filter_extreme only supports closest");
        if (p.node(n.children[0]).kind != NodeKind::kFilterRelation)
          throw ProgramError("filter_extreme must wrap filter_relation");
        set(n.children[0]);
        return;
      case NodeKind::kFilterRelation:
        expect_children(n, 2);
        if (++relations > 1) throw ProgramError("programs allow at most one relation hop");
        object(n.children[0]);
        set(n.children[1]);
        return;
      default:
        return;
    }
  }
};

}  // namespace

bool operator==(const Program& a, const Program& b) {
  if (a.size() == 0 || b.size() == 0) return a.size() == b.size();
  return nodes_equal(a, a.root(), b, b.root());
}

void Program::validate(const AttributeSchema& schema) const {
  if (nodes_.empty() || root_ >= nodes_.size()) throw ProgramError("empty program");
  const Node& r = nodes_[root_];
  if (r.kind != NodeKind::kQuery) throw ProgramError("program root must be query_<concept>");
  if (r.concept_index >= schema.num_concepts()) throw ProgramError("query concept out of range");
  if (r.children.size() != 1 || r.children[0] >= nodes_.size())
    throw ProgramError("query takes exactly one object");
  Validator v{*this, schema};
  v.object(r.children[0]);
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

void write_node(std::ostream& os, const Program& p, std::size_t i, const AttributeSchema& schema) {
  const auto& n = p.node(i);
  switch (n.kind) {
    case NodeKind::kScene:
      os << "scene";
      return;
    case NodeKind::kFilterAttribute:
      os << "filter_" << schema.concepts.at(n.concept_index) << '('
         << schema.values.at(n.concept_index).at(static_cast<std::size_t>(n.value)) << ", ";
      write_node(os, p, n.children.at(0), schema);
      os << ')';
      return;
    case NodeKind::kFilterPosition:
      os << "filter_position(" << to_string(n.position) << ", ";
      write_node(os, p, n.children.at(0), schema);
      os << ')';
      return;
    case NodeKind::kFilterExtreme:
      os << "filter_extreme(" << to_string(n.position) << ", ";
      write_node(os, p, n.children.at(0), schema);
      os << ')';
      return;
    case NodeKind::kFilterRelation:
      os << "filter_relation(" << to_string(n.relation) << ", ";
      write_node(os, p, n.children.at(0), schema);
      os << ", ";
      write_node(os, p, n.children.at(1), schema);
      os << ')';
      return;
    case NodeKind::kUnique:
      os << "unique(";
      write_node(os, p, n.children.at(0), schema);
      os << ')';
      return;
    case NodeKind::kQuery:
      os << "query_" << schema.concepts.at(n.concept_index) << '(';
      write_node(os, p, n.children.at(0), schema);
      os << ')';
      return;
  }
}

// Generic call-syntax tree produced by the tokenizer/parser before typing.
struct Call {
  std::string name;
  std::size_t pos = 0;
  bool has_args = false;
  std::vector<Call> args;
};

class CallParser {
 public:
  explicit CallParser(std::string_view text) : text_(text) {}

  Call parse() {
    Call c = expr();
    skip_ws();
    if (i_ != text_.size()) throw ParseError("unexpected trailing input", i_);
    return c;
  }

 private:
  static bool ident_char(char c) {
    return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_' || c == '-';
  }

  void skip_ws() {
    while (i_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[i_]))) ++i_;
  }

  Call expr() {
    skip_ws();
    Call c;
    c.pos = i_;
    if (i_ >= text_.size()) throw ParseError("unexpected end of input", i_);
    while (i_ < text_.size() && ident_char(text_[i_])) ++i_;
    if (i_ == c.pos) throw ParseError(std::string("unexpected character '") + text_[i_] + "'", i_);
    c.name = std::string(text_.substr(c.pos, i_ - c.pos));
    skip_ws();
    if (i_ < text_.size() && text_[i_] == '(') {
      ++i_;
      c.has_args = true;
      for (;;) {
        c.args.push_back(expr());
        skip_ws();
        if (i_ >= text_.size()) throw ParseError("unbalanced parentheses: unexpected end of input", i_);
        if (text_[i_] == ',') {
          ++i_;
          continue;
        }
        if (text_[i_] == ')') {
          ++i_;
          break;
        }
        throw ParseError(std::string("expected ',' or ')' but found '") + text_[i_] + "'", i_);
      }
    }
    return c;
  }

  std::string_view text_;
  std::size_t i_ = 0;
};

class ProgramBuilder {
 public:
  explicit ProgramBuilder(const AttributeSchema& schema) : schema_(schema) {}

  Program build(const Call& root) {
    if (!root.name.starts_with("query_")) throw ParseError("program must start with query_<concept>", root.pos);
    Program::Node q;
    q.kind = NodeKind::kQuery;
    q.concept_index = concept_of(root, root.name.substr(6));
    arity(root, 1);
    q.children.push_back(object(root.args[0]));
    prog_.set_root(prog_.add(std::move(q)));
    return std::move(prog_);
  }

 private:
  std::size_t concept_of(const Call& c, std::string_view name) const {
    auto idx = schema_.concept_index(name);
    if (!idx) throw ParseError("unknown function '" + c.name + "'", c.pos);
    return *idx;
  }

  static void arity(const Call& c, std::size_t n) {
    if (!c.has_args || c.args.size() != n)
      throw ParseError("function '" + c.name + "' expects " + std::to_string(n) + " argument(s), got " +
                           std::to_string(c.args.size()),
                       c.pos);
  }

  static const std::string& atom(const Call& c) {
    if (c.has_args) throw ParseError("expected a value token, found call '" + c.name + "'", c.pos);
    return c.name;
  }

  std::size_t object(const Call& c) {
    if (c.name != "unique") throw ParseError("expected unique(...), found '" + c.name + "'", c.pos);
    arity(c, 1);
    Program::Node n;
    n.kind = NodeKind::kUnique;
    n.children.push_back(set(c.args[0]));
    return prog_.add(std::move(n));
  }

  std::size_t set(const Call& c) {
    Program::Node n;
    if (c.name == "scene") {
      if (c.has_args) throw ParseError("'scene' takes no arguments", c.pos);
      n.kind = NodeKind::kScene;
      return prog_.add(std::move(n));
    }
    if (c.name == "filter_position") {
      arity(c, 2);
      auto p = position_from_string(atom(c.args[0]));
      if (!p || *p == Position::kNone) throw ParseError("unknown position '" + c.args[0].name + "'", c.args[0].pos);
      n.kind = NodeKind::kFilterPosition;
      n.position = *p;
      n.children.push_back(set(c.args[1]));
      return prog_.add(std::move(n));
    }
    if (c.name == "filter_extreme") {
      arity(c, 2);
      if (atom(c.args[0]) != "closest")
        throw ParseError("unknown extreme '" + c.args[0].name + "'", c.args[0].pos);
      if (c.args[1].name != "filter_relation")
        throw ParseError("filter_extreme must wrap filter_relation", c.args[1].pos);
      n.kind = NodeKind::kFilterExtreme;
      n.position = Position::kClosest;
      n.children.push_back(set(c.args[1]));
      return prog_.add(std::move(n));
    }
    if (c.name == "filter_relation") {
      arity(c, 3);
      auto r = relation_from_string(atom(c.args[0]));
      if (!r) throw ParseError("unknown relation '" + c.args[0].name + "'", c.args[0].pos);
      if (++relations_ > 1) throw ParseError("at most one relation hop is allowed", c.pos);
      n.kind = NodeKind::kFilterRelation;
      n.relation = *r;
      n.children.push_back(object(c.args[1]));
      n.children.push_back(set(c.args[2]));
      return prog_.add(std::move(n));
    }
    if (c.name.starts_with("filter_")) {
      const std::size_t a = concept_of(c, std::string_view(c.name).substr(7));
      arity(c, 2);
      auto v = schema_.value_index(a, atom(c.args[0]));
      if (!v)
        throw ParseError("unknown " + schema_.concepts[a] + " value '" + c.args[0].name + "'", c.args[0].pos);
      n.kind = NodeKind::kFilterAttribute;
      n.concept_index = a;
      n.value = static_cast<int>(*v);
      n.children.push_back(set(c.args[1]));
      return prog_.add(std::move(n));
    }
    if (c.name == "unique" || c.name.starts_with("query_"))
      throw ParseError("'" + c.name + "' is not allowed here", c.pos);
    throw ParseError("unknown function '" + c.name + "'", c.pos);
  }

  const AttributeSchema& schema_;
  Program prog_;
  std::size_t relations_ = 0;
};

}  // namespace

std::string serialize_program(const Program& program, const AttributeSchema& schema) {
  std::ostringstream os;
  write_node(os, program, program.root(), schema);
  return os.str();
}

Program parse_program(std::string_view text, const AttributeSchema& schema) {
  const Call root = CallParser(text).parse();
  return ProgramBuilder(schema).build(root);
}

// ---------------------------------------------------------------------------
// Oracle execution

namespace {

using ObjectSet = std::uint64_t;

struct ObjectResult {
  std::size_t index = 0;
  std::optional<AnswerKind> failure;
};

struct SetResult {
  ObjectSet members = 0;
  std::optional<AnswerKind> failure;
};

class Executor {
 public:
  Executor(const Program& p, const Scene& s) : p_(p), s_(s) {}

  OracleAnswer run() {
    const auto& root = p_.node(p_.root());
    ObjectResult target = object(root.children[0]);
    if (target.failure)
      return *target.failure == AnswerKind::kAmbiguous ? OracleAnswer::ambiguous() : OracleAnswer::invalid();
    return OracleAnswer::of_value(root.concept_index, s_.value(target.index, root.concept_index));
  }

 private:
  ObjectSet all() const {
    const std::size_t k = s_.size();
    return k == 64 ? ~ObjectSet{0} : ((ObjectSet{1} << k) - 1);
  }

  ObjectResult object(std::size_t i) {
    SetResult in = set(p_.node(i).children[0]);
    if (in.failure) return {0, in.failure};
    const int count = std::popcount(in.members);
    if (count == 0) return {0, AnswerKind::kInvalid};
    if (count > 1) return {0, AnswerKind::kAmbiguous};
    return {static_cast<std::size_t>(std::countr_zero(in.members)), std::nullopt};
  }

  SetResult set(std::size_t i) {
    const auto& n = p_.node(i);
    switch (n.kind) {
      case NodeKind::kScene:
        return {all(), std::nullopt};
      case NodeKind::kFilterAttribute: {
        SetResult in = set(n.children[0]);
        if (in.failure) return in;
        ObjectSet out = 0;
        for (std::size_t k = 0; k < s_.size(); ++k)
          if ((in.members >> k & 1U) && s_.value(k, n.concept_index) == n.value) out |= ObjectSet{1} << k;
        return {out, std::nullopt};
      }
      case NodeKind::kFilterPosition: {
        SetResult in = set(n.children[0]);
        if (in.failure) return in;
        ObjectSet out = 0;
        for (std::size_t k = 0; k < s_.size(); ++k)
          if ((in.members >> k & 1U) && is_extreme(s_.objects, k, n.position)) out |= ObjectSet{1} << k;
        return {out, std::nullopt};
      }
      case NodeKind::kFilterRelation: {
        ObjectResult anchor = object(n.children[0]);
        if (anchor.failure) return {0, anchor.failure};
        SetResult in = set(n.children[1]);
        if (in.failure) return in;
        last_anchor_ = anchor.index;
        ObjectSet out = 0;
        const SceneObject& ref = s_.object(anchor.index);
        for (std::size_t k = 0; k < s_.size(); ++k)
          if (k != anchor.index && (in.members >> k & 1U) && satisfies(s_.object(k), n.relation, ref))
            out |= ObjectSet{1} << k;
        return {out, std::nullopt};
      }
      case NodeKind::kFilterExtreme: {
        SetResult in = set(n.children[0]);
        if (in.failure || in.members == 0) return in;
        const SceneObject& ref = s_.object(last_anchor_);
        std::size_t best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < s_.size(); ++k) {
          if (!(in.members >> k & 1U)) continue;
          const double d = center_distance(s_.object(k), ref);
          if (d < best_d) {
            best_d = d;
            best = k;
          }
        }
        return {ObjectSet{1} << best, std::nullopt};
      }
      default:
        throw ProgramError("unexpected node in set position");
    }
  }

  const Program& p_;
  const Scene& s_;
  std::size_t last_anchor_ = 0;
};

}  // namespace

OracleAnswer execute(const Program& program, const Scene& scene) {
  if (!scene.schema) throw ProgramError("execute: scene has no schema");
  if (scene.size() > 64) throw ProgramError("execute: scenes are limited to 64 objects");
  program.validate(*scene.schema);
  return Executor(program, scene).run();
}

// ---------------------------------------------------------------------------
// Template filling

namespace {

std::vector<SceneObject> proposals_of(const GraphMemory& memory) {
  std::vector<SceneObject> out;
  out.reserve(memory.num_objects());
  for (const Box& b : memory.locations()) out.push_back(SceneObject{b, {}});
  return out;
}

// Wraps `input` in filter_<concept> nodes for every committed slot of
// object k (skipping `skip`), innermost first in description order.
std::size_t describe(Program& p, std::size_t input, const GraphMemory& memory, std::size_t k,
                     std::optional<std::size_t> skip) {
  for (std::size_t a : memory.schema().description_order) {
    if (skip && a == *skip) continue;
    auto v = memory.committed_value(k, a);
    if (!v) continue;
    Program::Node n;
    n.kind = NodeKind::kFilterAttribute;
    n.concept_index = a;
    n.value = *v;
    n.children.push_back(input);
    input = p.add(std::move(n));
  }
  return input;
}

std::string noun_phrase(const GraphMemory& memory, std::size_t k, std::optional<std::size_t> skip) {
  const auto& schema = memory.schema();
  const auto& order = schema.description_order;
  std::string out;
  for (std::size_t idx = 0; idx + 1 < order.size(); ++idx) {
    const std::size_t a = order[idx];
    if (skip && a == *skip) continue;
    if (auto v = memory.committed_value(k, a)) out += schema.values[a][static_cast<std::size_t>(*v)] + " ";
  }
  const std::size_t noun = order.back();
  auto v = memory.committed_value(k, noun);
  if (v && !(skip && noun == *skip))
    out += schema.values[noun][static_cast<std::size_t>(*v)];
  else
    out += "thing";
  return out;
}

std::string_view relation_phrase(Relation r) {
  switch (r) {
    case Relation::kLeft: return "left of";
    case Relation::kRight: return "right of";
    case Relation::kFront: return "in front of";
    case Relation::kBehind: return "behind";
  }
  return "?";
}

// True iff `target` is the proposal nearest to `ref` among those standing in
// relation `r` to it.
bool nearest_in_relation(std::span<const SceneObject> objs, std::size_t target, std::size_t ref, Relation r) {
  const double d = center_distance(objs[target], objs[ref]);
  for (std::size_t j = 0; j < objs.size(); ++j) {
    if (j == ref || j == target || !satisfies(objs[j], r, objs[ref])) continue;
    if (center_distance(objs[j], objs[ref]) <= d) return false;
  }
  return true;
}

}  // namespace

ComposedQuestion compose_program(const QuestionAction& action, const GraphMemory& memory) {
  action.validate(memory.num_objects(), memory.num_concepts());
  const auto& schema = memory.schema();
  const auto objs = proposals_of(memory);
  const std::size_t k = action.target_object;
  const std::size_t q = action.target_concept;

  ComposedQuestion out;
  Program& p = out.program;
  Program::Node scene_node;
  scene_node.kind = NodeKind::kScene;

  std::string text = "What " + schema.concepts[q] + " is the ";
  std::size_t target_set = 0;

  if (!action.use_reference) {
    target_set = describe(p, p.add(scene_node), memory, k, q);
    const Position pos = extremal_position(objs, k);
    if (pos != Position::kNone) {
      Program::Node n;
      n.kind = NodeKind::kFilterPosition;
      n.position = pos;
      n.children.push_back(target_set);
      target_set = p.add(std::move(n));
      text += std::string(to_string(pos)) + " ";
    }
    text += noun_phrase(memory, k, q) + "?";
  } else {
    const std::size_t ref = *action.reference_object;
    const std::size_t ref_set = describe(p, p.add(scene_node), memory, ref, std::nullopt);
    Program::Node ref_unique;
    ref_unique.kind = NodeKind::kUnique;
    ref_unique.children.push_back(ref_set);
    const std::size_t ref_obj = p.add(std::move(ref_unique));

    const SpatialRelation rel = spatial_relation(objs[k], objs[ref]);
    Relation chosen = rel.horizontal;
    bool extreme = false;
    for (Relation r : {rel.horizontal, rel.depth})
      if (nearest_in_relation(objs, k, ref, r)) {
        chosen = r;
        extreme = true;
        break;
      }

    Program::Node rn;
    rn.kind = NodeKind::kFilterRelation;
    rn.relation = chosen;
    rn.children.push_back(ref_obj);
    rn.children.push_back(p.add(scene_node));
    std::size_t base = p.add(std::move(rn));
    if (extreme) {
      Program::Node en;
      en.kind = NodeKind::kFilterExtreme;
      en.position = Position::kClosest;
      en.children.push_back(base);
      base = p.add(std::move(en));
      text += "closest ";
    }
    target_set = describe(p, base, memory, k, q);
    text += noun_phrase(memory, k, q) + " that is " + std::string(relation_phrase(chosen)) + " the " +
            noun_phrase(memory, ref, std::nullopt) + "?";
    out.one_hop = true;
  }

  Program::Node u;
  u.kind = NodeKind::kUnique;
  u.children.push_back(target_set);
  const std::size_t target_obj = p.add(std::move(u));
  Program::Node query;
  query.kind = NodeKind::kQuery;
  query.concept_index = q;
  query.children.push_back(target_obj);
  p.set_root(p.add(std::move(query)));
  out.text = std::move(text);
  return out;
}

std::string transcript_line(std::size_t round, const Program& program, const OracleAnswer& answer,
                            const AttributeSchema& schema) {
  std::string line = std::to_string(round) + "\t" + serialize_program(program, schema) + "\t" +
                     std::string(to_string(answer.kind)) + "\t";
  if (answer.is_value())
    line += schema.values.at(*answer.concept_index).at(static_cast<std::size_t>(*answer.value));
  else
    line += "-";
  return line;
}

}  // namespace curio
