#include "curio/memory.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "json.hpp"

namespace curio {

std::string_view to_string(AnswerKind kind) {
  switch (kind) {
    case AnswerKind::kValue: return "value";
    case AnswerKind::kAmbiguous: return "ambiguous_question";
    case AnswerKind::kInvalid: return "invalid_question";
  }
  return "?";
}

std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::kUnset: return "unset";
    case Provenance::kVision: return "vision";
    case Provenance::kOracle: return "oracle";
  }
  return "?";
}

GraphMemory GraphMemory::uniform(std::vector<Box> locations, std::shared_ptr<const AttributeSchema> schema) {
  if (!schema) throw MemoryError("memory needs a schema");
  if (locations.empty()) throw MemoryError("memory needs at least one object");
  GraphMemory m;
  m.schema_ = std::move(schema);
  m.locations_ = std::move(locations);
  const std::size_t concepts = m.schema_->num_concepts();
  m.slots_.reserve(m.locations_.size() * concepts);
  for (std::size_t k = 0; k < m.locations_.size(); ++k)
    for (std::size_t a = 0; a < concepts; ++a) {
      const std::size_t n = m.schema_->num_values(a);
      m.slots_.emplace_back(n, 1.0 / static_cast<double>(n));
    }
  m.provenance_.assign(m.slots_.size(), Provenance::kUnset);
  return m;
}

std::size_t GraphMemory::index(std::size_t k, std::size_t a) const {
  if (k >= num_objects() || a >= num_concepts()) throw MemoryError("memory slot index out of range");
  return k * num_concepts() + a;
}

bool GraphMemory::committed(std::size_t k, std::size_t a) const {
  const auto& p = slots_[index(k, a)];
  return *std::max_element(p.begin(), p.end()) == 1.0;
}

std::optional<int> GraphMemory::committed_value(std::size_t k, std::size_t a) const {
  const auto& p = slots_[index(k, a)];
  auto it = std::max_element(p.begin(), p.end());
  if (*it != 1.0) return std::nullopt;
  return static_cast<int>(it - p.begin());
}

bool GraphMemory::all_committed() const {
  for (std::size_t k = 0; k < num_objects(); ++k)
    for (std::size_t a = 0; a < num_concepts(); ++a)
      if (!committed(k, a)) return false;
  return true;
}

std::size_t GraphMemory::committed_count() const {
  std::size_t n = 0;
  for (std::size_t k = 0; k < num_objects(); ++k)
    for (std::size_t a = 0; a < num_concepts(); ++a) n += committed(k, a) ? 1 : 0;
  return n;
}

std::size_t GraphMemory::count_provenance(Provenance p) const {
  return static_cast<std::size_t>(std::count(provenance_.begin(), provenance_.end(), p));
}

void GraphMemory::commit(std::size_t k, std::size_t a, int value, Provenance source) {
  auto& p = slots_[index(k, a)];
  if (value < 0 || static_cast<std::size_t>(value) >= p.size())
    throw MemoryError("commit: value index out of range");
  std::fill(p.begin(), p.end(), 0.0);
  p[static_cast<std::size_t>(value)] = 1.0;
  provenance_[index(k, a)] = source;
}

void GraphMemory::set_distribution(std::size_t k, std::size_t a, std::span<const double> dist,
                                   Provenance source) {
  auto& p = slots_[index(k, a)];
  if (dist.size() != p.size()) throw MemoryError("set_distribution: size mismatch");
  double sum = 0.0;
  for (double v : dist) {
    if (!(v >= 0.0)) throw MemoryError("set_distribution: negative or NaN probability");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw MemoryError("set_distribution: not normalized");
  std::copy(dist.begin(), dist.end(), p.begin());
  provenance_[index(k, a)] = source;
}

bool GraphMemory::operator==(const GraphMemory& other) const {
  const bool same_schema = schema_ == other.schema_ || (schema_ && other.schema_ && *schema_ == *other.schema_);
  return same_schema && locations_ == other.locations_ && slots_ == other.slots_ &&
         provenance_ == other.provenance_;
}

GraphMemory init_uniform(std::size_t num_objects, std::shared_ptr<const AttributeSchema> schema) {
  if (num_objects == 0) throw MemoryError("init_uniform: K must be at least 1");
  return GraphMemory::uniform(std::vector<Box>(num_objects), std::move(schema));
}

GraphMemory init_uniform(const Scene& scene) {
  std::vector<Box> locs;
  locs.reserve(scene.size());
  for (const auto& o : scene.objects) locs.push_back(o.location);
  return GraphMemory::uniform(std::move(locs), scene.schema);
}

double annealed_threshold(std::size_t image_index, std::size_t episode_length) {
  if (episode_length == 0 || image_index == 0 || image_index > episode_length)
    throw MemoryError("annealed_threshold: need 1 <= i <= n");
  return std::max(0.9, std::exp(-static_cast<double>(image_index) / static_cast<double>(episode_length)));
}

std::size_t bottom_up_update(GraphMemory& memory, const VisualGraph& visual, std::size_t image_index,
                             std::size_t episode_length) {
  if (visual.num_objects() != memory.num_objects() || visual.num_concepts != memory.num_concepts() ||
      visual.slots.size() != memory.num_slots())
    throw MemoryError("bottom_up_update: visual graph shape does not match memory");
  const double tau = annealed_threshold(image_index, episode_length);
  std::size_t commits = 0;
  for (std::size_t k = 0; k < memory.num_objects(); ++k)
    for (std::size_t a = 0; a < memory.num_concepts(); ++a) {
      if (memory.provenance(k, a) == Provenance::kOracle) continue;
      const auto v = visual.at(k, a);
      if (v.size() != memory.distribution(k, a).size())
        throw MemoryError("bottom_up_update: class count mismatch");
      const auto it = std::max_element(v.begin(), v.end());
      if (*it > tau) {
        memory.commit(k, a, static_cast<int>(it - v.begin()), Provenance::kVision);
        ++commits;
      }
    }
  return commits;
}

bool top_down_update(GraphMemory& memory, std::size_t k, std::size_t a, const OracleAnswer& answer) {
  if (k >= memory.num_objects() || a >= memory.num_concepts())
    throw MemoryError("top_down_update: target out of range");
  if (!answer.is_value()) return false;
  if (answer.concept_index != a) throw MemoryError("top_down_update: answer is about another concept");
  if (memory.provenance(k, a) == Provenance::kOracle) return false;
  const bool changed = memory.committed_value(k, a) != answer.value;
  memory.commit(k, a, *answer.value, Provenance::kOracle);
  return changed;
}

double entropy(std::span<const double> p) {
  double h = 0.0;
  for (double v : p)
    if (v > 0.0) h -= v * std::log(v);
  return h;
}

double slot_entropy(const GraphMemory& memory, std::size_t k, std::size_t a) {
  return entropy(memory.distribution(k, a));
}

double recall(const GraphMemory& memory, const Scene& scene) {
  if (memory.num_objects() != scene.size()) throw MemoryError("recall: object count mismatch");
  std::size_t correct = 0;
  for (std::size_t k = 0; k < memory.num_objects(); ++k)
    for (std::size_t a = 0; a < memory.num_concepts(); ++a) {
      auto v = memory.committed_value(k, a);
      if (v && *v == scene.value(k, a)) ++correct;
    }
  return static_cast<double>(correct) / static_cast<double>(memory.num_slots());
}

std::string memory_to_json(const GraphMemory& memory) {
  using nlohmann::json;
  const auto& schema = memory.schema();
  json objs = json::array();
  for (std::size_t k = 0; k < memory.num_objects(); ++k) {
    json jo;
    const Box& b = memory.locations()[k];
    jo["box"] = {b.x, b.y, b.w, b.h};
    json slots = json::object();
    for (std::size_t a = 0; a < memory.num_concepts(); ++a) {
      const auto p = memory.distribution(k, a);
      slots[schema.concepts[a]] = {{"p", std::vector<double>(p.begin(), p.end())},
                                   {"source", to_string(memory.provenance(k, a))}};
    }
    jo["slots"] = std::move(slots);
    objs.push_back(std::move(jo));
  }
  return json{{"schema", schema.name}, {"objects", std::move(objs)}}.dump();
}

}  // namespace curio
