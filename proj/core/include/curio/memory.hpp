#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "curio/answer.hpp"
#include "curio/scene.hpp"

namespace curio {

class MemoryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Provenance : unsigned char { kUnset, kVision, kOracle };

std::string_view to_string(Provenance p);

/// Per-object, per-concept class distributions predicted by the visual system.
struct VisualGraph {
  std::vector<Box> locations;
  std::size_t num_concepts = 0;
  /// Row-major over (object, concept).
  std::vector<std::vector<double>> slots;

  std::size_t num_objects() const { return locations.size(); }
  std::span<const double> at(std::size_t k, std::size_t a) const { return slots.at(k * num_concepts + a); }
};

/// The agent's belief graph: one probability simplex per (object, concept)
/// slot plus where each committed slot came from.
class GraphMemory {
 public:
  GraphMemory() = default;

  /// Every slot uniform, provenance unset.
  static GraphMemory uniform(std::vector<Box> locations, std::shared_ptr<const AttributeSchema> schema);

  std::size_t num_objects() const { return locations_.size(); }
  std::size_t num_concepts() const { return schema_->num_concepts(); }
  std::size_t num_slots() const { return slots_.size(); }
  const AttributeSchema& schema() const { return *schema_; }
  const std::shared_ptr<const AttributeSchema>& schema_ptr() const { return schema_; }
  const std::vector<Box>& locations() const { return locations_; }

  std::span<const double> distribution(std::size_t k, std::size_t a) const { return slots_.at(index(k, a)); }
  Provenance provenance(std::size_t k, std::size_t a) const { return provenance_.at(index(k, a)); }

  /// max(p) == 1 exactly.
  bool committed(std::size_t k, std::size_t a) const;
  /// The one-hot index of a committed slot.
  std::optional<int> committed_value(std::size_t k, std::size_t a) const;
  bool all_committed() const;
  std::size_t committed_count() const;
  std::size_t count_provenance(Provenance p) const;

  /// Sets slot (k, a) to one-hot(value).
  void commit(std::size_t k, std::size_t a, int value, Provenance source);

  /// Overwrites slot (k, a); `p` must lie on the simplex.
  void set_distribution(std::size_t k, std::size_t a, std::span<const double> p, Provenance source);

  bool operator==(const GraphMemory& other) const;

 private:
  std::size_t index(std::size_t k, std::size_t a) const;

  std::shared_ptr<const AttributeSchema> schema_;
  std::vector<Box> locations_;
  std::vector<std::vector<double>> slots_;
  std::vector<Provenance> provenance_;
};

GraphMemory init_uniform(std::size_t num_objects, std::shared_ptr<const AttributeSchema> schema);
/// Uniform memory over the object locations of `scene`.
GraphMemory init_uniform(const Scene& scene);

/// max(0.9, exp(-i/n)) for image i of n (1-based).
double annealed_threshold(std::size_t image_index, std::size_t episode_length);

/// Commits every non-oracle slot whose visual confidence exceeds tau_i to
/// its argmax. Returns the number of slots that became vision-committed.
std::size_t bottom_up_update(GraphMemory& memory, const VisualGraph& visual, std::size_t image_index,
                             std::size_t episode_length);

/// Writes a value answer into slot (k, a) with oracle provenance. Non-value
/// answers and already oracle-provenance slots leave memory unchanged.
/// Returns true iff memory changed.
bool top_down_update(GraphMemory& memory, std::size_t k, std::size_t a, const OracleAnswer& answer);

/// Natural-log Shannon entropy of slot (k, a).
double slot_entropy(const GraphMemory& memory, std::size_t k, std::size_t a);
double entropy(std::span<const double> p);

/// Fraction of slots that are committed and whose argmax matches the scene.
double recall(const GraphMemory& memory, const Scene& scene);

/// Memory snapshot in the dataset's structured-text format.
std::string memory_to_json(const GraphMemory& memory);

}  // namespace curio
