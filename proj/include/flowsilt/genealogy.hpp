#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace flowsilt {

// Particle label (root; b1, ..., bN).  The root is the index of the initial
// ancestor, each bit records which child of a split the lineage followed.
struct Label {
  std::uint32_t root = 1;
  std::vector<std::uint8_t> bits;

  int length() const { return static_cast<int>(bits.size()); }
  bool operator==(const Label&) const = default;
  auto operator<=>(const Label&) const = default;
  std::string to_string() const;  // "(3;0,1,1)"
  static Label parse(const std::string& text);
};

// Drops the last `generation` bits.
Label ancestor_at(const Label& label, int generation);

struct Mrca {
  Label label;
  int generation = 0;  // length of the common prefix
};

std::optional<Mrca> mrca(const Label& a, const Label& b);

std::uint64_t root_hash(std::uint32_t root);
std::uint64_t child_hash(std::uint64_t parent_hash, std::uint8_t bit, int depth);
std::uint64_t label_hash(const Label& label);

enum class Topology { I, II, III, IV, VA, VB, T1, T2, T3 };

std::string to_string(Topology t);
Topology topology_from_string(const std::string& s);

struct Classification {
  Topology topology = Topology::I;
  // Split generations in increasing order:
  //   II, T2: {r};  III: {r1, r2} of the two pairs;  IV: {r1, r2} of the triple;
  //   VA: {r1, r2, r3} with r1 the global split;  VB, T3: strictly nested.
  std::vector<int> generations;
  bool operator==(const Classification&) const = default;
};

// Labels must be distinct and of a common length (alive at one grid time).
Classification classify_topology(std::span<const Label> labels);

// Independent reference: pairwise MRCA matrix followed by partition analysis.
Classification classify_topology_bruteforce(std::span<const Label> labels);

// Ordered-assignment multiplicity of a quadruple topology.
long arrangement_count(Topology t);

inline constexpr std::int32_t kNeverDies = std::numeric_limits<std::int32_t>::max();

struct AncestryNode {
  std::int32_t parent = -1;
  std::uint32_t root = 0;
  std::uint8_t bit = 0;
  std::int32_t depth = 0;
  std::int32_t birth_step = 0;
  std::int32_t death_step = kNeverDies;
  bool split = false;  // true when the death step produced two children
};

// Parent links and birth/death grid steps for every label ever alive.
class AncestryRecord {
 public:
  std::int32_t add_root(std::uint32_t root, std::int32_t birth_step = 0);
  std::int32_t add_child(std::int32_t parent, std::uint8_t bit, std::int32_t step);
  void record_death(std::int32_t node, std::int32_t step, bool split);

  const AncestryNode& node(std::int32_t id) const { return nodes_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return nodes_.size(); }
  Label label(std::int32_t id) const;
  // death > birth everywhere and children are born at the split step of their parent.
  bool check_invariants() const;

 private:
  std::vector<AncestryNode> nodes_;
};

}  // namespace flowsilt
