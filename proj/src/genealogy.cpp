#include "flowsilt/genealogy.hpp"

#include "flowsilt/error.hpp"
#include "flowsilt/rng.hpp"

#include <algorithm>
#include <map>
#include <memory>
#include <set>
#include <sstream>

namespace flowsilt {

std::string Label::to_string() const {
  std::ostringstream os;
  os << '(' << root << ';';
  for (std::size_t i = 0; i < bits.size(); ++i) os << (i ? "," : "") << int(bits[i]);
  os << ')';
  return os.str();
}

Label Label::parse(const std::string& text) {
  Label l;
  std::string s;
  for (char ch : text)
    if (ch != '(' && ch != ')' && ch != ' ') s.push_back(ch);
  const auto semi = s.find(';');
  try {
    l.root = static_cast<std::uint32_t>(std::stoul(s.substr(0, semi)));
  } catch (const std::exception&) {
    throw ArgumentError("label: cannot parse '" + text + "'");
  }
  if (semi != std::string::npos) {
    std::stringstream rest(s.substr(semi + 1));
    std::string tok;
    while (std::getline(rest, tok, ',')) {
      if (tok.empty()) continue;
      if (tok != "0" && tok != "1") throw ArgumentError("label: bits must be 0 or 1 in '" + text + "'");
      l.bits.push_back(static_cast<std::uint8_t>(tok[0] - '0'));
    }
  }
  return l;
}

Label ancestor_at(const Label& label, int generation) {
  if (generation < 0 || generation > label.length()) {
    throw RangeError("ancestor_at: generation " + std::to_string(generation) + " outside [0, " +
                     std::to_string(label.length()) + "]");
  }
  Label a;
  a.root = label.root;
  a.bits.assign(label.bits.begin(), label.bits.end() - generation);
  return a;
}

std::optional<Mrca> mrca(const Label& a, const Label& b) {
  if (a.root != b.root) return std::nullopt;
  const std::size_t n = std::min(a.bits.size(), b.bits.size());
  std::size_t r = 0;
  while (r < n && a.bits[r] == b.bits[r]) ++r;
  Mrca m;
  m.label.root = a.root;
  m.label.bits.assign(a.bits.begin(), a.bits.begin() + static_cast<long>(r));
  m.generation = static_cast<int>(r);
  return m;
}

std::uint64_t root_hash(std::uint32_t root) { return rng::splitmix64(0x6A09E667F3BCC909ull ^ root); }

std::uint64_t child_hash(std::uint64_t parent_hash, std::uint8_t bit, int depth) {
  return rng::splitmix64(parent_hash ^ rng::splitmix64((std::uint64_t(depth) << 1) | bit));
}

std::uint64_t label_hash(const Label& label) {
  std::uint64_t h = root_hash(label.root);
  for (int i = 0; i < label.length(); ++i) h = child_hash(h, label.bits[i], i + 1);
  return h;
}

std::string to_string(Topology t) {
  switch (t) {
    case Topology::I: return "I";
    case Topology::II: return "II";
    case Topology::III: return "III";
    case Topology::IV: return "IV";
    case Topology::VA: return "VA";
    case Topology::VB: return "VB";
    case Topology::T1: return "T1";
    case Topology::T2: return "T2";
    case Topology::T3: return "T3";
  }
  return "?";
}

Topology topology_from_string(const std::string& s) {
  for (Topology t : {Topology::I, Topology::II, Topology::III, Topology::IV, Topology::VA, Topology::VB,
                     Topology::T1, Topology::T2, Topology::T3}) {
    if (to_string(t) == s) return t;
  }
  throw ArgumentError("unknown topology '" + s + "'");
}

namespace {

void check_tuple(std::span<const Label> labels) {
  if (labels.size() != 3 && labels.size() != 4) throw ArgumentError("classify_topology: expects 3 or 4 labels");
  const int len = labels[0].length();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i].length() != len) throw ArgumentError("classify_topology: labels must share one length");
    for (std::size_t j = 0; j < i; ++j)
      if (labels[i] == labels[j]) throw ArgumentError("classify_topology: duplicate label " + labels[i].to_string());
  }
}

// Binary split tree of labels on one root: each internal node is the first bit
// position where its members disagree.
struct SplitNode {
  int generation = -1;  // -1 for a leaf
  int size = 1;
  std::unique_ptr<SplitNode> zero, one;
};

std::unique_ptr<SplitNode> build_split(std::span<const Label> labels, std::vector<int> members, int from) {
  auto node = std::make_unique<SplitNode>();
  node->size = static_cast<int>(members.size());
  if (members.size() == 1) return node;
  int p = from;
  const int len = labels[members[0]].length();
  for (; p < len; ++p) {
    const auto b0 = labels[members[0]].bits[p];
    bool differ = false;
    for (int m : members) differ |= labels[m].bits[p] != b0;
    if (differ) break;
  }
  std::vector<int> z, o;
  for (int m : members) (labels[m].bits[p] == 0 ? z : o).push_back(m);
  node->generation = p;
  node->zero = build_split(labels, std::move(z), p + 1);
  node->one = build_split(labels, std::move(o), p + 1);
  return node;
}

const SplitNode& larger(const SplitNode& n) { return n.zero->size >= n.one->size ? *n.zero : *n.one; }

}  // namespace

Classification classify_topology(std::span<const Label> labels) {
  check_tuple(labels);
  std::map<std::uint32_t, std::vector<int>> by_root;
  for (int i = 0; i < static_cast<int>(labels.size()); ++i) by_root[labels[i].root].push_back(i);
  std::vector<std::unique_ptr<SplitNode>> trees;
  for (auto& [root, members] : by_root) trees.push_back(build_split(labels, members, 0));
  std::sort(trees.begin(), trees.end(), [](const auto& a, const auto& b) {
    if (a->size != b->size) return a->size > b->size;
    return a->generation < b->generation;
  });

  Classification c;
  const bool quad = labels.size() == 4;
  const int big = trees.front()->size;
  const auto& t0 = *trees.front();
  if (quad) {
    if (trees.size() == 4) {
      c.topology = Topology::I;
    } else if (trees.size() == 3) {
      c.topology = Topology::II;
      c.generations = {t0.generation};
    } else if (trees.size() == 2 && big == 2) {
      c.topology = Topology::III;
      c.generations = {t0.generation, trees[1]->generation};
    } else if (trees.size() == 2) {
      c.topology = Topology::IV;
      c.generations = {t0.generation, larger(t0).generation};
    } else if (larger(t0).size == 2) {
      c.topology = Topology::VA;
      c.generations = {t0.generation, t0.zero->generation, t0.one->generation};
    } else {
      const auto& tri = larger(t0);
      c.topology = Topology::VB;
      c.generations = {t0.generation, tri.generation, larger(tri).generation};
    }
  } else {
    if (trees.size() == 3) {
      c.topology = Topology::T1;
    } else if (trees.size() == 2) {
      c.topology = Topology::T2;
      c.generations = {t0.generation};
    } else {
      c.topology = Topology::T3;
      c.generations = {t0.generation, larger(t0).generation};
    }
  }
  std::sort(c.generations.begin(), c.generations.end());
  return c;
}

Classification classify_topology_bruteforce(std::span<const Label> labels) {
  check_tuple(labels);
  const int k = static_cast<int>(labels.size());
  std::vector<std::vector<int>> D(k, std::vector<int>(k, -1));
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j)
      if (i != j) {
        if (auto m = mrca(labels[i], labels[j])) D[i][j] = m->generation;
      }
  // Equivalence classes of "D >= threshold" among a member set.
  auto classes = [&](const std::vector<int>& members, int threshold) {
    std::vector<std::vector<int>> out;
    std::vector<bool> used(k, false);
    for (int a : members) {
      if (used[a]) continue;
      std::vector<int> cls{a};
      used[a] = true;
      for (int b : members)
        if (!used[b] && D[a][b] >= threshold) {
          cls.push_back(b);
          used[b] = true;
        }
      out.push_back(cls);
    }
    std::sort(out.begin(), out.end(), [](const auto& x, const auto& y) { return x.size() > y.size(); });
    return out;
  };
  auto min_within = [&](const std::vector<int>& m) {
    int r = 1 << 30;
    for (int a : m)
      for (int b : m)
        if (a != b) r = std::min(r, D[a][b]);
    return r;
  };
  auto max_within = [&](const std::vector<int>& m) {
    int r = -1;
    for (int a : m)
      for (int b : m)
        if (a != b) r = std::max(r, D[a][b]);
    return r;
  };
  std::vector<int> all(k);
  for (int i = 0; i < k; ++i) all[i] = i;
  const auto roots = classes(all, 0);
  Classification c;
  std::vector<std::size_t> sizes;
  for (const auto& r : roots) sizes.push_back(r.size());
  auto is = [&](std::initializer_list<std::size_t> s) { return sizes == std::vector<std::size_t>(s); };
  if (k == 4) {
    if (is({1, 1, 1, 1})) {
      c.topology = Topology::I;
    } else if (is({2, 1, 1})) {
      c.topology = Topology::II;
      c.generations = {min_within(roots[0])};
    } else if (is({2, 2})) {
      c.topology = Topology::III;
      c.generations = {min_within(roots[0]), min_within(roots[1])};
    } else if (is({3, 1})) {
      c.topology = Topology::IV;
      c.generations = {min_within(roots[0]), max_within(roots[0])};
    } else {
      const int r1 = min_within(all);
      const auto sub = classes(all, r1 + 1);
      if (sub.size() == 2 && sub[0].size() == 2) {
        c.topology = Topology::VA;
        c.generations = {r1, min_within(sub[0]), min_within(sub[1])};
      } else {
        c.topology = Topology::VB;
        c.generations = {r1, min_within(sub[0]), max_within(sub[0])};
      }
    }
  } else {
    if (is({1, 1, 1})) {
      c.topology = Topology::T1;
    } else if (is({2, 1})) {
      c.topology = Topology::T2;
      c.generations = {min_within(roots[0])};
    } else {
      c.topology = Topology::T3;
      c.generations = {min_within(all), max_within(all)};
    }
  }
  std::sort(c.generations.begin(), c.generations.end());
  return c;
}

long arrangement_count(Topology t) {
  switch (t) {
    case Topology::I: return 1;
    case Topology::II: return 2 * 6;           // 2 C(4,2)
    case Topology::III: return 2 * 6;          // 2 C(4,2)
    case Topology::IV: return 2 * 2 * 3 * 4;   // 2 C(2,1) C(3,2) C(4,3)
    case Topology::VA: return 1 * 2 * 6;       // C(1,1) C(2,1) C(4,2)
    case Topology::VB: return 48;              // matches the 1/48 normalization of the nested case
    default: break;
  }
  throw UnsupportedError("arrangement_count: triple topologies are not supported");
}

std::int32_t AncestryRecord::add_root(std::uint32_t root, std::int32_t birth_step) {
  AncestryNode n;
  n.root = root;
  n.birth_step = birth_step;
  nodes_.push_back(n);
  return static_cast<std::int32_t>(nodes_.size() - 1);
}

std::int32_t AncestryRecord::add_child(std::int32_t parent, std::uint8_t bit, std::int32_t step) {
  const auto& p = node(parent);
  AncestryNode n;
  n.parent = parent;
  n.root = p.root;
  n.bit = bit;
  n.depth = p.depth + 1;
  n.birth_step = step;
  nodes_.push_back(n);
  return static_cast<std::int32_t>(nodes_.size() - 1);
}

void AncestryRecord::record_death(std::int32_t id, std::int32_t step, bool split) {
  auto& n = nodes_.at(static_cast<std::size_t>(id));
  n.death_step = step;
  n.split = split;
}

Label AncestryRecord::label(std::int32_t id) const {
  Label l;
  l.root = node(id).root;
  l.bits.resize(static_cast<std::size_t>(node(id).depth));
  for (std::int32_t cur = id; node(cur).parent >= 0; cur = node(cur).parent) {
    l.bits[static_cast<std::size_t>(node(cur).depth - 1)] = node(cur).bit;
  }
  return l;
}

bool AncestryRecord::check_invariants() const {
  for (const auto& n : nodes_) {
    if (n.death_step <= n.birth_step) return false;
    if (n.parent >= 0) {
      const auto& p = node(n.parent);
      if (!p.split || p.death_step != n.birth_step) return false;
    }
  }
  return true;
}

}  // namespace flowsilt
