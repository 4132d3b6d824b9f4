#include "tet/toy.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <random>
#include <set>

namespace tet {

RawDataset make_toy_dataset(const ToyOptions& opts) {
  require(opts.entities >= 2 && opts.relations >= 1 && opts.in_types <= opts.relations,
          "toy dataset: bad options");
  // Raw engine draws only: distribution output is implementation-defined.
  std::mt19937_64 rng(opts.seed);
  auto below = [&](std::size_t n) { return static_cast<std::size_t>(rng() % n); };
  auto ent = [](std::size_t i) { return "e" + std::to_string(i); };
  auto rel = [](std::size_t k) { return "r" + std::to_string(k); };

  RawDataset raw;
  std::set<std::pair<std::size_t, std::string>> types;
  for (std::size_t i = 0; i < opts.entities; ++i) {
    // Every entity heads at least one triple.
    const std::size_t forced = below(opts.relations);
    for (std::size_t k = 0; k < opts.relations; ++k) {
      if (k != forced && below(8) >= opts.edge_eighths) continue;
      std::size_t j = below(opts.entities - 1);
      if (j >= i) ++j;
      raw.triples.push_back({ent(i), rel(k), ent(j)});
      types.emplace(i, "/out/" + rel(k));
      if (k < opts.in_types) types.emplace(j, "/in/" + rel(k));
    }
  }

  std::vector<std::pair<std::size_t, std::string>> all(types.begin(), types.end());
  for (std::size_t i = all.size(); i > 1; --i) std::swap(all[i - 1], all[below(i)]);
  // Hold out only assertions whose entity keeps another train type, so every
  // entity stays in training, and at most a quarter of any type, so train
  // labels still state the rule.
  std::vector<std::size_t> remaining(opts.entities, 0);
  std::map<std::string, std::size_t> per_type, moved;
  for (const auto& [e, t] : all) {
    ++remaining[e];
    ++per_type[t];
  }
  std::size_t taken[2] = {0, 0};
  for (const auto& [e, t] : all) {
    int split = 0;
    const bool movable = remaining[e] > 1 && 4 * (moved[t] + 1) <= per_type[t];
    for (int s = 0; s < 2; ++s)
      if (split == 0 && movable && taken[s] < opts.held_out) split = s + 1;
    if (split > 0) {
      ++taken[split - 1];
      --remaining[e];
      ++moved[t];
    }
    raw.tuples[static_cast<std::size_t>(split)].push_back({ent(e), t});
  }
  for (auto& split : raw.tuples) std::sort(split.begin(), split.end());
  return raw;
}

void write_dataset(const RawDataset& raw, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream out(dir / name);
    if (!out) throw LoadError("cannot write " + (dir / name).string());
    return out;
  };
  {
    auto out = open("train_triples.txt");
    for (const auto& t : raw.triples) out << t[0] << '\t' << t[1] << '\t' << t[2] << '\n';
  }
  const char* names[3] = {"train_tuples.txt", "valid_tuples.txt", "test_tuples.txt"};
  for (std::size_t s = 0; s < 3; ++s) {
    auto out = open(names[s]);
    for (const auto& a : raw.tuples[s]) out << a[0] << '\t' << a[1] << '\n';
  }
  if (!raw.classmap.empty()) {
    auto out = open("classmap.tsv");
    for (const auto& c : raw.classmap) out << c[0] << '\t' << c[1] << '\n';
  }
}

}  // namespace tet
