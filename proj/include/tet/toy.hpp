#pragma once

#include <cstdint>
#include <filesystem>

#include "tet/kg_data.hpp"
#include "tet/tensor.hpp"

namespace tet {

/// Synthetic graph whose types are a deterministic function of relational
/// structure: "/out/r<k>" iff the entity heads an r<k> triple, "/in/r<k>"
/// (k < 3) iff it tails one. `held_out` assertions per split move from train
/// to valid and to test; every moved assertion is still implied by the
/// entity's relational neighbors. No type loses more than a quarter of
/// its assertions.
struct ToyOptions {
  std::size_t entities = 30;
  std::size_t relations = 5;
  std::size_t in_types = 3;
  std::size_t held_out = 6;
  /// Chance, in eighths, that an entity heads a triple of each relation
  /// besides the one it is guaranteed.
  std::size_t edge_eighths = 3;
  std::uint64_t seed = 1;
};

RawDataset make_toy_dataset(const ToyOptions& opts = {});

/// Writes the dataset files in the layout load_dataset reads.
void write_dataset(const RawDataset& raw, const std::filesystem::path& dir);

}  // namespace tet
