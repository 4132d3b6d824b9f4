#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include "tet/training.hpp"

namespace tet {

// File layout (little-endian):
//   "TETC" | u32 version | u32 metadata length | metadata JSON |
//   f32 parameter blobs in ParameterStore order |
//   f32 Adam first moments, then second moments, in the same order.
// Shapes and names live in the metadata.

class CheckpointError : public std::runtime_error {
 public:
  enum class Kind { io, not_a_checkpoint, version_mismatch, truncated, malformed, fingerprint_mismatch };

  CheckpointError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Throws CheckpointError(fingerprint_mismatch) unless the checkpoint was
/// trained on vocabularies identical to `kg`'s.
void check_vocab(const Checkpoint& ck, const KnowledgeGraph& kg);

}  // namespace tet
