#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "driftmeta/meta.hpp"
#include "driftmeta/taskinfer.hpp"

namespace driftmeta {

// One named parameter matrix inside a checkpoint.
struct ParamGroup {
  std::string name;
  Matrix value;
};

// On-disk model snapshot. Binary layout, all integers little-endian:
//   "MDA1" | u64 config hash | u32 group count
//   per group: u32 name length | name | u64 rows | u64 cols | float64 payload
//   u8 moments flag | (same group encoding for optimizer moments when set)
// load(save(x)) is bit-exact.
struct Checkpoint {
  uint64_t config_hash = 0;
  std::vector<ParamGroup> groups;
  bool has_moments = false;
  std::vector<ParamGroup> moments;
};

void save_checkpoint(const Checkpoint& c, const std::string& path);

// `expect_hash` guards against restoring under a different config; pass
// `force` to accept the mismatch anyway.
Checkpoint load_checkpoint(const std::string& path, uint64_t expect_hash,
                           bool force = false);

// Model state <-> checkpoint. Forecaster params go under "f/", adapters
// under "a/", Adam state under "opt_f/" and "opt_a/" as moments.
Checkpoint pack_model(const ModelState& state, uint64_t config_hash);
// Fills an already-shaped state (same config) from the checkpoint; any
// missing group or shape mismatch throws IoError.
void unpack_model(const Checkpoint& c, ModelState* state);

// Task inference parameters under "pi1/" and "pi2/"; no optimizer state.
Checkpoint pack_inference(const TaskInferParams& pi, uint64_t config_hash);
void unpack_inference(const Checkpoint& c, TaskInferParams* pi);

}  // namespace driftmeta
