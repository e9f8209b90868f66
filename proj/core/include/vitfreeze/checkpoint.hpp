#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vitfreeze/model.hpp"

namespace vitfreeze {

// Flat binary model snapshot.  Layout, all integers little-endian:
//   magic "VTFZ", u32 version, u32 tensor count,
//   per tensor: u32 name length, UTF-8 name, u32 rank, u64 dims, f32 data;
//   then a trailing metadata block in the same name-keyed style:
//   u32 record count, per record: u32 name length, name, u8 frozen,
//   i64 freeze step.
// Values are narrowed to f32 on disk; snapshots are end-of-run artifacts,
// not a resume mechanism.
struct CheckpointTensor {
    std::string name;
    Tensor value;
};

struct CheckpointLayerMeta {
    std::string name;
    bool frozen = false;
    int64_t freeze_step = -1;
};

struct Checkpoint {
    uint32_t version = 1;
    std::vector<CheckpointTensor> tensors;
    std::vector<CheckpointLayerMeta> layers;
};

void write_checkpoint(const VitMimModel& model, const std::string& path);
Checkpoint read_checkpoint(const std::string& path);

}  // namespace vitfreeze
