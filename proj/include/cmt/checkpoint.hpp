// Copyright Contributors to the PointCMT Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <utility>
#include <vector>

#include "cmt/diffcore.hpp"
#include "cmt/numarray.hpp"

namespace cmt::diff {

// Checkpoint wire format, byte-exact by contract:
//   magic "CMT1"
//   u32 entry count (little endian)
//   per entry: u16 name length, UTF-8 name, u8 rank, rank x u32 dims,
//              numel x f64 raw little-endian data.

struct CheckpointEntry {
    std::string name;
    NumArray array;
};

void write_checkpoint(const std::string& path, const std::vector<CheckpointEntry>& entries);
std::vector<CheckpointEntry> read_checkpoint(const std::string& path);

// Convenience layer used by the pipeline: one file holds several networks,
// each store's parameter entries written under a network-kind prefix such as
// "enc_pts." (optimizer state is not checkpointed).
using PrefixedStores = std::vector<std::pair<std::string, const ParamStore*>>;

void save_param_stores(const std::string& path, const PrefixedStores& stores);

// Copies values for every parameter of `ps` from `entries` under `prefix`.
// Missing entries or shape mismatches raise CheckpointError.
void load_param_store(const std::vector<CheckpointEntry>& entries, const std::string& prefix,
                      ParamStore& ps);

}  // namespace cmt::diff
