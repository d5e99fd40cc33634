#pragma once

#include <string>

#include "srqat/model.hpp"

namespace srqat {

/// Single-file container: 8-byte magic, u32 version, then length-prefixed
/// sections (u32 name length, name, u64 payload length, payload). Weights are
/// little-endian f32 blobs; scalar states live in a JSON "meta" section.
/// Unknown sections are skipped on read.
void save_checkpoint(const std::string& path, SRNetwork& net);
SRNetwork load_checkpoint(const std::string& path);

}  // namespace srqat
