#pragma once

#include <string>

#include "msfm/tasks.hpp"

namespace msfm {

/// Binary dataset format:
///   magic "MSFM" | u32 version=1 | u32 N | u32 D | u32 C (0 if unconditional)
///   N*D little-endian f64 samples | N*C little-endian f64 conditions
///   u32 length | UTF-8 JSON metadata
void save_dataset(const std::string& path, const Dataset& dataset);
Dataset load_dataset(const std::string& path);

}  // namespace msfm
