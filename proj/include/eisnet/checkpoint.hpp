#pragma once

#include <filesystem>
#include <iosfwd>

#include "eisnet/model.hpp"

namespace eisnet {

inline constexpr std::uint32_t kCheckpointSchemaVersion = 1;

/// Little-endian container: magic, schema version, model config block, then
/// (name, shape, float32 data) per tensor in schema order. See docs/formats.md.
void write_checkpoint(std::ostream& os, const ModelParams<float>& m);
ModelParams<float> read_checkpoint(std::istream& is);

void save_checkpoint(const std::filesystem::path& path, const ModelParams<float>& m);
ModelParams<float> load_checkpoint(const std::filesystem::path& path);

} // namespace eisnet
