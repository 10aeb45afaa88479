#pragma once

// FMAP1 tensor files:
//   "FMAP" | u8 version (=1) | u8 ndim | ndim x u32 LE dims | f32 LE values
// Values are stored row-major; tensors are widened to double on read.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "myolo/tensor.hpp"

namespace myolo::fmap {

inline constexpr std::uint8_t kVersion = 1;

std::vector<std::uint8_t> encode(const Tensor& t);
Tensor decode(std::span<const std::uint8_t> bytes);

void write(const std::filesystem::path& path, const Tensor& t);
Tensor read(const std::filesystem::path& path);

/// Rounds every value through f32, i.e. what a write/read cycle yields.
Tensor quantize(const Tensor& t);

/// Named tensors, ordered by name.
using TensorMap = std::map<std::string, Tensor>;

/// Manifest: plain-text `name path` lines; blank lines and '#' comments are
/// ignored. Relative paths resolve against the manifest's directory.
std::vector<std::pair<std::string, std::filesystem::path>> read_manifest(
    const std::filesystem::path& manifest);

TensorMap load_manifest(const std::filesystem::path& manifest);

/// Writes one `<name>.fmap` per tensor into `dir` plus `manifest.txt`.
/// Returns the manifest path.
std::filesystem::path save_manifest(const std::filesystem::path& dir,
                                    const TensorMap& tensors);

}  // namespace myolo::fmap
