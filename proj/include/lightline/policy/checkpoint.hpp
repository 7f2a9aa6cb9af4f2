#pragma once

#include <filesystem>
#include <string>

#include "lightline/core/types.hpp"

namespace lightline::policy {

// Layout: 16-byte magic "LIGHTLINE_CKPT\0\0", then version, V and W as little-endian
// uint64, then (W*V + 1) * V little-endian float64 weights in row-major order.
inline constexpr char kCheckpointMagic[16] = {'L', 'I', 'G', 'H', 'T', 'L', 'I', 'N',
                                              'E', '_', 'C', 'K', 'P', 'T', '\0', '\0'};

std::string encode_checkpoint(const PolicyParams& params);
PolicyParams decode_checkpoint(std::string_view bytes);

void save_checkpoint(const PolicyParams& params, const std::filesystem::path& path);
PolicyParams load_checkpoint(const std::filesystem::path& path);

// "policy-v{version}.ckpt"
std::string checkpoint_filename(std::uint64_t version);

}  // namespace lightline::policy
