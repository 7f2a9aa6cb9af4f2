#include "lightline/policy/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include <fmt/format.h>

#include "lightline/core/errors.hpp"

namespace lightline::policy {

namespace {

constexpr std::size_t kHeaderSize = sizeof(kCheckpointMagic) + 3 * sizeof(std::uint64_t);

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_u64(std::string_view bytes, std::size_t offset) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[offset + i])) << (8 * i);
  }
  return v;
}

}  // namespace

std::string checkpoint_filename(std::uint64_t version) {
  return fmt::format("policy-v{}.ckpt", version);
}

std::string encode_checkpoint(const PolicyParams& params) {
  if (params.weights.size() != params.rows() * params.cols()) {
    throw ConfigError("weights size does not match (W*V + 1) * V");
  }
  std::string out(kCheckpointMagic, sizeof(kCheckpointMagic));
  out.reserve(kHeaderSize + params.weights.size() * 8);
  put_u64(out, params.version);
  put_u64(out, params.vocab_size);
  put_u64(out, params.context_window);
  for (double w : params.weights) put_u64(out, std::bit_cast<std::uint64_t>(w));
  return out;
}

PolicyParams decode_checkpoint(std::string_view bytes) {
  if (bytes.size() < kHeaderSize ||
      std::memcmp(bytes.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0) {
    throw ParseError("bad checkpoint magic header", 0, "magic");
  }
  PolicyParams p;
  p.version = get_u64(bytes, 16);
  p.vocab_size = get_u64(bytes, 24);
  p.context_window = get_u64(bytes, 32);
  if (p.vocab_size == 0 || p.context_window == 0 || p.vocab_size > (1u << 16) ||
      p.context_window > (1u << 16)) {
    throw ParseError("implausible checkpoint dimensions", 24, "vocab_size");
  }
  const std::size_t n = p.rows() * p.cols();
  if (bytes.size() != kHeaderSize + n * 8) {
    throw ParseError(fmt::format("checkpoint size mismatch: expected {} bytes, found {}",
                                 kHeaderSize + n * 8, bytes.size()),
                     kHeaderSize, "weights");
  }
  p.weights.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    p.weights[i] = std::bit_cast<double>(get_u64(bytes, kHeaderSize + i * 8));
    if (!std::isfinite(p.weights[i])) {
      throw ParseError("non-finite weight in checkpoint", kHeaderSize + i * 8, "weights");
    }
  }
  return p;
}

void save_checkpoint(const PolicyParams& params, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(params);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(fmt::format("cannot write checkpoint {}", path.string()));
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(fmt::format("short write to checkpoint {}", path.string()));
}

PolicyParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(fmt::format("cannot open checkpoint {}", path.string()));
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace lightline::policy
