#pragma once

// Versioned flat binary for network parameters (little-endian host order).
//
//   "GRLHFCK\0"  u32 version  u32 kind  u32 network_count  u32 extra_count
//   per network: u64 seed, u32 layer_count+1, u32 sizes[layer_count+1],
//                f64 params[] (per layer: weight row-major, then bias)
//   per extra:   u64 length, f64 values[length]

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "grlhf/mlp.hpp"

namespace grlhf {

enum class CheckpointKind : std::uint32_t { RewardEnsemble = 1, Policy = 2 };

struct NetworkBlob {
  std::uint64_t seed = 0;
  std::vector<std::uint32_t> sizes;
  Eigen::VectorXd parameters;
};

struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;
  CheckpointKind kind = CheckpointKind::RewardEnsemble;
  std::vector<NetworkBlob> networks;
  std::vector<Eigen::VectorXd> extras;
};

NetworkBlob to_blob(const Mlp& net, std::uint64_t seed);
/// Rebuilds a network with the blob's layer sizes and parameters.
Mlp mlp_from_blob(const NetworkBlob& blob);

std::string encode_checkpoint(const Checkpoint& checkpoint);
Checkpoint decode_checkpoint(const std::string& bytes);
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Whole-file helpers shared by the persistence code.
std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& contents);

}  // namespace grlhf
