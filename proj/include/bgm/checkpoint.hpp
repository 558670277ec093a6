#pragma once

#include "bgm/data.hpp"
#include "bgm/trainer.hpp"

#include <json.hpp>

#include <string>

namespace bgm {

// On-disk layout:
//   line 1  "BGM-CHECKPOINT"
//   line 2  compact JSON header (format_version, layer_dims, d_z, p, column
//           statistics, decoder settings, config echo, array table)
//   payload little-endian float64 arrays: mu_phi[d], rho_phi[d],
//           latents[N * d_z] (row-major)
struct Checkpoint {
  GenerativeModel model;
  RowMatrix latents;
  ColumnStats stats;
  nlohmann::json config = nlohmann::json::object();
  std::string created;  // informational timestamp, not part of the payload
};

inline constexpr int kCheckpointVersion = 1;

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::string& bytes);

// The byte range after the header line; identical for identical models.
std::string checkpoint_payload(const std::string& bytes);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace bgm
