#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "adprog/optim.hpp"
#include "adprog/params.hpp"
#include "adprog/random.hpp"

namespace adprog {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Everything needed to resume training bit-exactly. Byte layout is
/// described in docs/checkpoint_format.md.
struct Checkpoint {
  std::string kind;  // "extractor" or "predictor"
  nlohmann::json architecture = nlohmann::json::object();
  std::uint64_t epoch = 0;
  std::uint64_t fold = 0;
  std::string rng_state;  // textual mt19937_64 state
  nlohmann::json meta = nlohmann::json::object();
  std::vector<std::pair<std::string, Tensor>> tensors;
  std::map<std::string, AdamMoments> moments;

  const Tensor& tensor(const std::string& name) const;
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::string& bytes);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Copies of the current values (detached) of every parameter.
std::vector<std::pair<std::string, Tensor>> snapshot(const ParamList& params);
// Writes stored values into the parameters by name; every parameter must be
// present with a matching shape.
void load_params(const ParamList& params, const std::vector<std::pair<std::string, Tensor>>& tensors);

std::string rng_to_string(const Rng& rng);
Rng rng_from_string(const std::string& state);

}  // namespace adprog
