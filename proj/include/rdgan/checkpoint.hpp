#ifndef RDGAN_CHECKPOINT_HPP_
#define RDGAN_CHECKPOINT_HPP_

// Training state as a JSON document:
//
//   {"format_version": 1, "config_echo": {...}, "iteration": N, "rng_seed": S,
//    "nets": {"generator": {name: {"shape": [...], "values": [...]}}, "discriminator": {...}},
//    "ema": {"generator": {...}},
//    "adam_state": {"generator": {"step": n, "m": {...}, "v": {...}}, "discriminator": {...}}}
//
// Doubles are written in shortest round-trip form, so load(save(x)) restores
// every parameter bit for bit.

#include <stdexcept>
#include <string>

#include "json.hpp"
#include "rdgan/config.hpp"
#include "rdgan/trainer.hpp"

namespace rdgan::checkpoint {

using Json = nlohmann::json;

inline constexpr int kFormatVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Checkpoint {
  config::ExperimentConfig config;
  trainer::TrainState state;
};

Json to_json(const config::ExperimentConfig& cfg, const trainer::TrainState& state);
// Throws CheckpointError on a version mismatch, a missing entry or a tensor
// whose shape does not match the configured nets.
Checkpoint from_json(const Json& doc);

void save(const std::string& path, const config::ExperimentConfig& cfg, const trainer::TrainState& state);
Checkpoint load(const std::string& path);

}  // namespace rdgan::checkpoint

#endif  // RDGAN_CHECKPOINT_HPP_
