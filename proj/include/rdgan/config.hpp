#ifndef RDGAN_CONFIG_HPP_
#define RDGAN_CONFIG_HPP_

// JSON experiment configuration. Every key is optional; a missing key keeps
// the TrainConfig default. Unknown keys are rejected at every level.
//
//   {
//     "loss": {"kind": "rdgan", "psi1": "softplus", "psi2": "softplus", "tau": 1e-3},
//     "T": 4, "beta_min": 0.1, "beta_max": 20,
//     "lr_g": 1.6e-4, "lr_d": 1.25e-4, "adam_beta1": 0.5, "adam_beta2": 0.9,
//     "r1_gamma": 0.02, "lazy_reg_every": 15, "ema_decay": 0.999,
//     "batch_size": 256, "iters": 20000, "seed": 0,
//     "dataset": "toy1d",
//     "hidden_dims": [128, 128], "latent_dim": 0, "time_embed_dim": 16,
//     "probe_every": 500, "probe_size": 2048,
//     "out_dir": "runs/toy"
//   }
//
// "loss.kind" is "rdgan", "ddgan" or "partial" (which also takes "k").
// "dataset" is "toy1d", "ring2d" or an explicit mixture:
//   {"dim": 1, "components": [{"mean": [1], "std": 0.1, "weight": 0.95, "clean": true}, ...]}

#include <stdexcept>
#include <string>

#include "json.hpp"
#include "rdgan/data_metrics.hpp"
#include "rdgan/trainer.hpp"

namespace rdgan::config {

using Json = nlohmann::json;

// Malformed or inconsistent configuration; the message names the field or
// the parse position.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
  trainer::TrainConfig train;
  std::string out_dir;
};

ExperimentConfig parse_config(const Json& doc);
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig load_config(const std::string& path);

// Fully resolved form: every field written out, defaults included. Parsing it
// back gives the same configuration.
Json to_json(const ExperimentConfig& cfg);

data::MixtureSpec parse_dataset(const Json& doc);
Json dataset_to_json(const data::MixtureSpec& spec);
data::MixtureSpec load_dataset(const std::string& path);

// Reads a whole file; throws ConfigError if it cannot be opened.
std::string read_file(const std::string& path);

}  // namespace rdgan::config

#endif  // RDGAN_CONFIG_HPP_
