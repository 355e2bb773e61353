#include "rdgan/checkpoint.hpp"

#include <fstream>

namespace rdgan::checkpoint {
namespace {

Json tensor_to_json(const Tensor& t) { return Json{{"shape", t.shape()}, {"values", std::vector<double>(t.data().begin(), t.data().end())}}; }

Json params_to_json(const networks::ParamMap& params) {
  Json j = Json::object();
  for (const auto& [name, t] : params) j[name] = tensor_to_json(t);
  return j;
}

const Json& member(const Json& j, const std::string& key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) throw CheckpointError("checkpoint is missing '" + where + key + "'");
  return j[key];
}

Tensor tensor_from_json(const Json& j, const std::string& where) {
  try {
    Shape shape = member(j, "shape", where + ".").get<Shape>();
    std::vector<double> values = member(j, "values", where + ".").get<std::vector<double>>();
    if (values.size() != shape_size(shape))
      throw CheckpointError("checkpoint tensor '" + where + "' has " + std::to_string(values.size()) +
                            " values for shape " + shape_string(shape));
    return Tensor(std::move(shape), std::move(values));
  } catch (const Json::exception& e) {
    throw CheckpointError("checkpoint tensor '" + where + "': " + e.what());
  }
}

// Reads exactly the tensors the spec calls for, with their shapes checked.
networks::ParamMap params_from_json(const Json& j, const networks::NetSpec& spec, const std::string& where) {
  if (!j.is_object()) throw CheckpointError("checkpoint entry '" + where + "' is not an object");
  const auto shapes = networks::param_shapes(spec);
  if (j.size() != shapes.size())
    throw CheckpointError("checkpoint entry '" + where + "' has " + std::to_string(j.size()) + " tensors, expected " +
                          std::to_string(shapes.size()));
  networks::ParamMap out;
  for (const auto& [name, shape] : shapes) {
    Tensor t = tensor_from_json(member(j, name, where + "."), where + "." + name);
    if (t.shape() != shape)
      throw CheckpointError("checkpoint tensor '" + where + "." + name + "' has shape " + shape_string(t.shape()) +
                            ", expected " + shape_string(shape));
    out.emplace(name, std::move(t));
  }
  return out;
}

Json adam_to_json(const trainer::AdamState& s) {
  return Json{{"step", s.step}, {"m", params_to_json(s.m)}, {"v", params_to_json(s.v)}};
}

trainer::AdamState adam_from_json(const Json& j, const networks::NetSpec& spec, const std::string& where) {
  trainer::AdamState s;
  const Json& step = member(j, "step", where + ".");
  if (!step.is_number_integer()) throw CheckpointError("checkpoint entry '" + where + ".step' is not an integer");
  s.step = step.get<long>();
  // Moments exist only after the first step.
  if (s.step > 0) {
    s.m = params_from_json(member(j, "m", where + "."), spec, where + ".m");
    s.v = params_from_json(member(j, "v", where + "."), spec, where + ".v");
  }
  return s;
}

}  // namespace

Json to_json(const config::ExperimentConfig& cfg, const trainer::TrainState& state) {
  Json j;
  j["format_version"] = kFormatVersion;
  j["config_echo"] = config::to_json(cfg);
  j["iteration"] = state.iteration;
  j["rng_seed"] = cfg.train.seed;
  j["nets"] = {{"generator", params_to_json(state.generator.live)},
               {"discriminator", params_to_json(state.discriminator.live)}};
  j["ema"] = Json::object();
  if (state.generator.ema) j["ema"]["generator"] = params_to_json(*state.generator.ema);
  j["adam_state"] = {{"generator", adam_to_json(state.adam_g)}, {"discriminator", adam_to_json(state.adam_d)}};
  return j;
}

Checkpoint from_json(const Json& doc) {
  if (!doc.is_object()) throw CheckpointError("checkpoint is not a JSON object");
  const Json& version = member(doc, "format_version", "");
  if (!version.is_number_integer() || version.get<int>() != kFormatVersion)
    throw CheckpointError("checkpoint format_version " + version.dump() + " is not supported (expected " +
                          std::to_string(kFormatVersion) + ")");

  Checkpoint ck;
  try {
    ck.config = config::parse_config(member(doc, "config_echo", ""));
  } catch (const config::ConfigError& e) {
    throw CheckpointError(std::string("checkpoint config_echo: ") + e.what());
  }
  const trainer::TrainConfig& cfg = ck.config.train;
  const Json& iteration = member(doc, "iteration", "");
  if (!iteration.is_number_integer()) throw CheckpointError("checkpoint 'iteration' is not an integer");

  trainer::TrainState& st = ck.state;
  st.iteration = iteration.get<long>();
  st.rng = trainer::Rng(cfg.seed);
  const Json& nets = member(doc, "nets", "");
  st.generator.spec = cfg.generator_spec();
  st.generator.live = params_from_json(member(nets, "generator", "nets."), st.generator.spec, "nets.generator");
  st.discriminator.spec = cfg.discriminator_spec();
  st.discriminator.live =
      params_from_json(member(nets, "discriminator", "nets."), st.discriminator.spec, "nets.discriminator");
  const Json& ema = member(doc, "ema", "");
  if (ema.contains("generator"))
    st.generator.ema = params_from_json(ema["generator"], st.generator.spec, "ema.generator");
  const Json& adam = member(doc, "adam_state", "");
  st.adam_g = adam_from_json(member(adam, "generator", "adam_state."), st.generator.spec, "adam_state.generator");
  st.adam_d = adam_from_json(member(adam, "discriminator", "adam_state."), st.discriminator.spec,
                             "adam_state.discriminator");
  return ck;
}

void save(const std::string& path, const config::ExperimentConfig& cfg, const trainer::TrainState& state) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write '" + path + "'");
  out << to_json(cfg, state).dump() << "\n";
  if (!out) throw CheckpointError("failed writing '" + path + "'");
}

Checkpoint load(const std::string& path) {
  std::string text;
  try {
    text = config::read_file(path);
  } catch (const config::ConfigError& e) {
    throw CheckpointError(e.what());
  }
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw CheckpointError(std::string("checkpoint is not valid JSON: ") + e.what());
  }
  return from_json(doc);
}

}  // namespace rdgan::checkpoint
