#include "rdgan/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace rdgan::config {
namespace {

std::string join(const std::string& prefix, const std::string& key) {
  return prefix.empty() ? key : prefix + "." + key;
}

const char* type_name(const Json& j) { return j.type_name(); }

void expect_object(const Json& j, const std::string& field) {
  if (!j.is_object())
    throw ConfigError("config field '" + (field.empty() ? std::string("<root>") : field) +
                      "': expected an object, got " + type_name(j));
}

void reject_unknown(const Json& obj, const std::string& prefix, const std::set<std::string>& allowed) {
  for (const auto& item : obj.items()) {
    if (!allowed.count(item.key())) throw ConfigError("unknown config key '" + join(prefix, item.key()) + "'");
  }
}

double as_number(const Json& j, const std::string& field) {
  if (!j.is_number()) throw ConfigError("config field '" + field + "': expected a number, got " + type_name(j));
  return j.get<double>();
}

long long as_integer(const Json& j, const std::string& field) {
  if (!j.is_number_integer())
    throw ConfigError("config field '" + field + "': expected an integer, got " + type_name(j));
  if (j.is_number_unsigned()) return static_cast<long long>(j.get<unsigned long long>());
  return j.get<long long>();
}

std::string as_string(const Json& j, const std::string& field) {
  if (!j.is_string()) throw ConfigError("config field '" + field + "': expected a string, got " + type_name(j));
  return j.get<std::string>();
}

bool as_bool(const Json& j, const std::string& field) {
  if (!j.is_boolean()) throw ConfigError("config field '" + field + "': expected a boolean, got " + type_name(j));
  return j.get<bool>();
}

std::size_t as_size(const Json& j, const std::string& field) {
  const long long v = as_integer(j, field);
  if (v < 0) throw ConfigError("config field '" + field + "': must be nonnegative");
  return static_cast<std::size_t>(v);
}

conjugates::ConjugateKind as_conjugate(const Json& j, const std::string& field) {
  const std::string text = as_string(j, field);
  try {
    return conjugates::parse_kind(text);
  } catch (const std::exception& e) {
    throw ConfigError("config field '" + field + "': " + e.what());
  }
}

trainer::RdganLoss parse_rdgan(const Json& obj, const std::string& prefix) {
  trainer::RdganLoss loss;
  if (obj.contains("psi1")) loss.psi1 = as_conjugate(obj["psi1"], join(prefix, "psi1"));
  if (obj.contains("psi2")) loss.psi2 = as_conjugate(obj["psi2"], join(prefix, "psi2"));
  if (obj.contains("tau")) loss.tau = as_number(obj["tau"], join(prefix, "tau"));
  return loss;
}

trainer::LossKind parse_loss(const Json& obj) {
  const std::string prefix = "loss";
  expect_object(obj, prefix);
  const std::string kind = obj.contains("kind") ? as_string(obj["kind"], "loss.kind") : "rdgan";
  if (kind == "ddgan") {
    reject_unknown(obj, prefix, {"kind"});
    return trainer::DdganLoss{};
  }
  if (kind == "rdgan") {
    reject_unknown(obj, prefix, {"kind", "psi1", "psi2", "tau"});
    return parse_rdgan(obj, prefix);
  }
  if (kind == "partial") {
    reject_unknown(obj, prefix, {"kind", "psi1", "psi2", "tau", "k"});
    trainer::PartialLoss loss;
    if (!obj.contains("k")) throw ConfigError("config field 'loss.k': required for a partial loss");
    loss.k = static_cast<int>(as_integer(obj["k"], "loss.k"));
    loss.inner = parse_rdgan(obj, prefix);
    return loss;
  }
  throw ConfigError("config field 'loss.kind': unknown loss '" + kind + "' (expected rdgan, ddgan or partial)");
}

Json loss_to_json(const trainer::LossKind& loss) {
  return std::visit(
      [](const auto& l) -> Json {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, trainer::DdganLoss>) {
          return Json{{"kind", "ddgan"}};
        } else if constexpr (std::is_same_v<T, trainer::RdganLoss>) {
          return Json{{"kind", "rdgan"},
                      {"psi1", conjugates::to_string(l.psi1)},
                      {"psi2", conjugates::to_string(l.psi2)},
                      {"tau", l.tau}};
        } else {
          return Json{{"kind", "partial"},
                      {"k", l.k},
                      {"psi1", conjugates::to_string(l.inner.psi1)},
                      {"psi2", conjugates::to_string(l.inner.psi2)},
                      {"tau", l.inner.tau}};
        }
      },
      loss);
}

data::MixtureSpec parse_dataset_at(const Json& doc, const std::string& field) {
  if (doc.is_string()) {
    const std::string name = doc.get<std::string>();
    if (name == "toy1d") return data::MixtureSpec::toy_1d();
    if (name == "ring2d") return data::MixtureSpec::ring_2d();
    throw ConfigError("config field '" + field + "': unknown dataset '" + name + "' (expected toy1d or ring2d)");
  }
  expect_object(doc, field);
  reject_unknown(doc, field, {"dim", "components"});
  data::MixtureSpec spec;
  if (!doc.contains("dim")) throw ConfigError("config field '" + join(field, "dim") + "': required");
  spec.dim = as_size(doc["dim"], join(field, "dim"));
  if (!doc.contains("components") || !doc["components"].is_array())
    throw ConfigError("config field '" + join(field, "components") + "': expected an array");
  const auto& comps = doc["components"];
  for (std::size_t i = 0; i < comps.size(); ++i) {
    const std::string cf = join(field, "components[" + std::to_string(i) + "]");
    expect_object(comps[i], cf);
    reject_unknown(comps[i], cf, {"mean", "std", "weight", "clean"});
    data::Component c;
    if (!comps[i].contains("mean")) throw ConfigError("config field '" + join(cf, "mean") + "': required");
    const Json& mean = comps[i]["mean"];
    if (mean.is_array()) {
      for (std::size_t d = 0; d < mean.size(); ++d)
        c.mean.push_back(as_number(mean[d], join(cf, "mean[" + std::to_string(d) + "]")));
    } else {
      c.mean.push_back(as_number(mean, join(cf, "mean")));
    }
    if (comps[i].contains("std")) c.std = as_number(comps[i]["std"], join(cf, "std"));
    if (comps[i].contains("weight")) c.weight = as_number(comps[i]["weight"], join(cf, "weight"));
    if (comps[i].contains("clean")) c.clean = as_bool(comps[i]["clean"], join(cf, "clean"));
    spec.components.push_back(std::move(c));
  }
  try {
    spec.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("config field '" + field + "': " + e.what());
  }
  return spec;
}

Json parse_json_text(const std::string& text) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ConfigError(std::string("malformed JSON: ") + e.what());
  }
}

}  // namespace

ExperimentConfig parse_config(const Json& doc) {
  expect_object(doc, "");
  reject_unknown(doc, "",
                 {"loss", "T", "beta_min", "beta_max", "lr_g", "lr_d", "adam_beta1", "adam_beta2", "r1_gamma",
                  "lazy_reg_every", "ema_decay", "batch_size", "iters", "seed", "dataset", "hidden_dims",
                  "latent_dim", "time_embed_dim", "probe_every", "probe_size", "out_dir"});
  ExperimentConfig out;
  trainer::TrainConfig& c = out.train;
  auto number = [&](const char* key, double& dst) {
    if (doc.contains(key)) dst = as_number(doc[key], key);
  };
  auto integer = [&](const char* key, auto& dst) {
    if (doc.contains(key)) dst = static_cast<std::decay_t<decltype(dst)>>(as_integer(doc[key], key));
  };

  if (doc.contains("loss")) c.loss = parse_loss(doc["loss"]);
  integer("T", c.steps);
  number("beta_min", c.beta_min);
  number("beta_max", c.beta_max);
  number("lr_g", c.lr_g);
  number("lr_d", c.lr_d);
  number("adam_beta1", c.adam_beta1);
  number("adam_beta2", c.adam_beta2);
  number("r1_gamma", c.r1_gamma);
  integer("lazy_reg_every", c.lazy_reg_every);
  number("ema_decay", c.ema_decay);
  integer("batch_size", c.batch_size);
  integer("iters", c.iters);
  if (doc.contains("seed")) {
    const Json& s = doc["seed"];
    if (!s.is_number_integer() || (s.is_number_integer() && !s.is_number_unsigned() && s.get<long long>() < 0))
      throw ConfigError("config field 'seed': expected a nonnegative integer");
    c.seed = s.get<std::uint64_t>();
  }
  if (doc.contains("dataset")) c.dataset = parse_dataset_at(doc["dataset"], "dataset");
  if (doc.contains("hidden_dims")) {
    const Json& h = doc["hidden_dims"];
    if (!h.is_array()) throw ConfigError("config field 'hidden_dims': expected an array of integers");
    c.hidden_dims.clear();
    for (std::size_t i = 0; i < h.size(); ++i)
      c.hidden_dims.push_back(as_size(h[i], "hidden_dims[" + std::to_string(i) + "]"));
  }
  if (doc.contains("latent_dim")) c.latent_dim = as_size(doc["latent_dim"], "latent_dim");
  if (doc.contains("time_embed_dim")) c.time_embed_dim = as_size(doc["time_embed_dim"], "time_embed_dim");
  integer("probe_every", c.probe_every);
  integer("probe_size", c.probe_size);
  if (doc.contains("out_dir")) out.out_dir = as_string(doc["out_dir"], "out_dir");

  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
  return out;
}

ExperimentConfig parse_config_text(const std::string& text) { return parse_config(parse_json_text(text)); }

ExperimentConfig load_config(const std::string& path) { return parse_config_text(read_file(path)); }

Json to_json(const ExperimentConfig& cfg) {
  const trainer::TrainConfig& c = cfg.train;
  Json j;
  j["loss"] = loss_to_json(c.loss);
  j["T"] = c.steps;
  j["beta_min"] = c.beta_min;
  j["beta_max"] = c.beta_max;
  j["lr_g"] = c.lr_g;
  j["lr_d"] = c.lr_d;
  j["adam_beta1"] = c.adam_beta1;
  j["adam_beta2"] = c.adam_beta2;
  j["r1_gamma"] = c.r1_gamma;
  j["lazy_reg_every"] = c.lazy_reg_every;
  j["ema_decay"] = c.ema_decay;
  j["batch_size"] = c.batch_size;
  j["iters"] = c.iters;
  j["seed"] = c.seed;
  j["dataset"] = dataset_to_json(c.dataset);
  j["hidden_dims"] = c.hidden_dims;
  j["latent_dim"] = c.latent_dim;
  j["time_embed_dim"] = c.time_embed_dim;
  j["probe_every"] = c.probe_every;
  j["probe_size"] = c.probe_size;
  j["out_dir"] = cfg.out_dir;
  return j;
}

data::MixtureSpec parse_dataset(const Json& doc) { return parse_dataset_at(doc, "dataset"); }

Json dataset_to_json(const data::MixtureSpec& spec) {
  Json comps = Json::array();
  for (const auto& c : spec.components)
    comps.push_back({{"mean", c.mean}, {"std", c.std}, {"weight", c.weight}, {"clean", c.clean}});
  return Json{{"dim", spec.dim}, {"components", comps}};
}

data::MixtureSpec load_dataset(const std::string& path) { return parse_dataset(parse_json_text(read_file(path))); }

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace rdgan::config
