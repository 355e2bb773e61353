#include "rdgan/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "rdgan/checkpoint.hpp"
#include "rdgan/config.hpp"
#include "rdgan/conjugates.hpp"
#include "rdgan/data_metrics.hpp"
#include "rdgan/trainer.hpp"
#include "rdgan/uot_oracle.hpp"

namespace rdgan::cli {
namespace {

using Json = nlohmann::json;

constexpr std::size_t kEvalCleanDraw = 50000;
constexpr std::size_t kHistogramBins = 50;
constexpr double kUotRelTolerance = 1e-3;

// Input problems that should end the command with exit code 1.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw InputError("failed writing '" + path.string() + "'");
}

// JSON number when finite, otherwise its text ("inf", "nan").
Json number_or_text(double x) {
  if (std::isfinite(x)) return x;
  return format_double(x);
}

Json parse_json(const std::string& text, const std::string& what) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw InputError(what + " is not valid JSON: " + e.what());
  }
}

std::string metrics_csv(const std::vector<trainer::MetricsRow>& rows) {
  std::string s = "iter,loss_d,loss_g,outlier_fraction,w1_clean\n";
  for (const auto& r : rows) {
    s += std::to_string(r.iter) + "," + format_double(r.loss_d) + "," + format_double(r.loss_g) + "," +
         format_double(r.outlier_fraction) + "," + format_double(r.w1_clean) + "\n";
  }
  return s;
}

std::string samples_csv(const Tensor& samples) {
  const std::size_t d = samples.cols();
  std::string s;
  for (std::size_t j = 0; j < d; ++j) s += (j ? ",x" : "x") + std::to_string(j);
  s += "\n";
  for (std::size_t i = 0; i < samples.rows(); ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      if (j) s += ",";
      s += format_double(samples.at(i, j));
    }
    s += "\n";
  }
  return s;
}

std::optional<double> parse_number(std::string_view text) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r')) text.remove_suffix(1);
  if (text.empty()) return std::nullopt;
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) return std::nullopt;
  return v;
}

// Reads a numeric CSV; a first line that does not parse as numbers is taken
// as the header.
Tensor read_samples_csv(const std::string& path) {
  std::string text;
  try {
    text = config::read_file(path);
  } catch (const config::ConfigError& e) {
    throw InputError(e.what());
  }
  std::istringstream in(text);
  std::string line;
  std::vector<double> values;
  std::size_t cols = 0, rows = 0, line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    std::vector<std::string> fields;
    std::stringstream ls(line);
    std::string field;
    while (std::getline(ls, field, ',')) fields.push_back(field);
    std::vector<double> row;
    bool numeric = true;
    for (const auto& f : fields) {
      const auto v = parse_number(f);
      if (!v) {
        numeric = false;
        break;
      }
      row.push_back(*v);
    }
    if (!numeric) {
      if (rows == 0 && cols == 0 && line_no == 1) continue;  // header
      throw InputError(path + ":" + std::to_string(line_no) + ": non-numeric field");
    }
    if (rows == 0) cols = row.size();
    if (row.size() != cols)
      throw InputError(path + ":" + std::to_string(line_no) + ": expected " + std::to_string(cols) + " fields, got " +
                       std::to_string(row.size()));
    values.insert(values.end(), row.begin(), row.end());
    ++rows;
  }
  if (rows == 0) throw InputError(path + ": no samples");
  return Tensor({rows, cols}, std::move(values));
}

int cmd_train(const std::string& config_path, const std::string& out_flag, std::optional<std::uint64_t> seed,
              std::ostream& out) {
  config::ExperimentConfig cfg = config::load_config(config_path);
  if (seed) cfg.train.seed = *seed;
  if (!out_flag.empty()) cfg.out_dir = out_flag;
  if (cfg.out_dir.empty()) throw InputError("no output directory: pass --out or set out_dir in the config");

  const std::filesystem::path dir(cfg.out_dir);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw InputError("cannot create '" + dir.string() + "': " + ec.message());
  write_file(dir / "config_echo.json", config::to_json(cfg).dump(2) + "\n");

  const trainer::TrainResult result = trainer::train(cfg.train);
  write_file(dir / "metrics.csv", metrics_csv(result.metrics));

  if (result.failure) {
    const trainer::Failure& f = *result.failure;
    Json j{{"iteration", f.iteration},
           {"phase", f.phase},
           {"loss", f.loss},
           {"loss_d", number_or_text(f.loss_d)},
           {"loss_g", number_or_text(f.loss_g)},
           {"reason", f.reason}};
    std::visit(
        [&](const auto& l) {
          using T = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<T, trainer::RdganLoss>) {
            j["psi1"] = conjugates::to_string(l.psi1);
            j["psi2"] = conjugates::to_string(l.psi2);
          } else if constexpr (std::is_same_v<T, trainer::PartialLoss>) {
            j["psi1"] = conjugates::to_string(l.inner.psi1);
            j["psi2"] = conjugates::to_string(l.inner.psi2);
          }
        },
        cfg.train.loss);
    write_file(dir / "failure.json", j.dump(2) + "\n");
    out << "training stopped at iteration " << f.iteration << ": " << f.reason << "\n";
    return kExitNumerical;
  }

  checkpoint::save((dir / "checkpoint.json").string(), cfg, result.state);
  out << "trained " << result.state.iteration << " iterations into " << dir.string() << "\n";
  return kExitOk;
}

int cmd_sample(const std::string& ckpt_path, std::size_t n, bool use_ema, const std::string& out_path,
               std::uint64_t seed) {
  if (n == 0) throw InputError("--n must be at least 1");
  const checkpoint::Checkpoint ck = checkpoint::load(ckpt_path);
  trainer::Rng rng(seed);
  const Tensor samples = trainer::sample(ck.state.generator, ck.config.train.schedule(), n, use_ema, rng);
  write_file(out_path, samples_csv(samples));
  return kExitOk;
}

int cmd_eval(const std::string& samples_path, const std::string& spec_path, std::uint64_t seed, std::ostream& out) {
  const data::MixtureSpec spec = config::load_dataset(spec_path);
  const Tensor samples = read_samples_csv(samples_path);
  if (samples.cols() != spec.dim)
    throw InputError("samples have " + std::to_string(samples.cols()) + " columns but the dataset has dimension " +
                     std::to_string(spec.dim));

  data::Rng rng(seed);
  const Tensor clean = data::sample_mixture(spec.clean_only(), kEvalCleanDraw, rng);

  double lo = std::numeric_limits<double>::infinity(), hi = -lo, widest = 0.0;
  for (const auto& c : spec.components) {
    lo = std::min(lo, c.mean[0]);
    hi = std::max(hi, c.mean[0]);
    widest = std::max(widest, c.std);
  }
  lo -= 4.0 * widest;
  hi += 4.0 * widest;
  const auto means = spec.clean_means();

  Json report;
  report["n"] = samples.rows();
  report["outlier_fraction"] =
      spec.has_outliers() ? data::outlier_fraction(samples, data::NearestComponent{spec}) : 0.0;
  report["w1_clean"] = data::marginal_wasserstein1(samples, clean);
  report["modes_covered"] = data::mode_coverage(samples, means, 4.0 * spec.max_clean_std());
  report["modes_total"] = means.size();
  report["histogram"] = data::histogram(data::column(samples, 0), kHistogramBins, lo, hi);
  report["histogram_range"] = {lo, hi};
  out << report.dump() << "\n";
  return kExitOk;
}

std::vector<double> json_vector(const Json& j, const std::string& field) {
  if (!j.is_array()) throw InputError("instance field '" + field + "' must be an array of numbers");
  std::vector<double> v;
  for (const auto& x : j) {
    if (!x.is_number()) throw InputError("instance field '" + field + "' must be an array of numbers");
    v.push_back(x.get<double>());
  }
  return v;
}

int cmd_uot_check(const std::string& path, std::ostream& out) {
  std::string text;
  try {
    text = config::read_file(path);
  } catch (const config::ConfigError& e) {
    throw InputError(e.what());
  }
  const Json doc = parse_json(text, "instance");
  if (!doc.is_object()) throw InputError("instance must be a JSON object");
  for (const auto& item : doc.items()) {
    if (item.key() != "mu" && item.key() != "nu" && item.key() != "cost" && item.key() != "psi1" &&
        item.key() != "psi2")
      throw InputError("unknown instance key '" + item.key() + "'");
  }
  for (const char* key : {"mu", "nu", "cost"})
    if (!doc.contains(key)) throw InputError(std::string("instance is missing '") + key + "'");

  const uot::Measure mu = json_vector(doc["mu"], "mu");
  const uot::Measure nu = json_vector(doc["nu"], "nu");
  const Json& cost_json = doc["cost"];
  if (!cost_json.is_array() || cost_json.size() != mu.size())
    throw InputError("instance 'cost' must have one row per mu atom");
  Tensor cost({mu.size(), nu.size()});
  for (std::size_t i = 0; i < mu.size(); ++i) {
    const auto row = json_vector(cost_json[i], "cost[" + std::to_string(i) + "]");
    if (row.size() != nu.size()) throw InputError("instance 'cost' rows must have one entry per nu atom");
    for (std::size_t j = 0; j < nu.size(); ++j) cost.at(i, j) = row[j];
  }
  auto kind = [&](const char* key) {
    if (!doc.contains(key)) return conjugates::ConjugateKind::softplus();
    if (!doc[key].is_string()) throw InputError(std::string("instance field '") + key + "' must be a string");
    try {
      return conjugates::parse_kind(doc[key].get<std::string>());
    } catch (const std::invalid_argument& e) {
      throw InputError(std::string("instance field '") + key + "': " + e.what());
    }
  };
  const auto psi1 = kind("psi1");
  const auto psi2 = kind("psi2");
  try {
    uot::validate_measure(mu, "mu");
    uot::validate_measure(nu, "nu");
    uot::validate_cost(cost, mu.size(), nu.size());
  } catch (const std::invalid_argument& e) {
    throw InputError(e.what());
  }

  const bool linear1 = psi1.family == conjugates::Family::kLinear;
  const bool linear2 = psi2.family == conjugates::Family::kLinear;
  Json report;
  bool passed = false;
  if (linear1 || linear2) {
    if (!(psi1 == psi2)) throw InputError("a linear conjugate must be used for both psi1 and psi2");
    uot::LinearReductionReport rep;
    try {
      rep = uot::verify_linear_reduction(psi1.a, psi1.b, mu, nu, cost);
    } catch (const std::invalid_argument& e) {
      throw InputError(e.what());
    }
    const auto dual = uot::semidual_uot(mu, nu, cost, psi1, psi2);
    const double gap = std::abs(rep.uot_value - dual.value);
    passed = rep.passed;
    report = {{"primal", rep.uot_value},
              {"semidual", dual.value},
              {"gap", gap},
              {"transport", rep.transport},
              {"ot", rep.ot_cost},
              {"transport_error", rep.transport_error},
              {"marginal_error", rep.marginal_error}};
    if (!rep.detail.empty()) report["detail"] = rep.detail;
  } else {
    const auto primal = uot::primal_uot(mu, nu, cost, psi1, psi2);
    const auto dual = uot::semidual_uot(mu, nu, cost, psi1, psi2);
    const double gap = std::abs(primal.value - dual.value);
    passed = gap <= kUotRelTolerance * (1.0 + std::abs(primal.value));
    report = {{"primal", primal.value}, {"semidual", dual.value}, {"gap", gap}};
  }
  report["passed"] = passed;
  out << report.dump() << "\n";
  return passed ? kExitOk : kExitNumerical;
}

int cmd_conjugate_table(const std::string& name, double lo, double hi, double step, std::ostream& out) {
  if (!(step > 0.0)) throw InputError("--step must be positive");
  if (!(hi >= lo)) throw InputError("--hi must not be below --lo");
  conjugates::ConjugateKind kind;
  try {
    kind = conjugates::parse_kind(name);
  } catch (const std::invalid_argument& e) {
    throw InputError(e.what());
  }
  std::string s = "x,conjugate,conjugate_grad,primal\n";
  for (double x : conjugates::uniform_grid(lo, hi, step)) {
    const auto primal = conjugates::primal_eval(kind, x);
    s += format_double(x) + "," + format_double(conjugates::conjugate_eval(kind, x)) + "," +
         format_double(conjugates::conjugate_grad(kind, x)) + "," +
         (primal.is_finite() ? format_double(primal.value()) : std::string("inf")) + "\n";
  }
  out << s;
  return kExitOk;
}

}  // namespace

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, ptr);
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Diffusion GAN training with an unbalanced optimal transport objective"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  std::optional<std::uint64_t> seed;
  auto* train = app.add_subcommand("train", "Train a generator/discriminator pair from a JSON config");
  train->add_option("--config", config_path, "Experiment config (JSON)")->required();
  train->add_option("--out", out_dir, "Output directory (overrides out_dir in the config)");
  train->add_option("--seed", seed, "Seed (overrides the config seed)");

  std::string ckpt_path, sample_out;
  std::size_t n = 0;
  bool use_ema = true;
  std::uint64_t sample_seed = 0;
  auto* sample = app.add_subcommand("sample", "Draw samples from a checkpoint");
  sample->add_option("--checkpoint", ckpt_path, "checkpoint.json")->required();
  sample->add_option("--n", n, "Number of samples")->required();
  sample->add_option("--ema", use_ema, "Use the EMA generator weights (true/false)");
  sample->add_option("--out", sample_out, "Output CSV")->required();
  sample->add_option("--seed", sample_seed, "Sampling seed");

  std::string samples_path, spec_path;
  std::uint64_t eval_seed = 0;
  auto* eval = app.add_subcommand("eval", "Score a sample CSV against a dataset spec");
  eval->add_option("--samples", samples_path, "Sample CSV")->required();
  eval->add_option("--dataset-spec", spec_path, "Dataset spec (JSON)")->required();
  eval->add_option("--seed", eval_seed, "Seed for the reference clean draw");

  std::string instance_path;
  auto* check = app.add_subcommand("uot-check", "Solve a small UOT instance in primal and semi-dual form");
  check->add_option("--instance", instance_path, "Instance JSON")->required();

  std::string kind_name;
  double lo = -5.0, hi = 5.0, step = 0.1;
  auto* table = app.add_subcommand("conjugate-table", "Tabulate a conjugate pair as CSV");
  table->add_option("--kind", kind_name, "softplus, chi2, kl or linear:a:b")->required();
  table->add_option("--lo", lo, "Grid start");
  table->add_option("--hi", hi, "Grid end");
  table->add_option("--step", step, "Grid spacing");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  }

  try {
    if (*train) return cmd_train(config_path, out_dir, seed, out);
    if (*sample) return cmd_sample(ckpt_path, n, use_ema, sample_out, sample_seed);
    if (*eval) return cmd_eval(samples_path, spec_path, eval_seed, out);
    if (*check) return cmd_uot_check(instance_path, out);
    if (*table) return cmd_conjugate_table(kind_name, lo, hi, step, out);
  } catch (const InputError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const config::ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const checkpoint::CheckpointError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::runtime_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
  return kExitInput;
}

}  // namespace rdgan::cli
