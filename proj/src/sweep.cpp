// Copyright 2026 The dynrollout Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "dynrollout/sweep.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <fstream>
#include <functional>
#include <mutex>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "json.hpp"

namespace dynrollout {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(s);
  while (std::getline(is, item, sep)) out.push_back(trim(item));
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

// Shortest round-trip representation; used for grid axis values.
std::string short_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

double parse_double(const std::string& key, const std::string& s) {
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
    throw std::invalid_argument("config: " + key + ": not a number: '" + s + "'");
  }
  return v;
}

std::uint64_t parse_u64(const std::string& key, const std::string& s) {
  std::uint64_t v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
    throw std::invalid_argument("config: " + key + ": not a non-negative integer: '" + s + "'");
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& s) {
  if (s == "true" || s == "1" || s == "on" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "off" || s == "no") return false;
  throw std::invalid_argument("config: " + key + ": not a boolean: '" + s + "'");
}

std::vector<std::size_t> parse_hidden(const std::string& key, const std::string& s) {
  std::vector<std::size_t> widths;
  if (s == "none") return widths;
  for (const auto& w : split(s, 'x')) widths.push_back(parse_u64(key, w));
  return widths;
}

std::string hidden_string(const std::vector<std::size_t>& widths) {
  if (widths.empty()) return "none";
  std::string out;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    if (i) out += 'x';
    out += std::to_string(widths[i]);
  }
  return out;
}

template <class T, class F>
std::string join(const std::vector<T>& values, F&& fmt) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ", ";
    out += fmt(values[i]);
  }
  return out;
}

const char* kind_string(SweepKind k) {
  switch (k) {
    case SweepKind::kRollout: return "rollout";
    case SweepKind::kDataTable: return "data_table";
    case SweepKind::kSnr: return "snr";
  }
  return "rollout";
}

const char* family_string(SystemFamily f) {
  switch (f) {
    case SystemFamily::kStateSpace: return "state_space";
    case SystemFamily::kLorenz: return "lorenz";
    case SystemFamily::kCartpole: return "cartpole";
  }
  return "state_space";
}

const std::set<std::string>& known_models() {
  static const std::set<std::string> names = {"ZERO", "PERSIST", "LIN", "D",  "D-S", "P",
                                              "P-S",  "PE",      "PE-S", "DE", "DE-S"};
  return names;
}

bool is_network(const std::string& model) {
  return model != "ZERO" && model != "PERSIST" && model != "LIN";
}

std::string formulation_of(const std::string& model) {
  if (!is_network(model)) return "";
  return model.ends_with("-S") ? to_string(Formulation::kTrueState)
                               : to_string(Formulation::kDelta);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void write_atomically(const std::filesystem::path& path,
                      const std::function<void(std::ostream&)>& body) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + tmp.string());
    body(os);
    if (!os) throw std::runtime_error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::vector<SystemVariant> system_variants(const SweepConfig& cfg) {
  std::vector<SystemVariant> out;
  switch (cfg.system) {
    case SystemFamily::kStateSpace:
      for (double pole : cfg.poles)
        for (double noise : cfg.noise_mults)
          for (std::size_t dim : cfg.dims)
            for (bool reg : cfg.regularized)
              for (bool zero : cfg.zero_inputs) {
                SystemVariant v;
                v.pole = pole;
                v.noise_mult = noise;
                v.dim = dim;
                v.regularized = reg;
                v.zero_inputs = zero;
                out.push_back(v);
              }
      break;
    case SystemFamily::kLorenz:
      for (const auto& r : cfg.lorenz_init) {
        SystemVariant v;
        v.dim = 3;
        v.lorenz = r;
        out.push_back(v);
      }
      break;
    case SystemFamily::kCartpole: {
      SystemVariant v;
      v.dim = 4;
      out.push_back(v);
      break;
    }
  }
  return out;
}

std::vector<ModelVariant> model_variants(const SweepConfig& cfg) {
  std::vector<ModelVariant> out;
  for (const auto& m : cfg.models)
    for (const auto& h : cfg.hidden)
      for (bool norm : cfg.normalization)
        for (bool expand : cfg.angle_expand) out.push_back({m, h, norm, expand});
  return out;
}

constexpr std::size_t kCartpoleAngle = 2;

std::vector<Trajectory> make_trajectories(const SweepConfig& cfg, const SystemVariant& v,
                                          std::size_t n, std::size_t horizon,
                                          std::uint64_t seed) {
  Rng rng(seed);
  switch (cfg.system) {
    case SystemFamily::kStateSpace: {
      const LinearSystem proto = sample_state_space(v.pole, v.dim, v.noise_mult, v.regularized,
                                                    v.zero_inputs, rng);
      return generate_dataset(proto, RandomUniformPolicy{}, n, horizon, rng, true);
    }
    case SystemFamily::kLorenz:
      return generate_lorenz_dataset(v.lorenz.lo, v.lorenz.hi, n, horizon, LorenzParams{}, rng);
    case SystemFamily::kCartpole:
      return generate_cartpole_dataset(Cartpole{}, n, horizon, rng);
  }
  throw std::logic_error("unknown system family");
}

struct ModeResult {
  std::optional<ErrorProfile> profile;
  std::string error;
};

// Trains the cell's model once and evaluates it under every requested mode.
// Training failures propagate; an evaluation failure only affects its mode.
std::vector<ModeResult> run_unit(const SweepConfig& cfg, const CellDescriptor& first,
                                 const std::vector<std::string>& modes) {
  std::vector<Trajectory> train = make_trajectories(cfg, first.system, first.train_trajs,
                                                    cfg.train_horizon, first.train_seed);
  std::vector<Trajectory> test =
      make_trajectories(cfg, first.system, cfg.test_trajs, cfg.test_horizon, first.test_seed);
  if (first.model.angle_expand) {
    const std::size_t idx[] = {kCartpoleAngle};
    for (auto& t : train) t = expand_trajectory(t, idx);
    for (auto& t : test) t = expand_trajectory(t, idx);
  }
  const DynamicsModel model =
      train_named_model(first.model.model, make_dataset(train), cfg.epochs, first.model.hidden,
                        first.model.normalization, cfg.ensemble_size, first.model_seed);
  std::vector<ModeResult> out;
  for (const auto& mode : modes) {
    ModeResult r;
    try {
      if (mode == "logged") {
        r.profile = evaluate(model, test, LoggedActions{});
      } else if (mode == "recomputed") {
        if (first.model.angle_expand) {
          throw std::invalid_argument(
              "recomputed actions are not defined on angle-expanded states");
        }
        r.profile = evaluate(model, test, RecomputedActions{std::nullopt,
                                                            derive_seed(first.model_seed, 1)});
      } else {
        r.profile = one_step_error_profile(model, test);
      }
    } catch (const std::exception& e) {
      r.error = e.what();
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace

DynamicsModel train_named_model(const std::string& name, const Dataset& data, std::size_t epochs,
                                const std::vector<std::size_t>& hidden, bool normalization,
                                std::size_t ensemble_size, std::uint64_t seed) {
  if (!known_models().count(name)) throw std::invalid_argument("unknown model '" + name + "'");
  if (name == "ZERO") return ZeroModel{data.state_dim, false};
  if (name == "PERSIST") return ZeroModel{data.state_dim, true};
  if (name == "LIN") return fit_linear_model(data);
  const bool probabilistic = name.starts_with("P");
  TrainConfig tc = probabilistic ? TrainConfig::probabilistic() : TrainConfig::deterministic();
  tc.epochs = epochs;
  tc.hidden = hidden;
  tc.normalization_enabled = normalization;
  tc.ensemble_size = ensemble_size;
  tc.formulation = name.ends_with("-S") ? Formulation::kTrueState : Formulation::kDelta;
  tc.seed = seed;
  if (name.starts_with("PE") || name.starts_with("DE")) {
    return train_ensemble(data, tc, probabilistic);
  }
  return probabilistic ? train_probabilistic(data, tc) : train_deterministic(data, tc);
}

std::string ModelVariant::label(const std::vector<std::size_t>& default_hidden) const {
  std::string out = model;
  if (is_network(model) && hidden != default_hidden) out += "/h" + hidden_string(hidden);
  if (is_network(model) && !normalization) out += "/nonorm";
  if (angle_expand) out += "/sincos";
  return out;
}

SweepConfig SweepConfig::parse(std::istream& is) {
  SweepConfig cfg;
  bool have_seed = false;
  std::set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!seen.insert(key).second) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": duplicate key " + key);
    }
    const std::vector<std::string> items = value.empty() ? std::vector<std::string>{}
                                                         : split(value, ',');
    auto doubles = [&] {
      std::vector<double> v;
      for (const auto& s : items) v.push_back(parse_double(key, s));
      return v;
    };
    auto sizes = [&] {
      std::vector<std::size_t> v;
      for (const auto& s : items) v.push_back(parse_u64(key, s));
      return v;
    };
    auto bools = [&] {
      std::vector<bool> v;
      for (const auto& s : items) v.push_back(parse_bool(key, s));
      return v;
    };
    if (key == "name") {
      cfg.name = value;
    } else if (key == "kind") {
      if (value == "rollout") cfg.kind = SweepKind::kRollout;
      else if (value == "data_table") cfg.kind = SweepKind::kDataTable;
      else if (value == "snr") cfg.kind = SweepKind::kSnr;
      else throw std::invalid_argument("config: unknown kind '" + value + "'");
    } else if (key == "system") {
      if (value == "state_space") cfg.system = SystemFamily::kStateSpace;
      else if (value == "lorenz") cfg.system = SystemFamily::kLorenz;
      else if (value == "cartpole") cfg.system = SystemFamily::kCartpole;
      else throw std::invalid_argument("config: unknown system '" + value + "'");
    } else if (key == "poles") {
      cfg.poles = doubles();
    } else if (key == "noise_mults") {
      cfg.noise_mults = doubles();
    } else if (key == "dims") {
      cfg.dims = sizes();
    } else if (key == "regularized") {
      cfg.regularized = bools();
    } else if (key == "zero_inputs") {
      cfg.zero_inputs = bools();
    } else if (key == "lorenz_init") {
      cfg.lorenz_init.clear();
      for (const auto& s : items) {
        const auto parts = split(s, ':');
        if (parts.size() != 2) throw std::invalid_argument("config: lorenz_init expects lo:hi");
        cfg.lorenz_init.push_back({parse_double(key, parts[0]), parse_double(key, parts[1])});
      }
    } else if (key == "models") {
      cfg.models = items;
    } else if (key == "hidden") {
      cfg.hidden.clear();
      for (const auto& s : items) cfg.hidden.push_back(parse_hidden(key, s));
    } else if (key == "normalization") {
      cfg.normalization = bools();
    } else if (key == "angle_expand") {
      cfg.angle_expand = bools();
    } else if (key == "ensemble_size") {
      cfg.ensemble_size = parse_u64(key, value);
    } else if (key == "epochs") {
      cfg.epochs = parse_u64(key, value);
    } else if (key == "train_trajs") {
      cfg.train_trajs = sizes();
    } else if (key == "test_trajs") {
      cfg.test_trajs = parse_u64(key, value);
    } else if (key == "train_horizon") {
      cfg.train_horizon = parse_u64(key, value);
    } else if (key == "test_horizon") {
      cfg.test_horizon = parse_u64(key, value);
    } else if (key == "modes") {
      cfg.modes = items;
    } else if (key == "table_systems") {
      cfg.table_systems = parse_u64(key, value);
    } else if (key == "snr_dts") {
      cfg.snr_dts = doubles();
    } else if (key == "snr_noise_sigma") {
      cfg.snr_noise_sigma = parse_double(key, value);
    } else if (key == "snr_trajectories") {
      cfg.snr_trajectories = parse_u64(key, value);
    } else if (key == "snr_horizon") {
      cfg.snr_horizon = parse_u64(key, value);
    } else if (key == "seed") {
      cfg.root_seed = parse_u64(key, value);
      have_seed = true;
    } else {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": unknown key " + key);
    }
  }
  if (!have_seed) throw std::invalid_argument("config: a root seed (seed = N) is required");
  cfg.validate();
  return cfg;
}

SweepConfig SweepConfig::parse_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config " + path.string());
  return parse(is);
}

std::string SweepConfig::canonical() const {
  std::ostringstream os;
  auto bool_str = [](bool b) { return std::string(b ? "true" : "false"); };
  os << "name = " << name << '\n'
     << "kind = " << kind_string(kind) << '\n'
     << "system = " << family_string(system) << '\n'
     << "poles = " << join(poles, short_double) << '\n'
     << "noise_mults = " << join(noise_mults, short_double) << '\n'
     << "dims = " << join(dims, [](std::size_t v) { return std::to_string(v); }) << '\n'
     << "regularized = " << join(regularized, bool_str) << '\n'
     << "zero_inputs = " << join(zero_inputs, bool_str) << '\n'
     << "lorenz_init = "
     << join(lorenz_init,
             [](const InitRange& r) { return short_double(r.lo) + ":" + short_double(r.hi); })
     << '\n'
     << "models = " << join(models, [](const std::string& s) { return s; }) << '\n'
     << "hidden = " << join(hidden, hidden_string) << '\n'
     << "normalization = " << join(normalization, bool_str) << '\n'
     << "angle_expand = " << join(angle_expand, bool_str) << '\n'
     << "ensemble_size = " << ensemble_size << '\n'
     << "epochs = " << epochs << '\n'
     << "train_trajs = " << join(train_trajs, [](std::size_t v) { return std::to_string(v); })
     << '\n'
     << "test_trajs = " << test_trajs << '\n'
     << "train_horizon = " << train_horizon << '\n'
     << "test_horizon = " << test_horizon << '\n'
     << "modes = " << join(modes, [](const std::string& s) { return s; }) << '\n'
     << "table_systems = " << table_systems << '\n'
     << "snr_dts = " << join(snr_dts, short_double) << '\n'
     << "snr_noise_sigma = " << short_double(snr_noise_sigma) << '\n'
     << "snr_trajectories = " << snr_trajectories << '\n'
     << "snr_horizon = " << snr_horizon << '\n'
     << "seed = " << root_seed << '\n';
  return os.str();
}

std::uint64_t SweepConfig::hash() const { return fnv1a(canonical()); }

void SweepConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw std::invalid_argument("config: " + what);
  };
  require(!name.empty() && name.find(',') == std::string::npos,
          "name must be non-empty and contain no comma");
  require(!poles.empty() && !noise_mults.empty() && !dims.empty() && !regularized.empty() &&
              !zero_inputs.empty() && !lorenz_init.empty() && !models.empty() &&
              !hidden.empty() && !normalization.empty() && !angle_expand.empty() &&
              !train_trajs.empty() && !modes.empty() && !snr_dts.empty(),
          "every grid axis must be non-empty");
  for (const auto& m : models) require(known_models().count(m) > 0, "unknown model '" + m + "'");
  for (const auto& m : modes) {
    require(m == "logged" || m == "recomputed" || m == "one_step", "unknown mode '" + m + "'");
  }
  for (std::size_t d : dims) require(d >= 1, "dims must be >= 1");
  for (double n : noise_mults) require(n >= 0.0 && std::isfinite(n), "noise_mults must be >= 0");
  for (double p : poles) require(std::isfinite(p), "poles must be finite");
  for (const auto& r : lorenz_init) require(r.lo < r.hi, "lorenz_init needs lo < hi");
  for (std::size_t n : train_trajs) require(n >= 1, "train_trajs must be >= 1");
  for (double dt : snr_dts) require(dt > 0.0, "snr_dts must be positive");
  require(test_trajs >= 1 && train_horizon >= 1 && test_horizon >= 1,
          "trajectory counts and horizons must be >= 1");
  require(epochs >= 1 && ensemble_size >= 1, "epochs and ensemble_size must be >= 1");
  require(table_systems >= 1 && snr_trajectories >= 1 && snr_horizon >= 1,
          "table and SNR sizes must be >= 1");
  const bool any_expand = std::find(angle_expand.begin(), angle_expand.end(), true) !=
                          angle_expand.end();
  require(!any_expand || system == SystemFamily::kCartpole,
          "angle_expand applies to the cartpole system only");
}

std::size_t SweepConfig::cell_count() const {
  switch (kind) {
    case SweepKind::kDataTable: return poles.size();
    case SweepKind::kSnr: return snr_dts.size();
    case SweepKind::kRollout: break;
  }
  return system_variants(*this).size() * train_trajs.size() * model_variants(*this).size() *
         modes.size();
}

std::vector<CellDescriptor> enumerate_cells(const SweepConfig& cfg) {
  const auto systems = system_variants(cfg);
  const auto models = model_variants(cfg);
  std::vector<CellDescriptor> cells;
  cells.reserve(cfg.cell_count());
  for (std::size_t si = 0; si < systems.size(); ++si) {
    const std::uint64_t system_seed = derive_seed(cfg.root_seed, si);
    for (std::size_t n : cfg.train_trajs) {
      for (std::size_t mi = 0; mi < models.size(); ++mi) {
        for (const auto& mode : cfg.modes) {
          CellDescriptor c;
          c.index = cells.size();
          c.system_index = si;
          c.system = systems[si];
          c.train_trajs = n;
          c.model_index = mi;
          c.model = models[mi];
          c.mode = mode;
          c.test_seed = derive_seed(system_seed, 0);
          // Training sets depend on their size only, so every model variant
          // sees the same data.
          c.train_seed = derive_seed(system_seed, 1 + n);
          c.model_seed = derive_seed(c.train_seed, 1 + mi);
          cells.push_back(std::move(c));
        }
      }
    }
  }
  return cells;
}

ErrorProfile run_cell(const SweepConfig& cfg, const CellDescriptor& cell) {
  auto r = run_unit(cfg, cell, {cell.mode});
  if (!r.front().profile) throw std::runtime_error(r.front().error);
  return std::move(*r.front().profile);
}

bool RunManifest::all_succeeded() const {
  return std::all_of(cells.begin(), cells.end(),
                     [](const CellOutcome& c) { return c.error.empty(); });
}

void RunManifest::write_json(const std::filesystem::path& path) const {
  nlohmann::ordered_json j;
  char hash_hex[17];
  std::snprintf(hash_hex, sizeof(hash_hex), "%016llx",
                static_cast<unsigned long long>(config_hash));
  j["experiment"] = experiment;
  j["config_hash"] = hash_hex;
  j["root_seed"] = root_seed;
  j["tool_version"] = tool_version;
  j["wall_seconds"] = wall_seconds;
  j["cell_count"] = cell_count;
  j["artifacts"] = artifacts;
  auto& arr = j["cells"] = nlohmann::ordered_json::array();
  for (const auto& c : cells) {
    nlohmann::ordered_json e;
    e["index"] = c.cell.index;
    e["model"] = c.cell.model.model;
    e["mode"] = c.cell.mode;
    e["train_trajs"] = c.cell.train_trajs;
    e["test_seed"] = c.cell.test_seed;
    e["train_seed"] = c.cell.train_seed;
    e["model_seed"] = c.cell.model_seed;
    e["seconds"] = c.seconds;
    e["status"] = c.error.empty() ? "ok" : "failed";
    if (!c.error.empty()) e["error"] = c.error;
    arr.push_back(std::move(e));
  }
  write_atomically(path, [&](std::ostream& os) { os << j.dump(2) << '\n'; });
}

void write_results_csv(std::ostream& os, const SweepConfig& cfg,
                       const std::vector<CellOutcome>& outcomes) {
  os << kResultsHeader << '\n';
  const std::vector<std::size_t> default_hidden = TrainConfig{}.hidden;
  for (const auto& o : outcomes) {
    if (!o.profile) continue;
    const CellDescriptor& c = o.cell;
    std::string experiment = cfg.name;
    std::string pole, noise, dim, reg;
    switch (cfg.system) {
      case SystemFamily::kStateSpace:
        pole = short_double(c.system.pole);
        noise = short_double(c.system.noise_mult);
        dim = std::to_string(c.system.dim);
        reg = c.system.regularized ? "true" : "false";
        if (!c.system.zero_inputs) experiment += "/inputs";
        break;
      case SystemFamily::kLorenz:
        experiment += "/init=" + short_double(c.system.lorenz.lo) + ":" +
                      short_double(c.system.lorenz.hi);
        break;
      case SystemFamily::kCartpole:
        break;
    }
    const std::string prefix = experiment + ',' + pole + ',' + noise + ',' + dim + ',' + reg +
                               ',' + c.model.label(default_hidden) + ',' +
                               formulation_of(c.model.model) + ',' +
                               std::to_string(c.train_trajs) + ',' + c.mode + ',';
    const ErrorProfile& p = *o.profile;
    for (std::size_t t = 0; t < p.per_step.size(); ++t) {
      os << prefix << t + 1 << ',' << format_double(p.per_step[t].p50) << ','
         << format_double(p.per_step[t].p65) << ',' << format_double(p.per_step[t].p95) << ','
         << p.counts[t] << '\n';
    }
  }
}

RunManifest run_sweep(const SweepConfig& cfg, const RunOptions& options) {
  cfg.validate();
  const auto started = std::chrono::steady_clock::now();
  std::filesystem::create_directories(options.out_dir);

  RunManifest manifest;
  manifest.experiment = cfg.name;
  manifest.config_hash = cfg.hash();
  manifest.root_seed = cfg.root_seed;
  manifest.cell_count = cfg.cell_count();
  std::mutex log_mu;
  auto log = [&](const std::string& msg) {
    if (!options.log) return;
    std::lock_guard lock(log_mu);
    *options.log << msg << std::endl;
  };
  log(cfg.name + ": " + std::to_string(manifest.cell_count) + " cells");

  const auto config_path = options.out_dir / "config.txt";
  write_atomically(config_path, [&](std::ostream& os) { os << cfg.canonical(); });
  manifest.artifacts["config"] = config_path.string();

  if (cfg.kind == SweepKind::kDataTable) {
    const auto rows = compute_data_table(cfg);
    const auto csv = options.out_dir / "table_data.csv";
    const auto txt = options.out_dir / "table_data.txt";
    write_atomically(csv, [&](std::ostream& os) { write_data_table_csv(os, rows); });
    write_atomically(txt, [&](std::ostream& os) { os << format_data_table(rows); });
    manifest.artifacts["table_csv"] = csv.string();
    manifest.artifacts["table_text"] = txt.string();
  } else if (cfg.kind == SweepKind::kSnr) {
    const auto rows = compute_snr_table(cfg);
    const auto csv = options.out_dir / "snr.csv";
    write_atomically(csv, [&](std::ostream& os) {
      os << "dt,snr\n";
      for (const auto& r : rows) os << short_double(r.dt) << ',' << format_double(r.snr) << '\n';
    });
    manifest.artifacts["snr_csv"] = csv.string();
  } else {
    std::vector<CellDescriptor> cells = enumerate_cells(cfg);
    if (!options.only_cells.empty()) {
      std::set<std::size_t> keep(options.only_cells.begin(), options.only_cells.end());
      for (std::size_t i : keep) {
        if (i >= cells.size()) {
          throw std::out_of_range("cell index " + std::to_string(i) + " out of range");
        }
      }
      std::erase_if(cells, [&](const CellDescriptor& c) { return !keep.count(c.index); });
    }
    // Cells that share a trained model (differing only in mode) form one unit.
    std::vector<std::vector<std::size_t>> units;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i > 0 && cells[i].system_index == cells[i - 1].system_index &&
          cells[i].train_trajs == cells[i - 1].train_trajs &&
          cells[i].model_index == cells[i - 1].model_index) {
        units.back().push_back(i);
      } else {
        units.push_back({i});
      }
    }
    std::vector<CellOutcome> outcomes(cells.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (std::size_t u = next++; u < units.size(); u = next++) {
        const auto t0 = std::chrono::steady_clock::now();
        std::vector<std::string> modes;
        for (std::size_t i : units[u]) modes.push_back(cells[i].mode);
        std::vector<ModeResult> results;
        std::string unit_error;
        try {
          results = run_unit(cfg, cells[units[u].front()], modes);
        } catch (const std::exception& e) {
          unit_error = e.what();
        }
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        for (std::size_t k = 0; k < units[u].size(); ++k) {
          CellOutcome& o = outcomes[units[u][k]];
          o.cell = cells[units[u][k]];
          o.seconds = secs;
          const std::string error = unit_error.empty() ? results[k].error : unit_error;
          if (error.empty()) o.profile = std::move(results[k].profile);
          else o.error = error;
          std::ostringstream msg;
          msg << "cell " << o.cell.index << " " << o.cell.model.model << " " << o.cell.mode
              << (error.empty() ? " ok" : " FAILED: " + error) << " (" << secs << " s)";
          log(msg.str());
        }
      }
    };
    const std::size_t n_workers = std::clamp<std::size_t>(options.workers, 1, units.size() ? units.size() : 1);
    std::vector<std::thread> threads;
    for (std::size_t w = 1; w < n_workers; ++w) threads.emplace_back(worker);
    worker();
    for (auto& t : threads) t.join();

    const auto results = options.out_dir / "results.csv";
    write_atomically(results, [&](std::ostream& os) { write_results_csv(os, cfg, outcomes); });
    manifest.artifacts["results"] = results.string();
    manifest.cells = std::move(outcomes);
  }

  manifest.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  const auto manifest_path = options.out_dir / "manifest.json";
  manifest.artifacts["manifest"] = manifest_path.string();
  manifest.write_json(manifest_path);
  return manifest;
}

std::vector<std::string> preset_names() {
  return {"compound",     "compare_noise", "noB",          "state_dim",     "dim_diverge",
          "simple_models", "sincos",       "tps",          "training_set",  "capacity",
          "no_norm",      "react",         "lorenz_narrow", "lorenz_broad", "snr",
          "data_table"};
}

SweepConfig preset(const std::string& name, bool full) {
  SweepConfig c;
  c.name = name;
  c.root_seed = 1;
  if (name == "compound") {
    c.poles = {0.01, 0.05, 0.1, 0.25, 0.5, 0.75, 0.9, 0.95};
    c.models = {"D", "D-S", "PE", "PE-S"};
  } else if (name == "compare_noise") {
    c.noise_mults = {0.0, 1.0, 10.0, 100.0};
  } else if (name == "noB") {
    c.noise_mults = {0.0, 1.0, 10.0, 100.0};
    c.zero_inputs = {true, false};
  } else if (name == "state_dim") {
    c.dims = {3, 9, 27, 81};
    c.regularized = {true};
  } else if (name == "dim_diverge") {
    c.dims = {3, 9, 27};
    c.regularized = {false};
  } else if (name == "simple_models") {
    c.poles = {0.1, 0.5, 0.9};
    c.models = {"ZERO", "PERSIST", "LIN", "D"};
  } else if (name == "sincos") {
    c.system = SystemFamily::kCartpole;
    c.angle_expand = {false, true};
  } else if (name == "tps") {
    c.poles = {0.1, 0.5, 0.9, 0.95};
    c.modes = {"one_step", "logged"};
  } else if (name == "training_set") {
    c.train_trajs = {1, 5, 10, 100};
  } else if (name == "capacity") {
    c.hidden = {{256, 256}, {32}, {512, 512, 512}};
  } else if (name == "no_norm") {
    c.poles = {0.1, 0.5, 0.9};
    c.normalization = {true, false};
  } else if (name == "react") {
    c.system = SystemFamily::kCartpole;
    c.modes = {"logged", "recomputed"};
  } else if (name == "lorenz_narrow" || name == "lorenz_broad") {
    c.system = SystemFamily::kLorenz;
    c.lorenz_init = {name == "lorenz_narrow" ? InitRange{5.0, 10.0} : InitRange{-10.0, 10.0}};
    c.models = {"ZERO", "D"};
    c.train_trajs = {100};
    c.test_trajs = 100;
    c.train_horizon = 500;
    c.test_horizon = 200;
  } else if (name == "snr") {
    c.kind = SweepKind::kSnr;
  } else if (name == "data_table") {
    c.kind = SweepKind::kDataTable;
    c.poles = {0.01, 0.1, 0.25, 0.5, 0.75, 0.9, 0.95, 1.0, 1.1};
    c.train_trajs = {100};
    c.train_horizon = 200;
  } else {
    throw std::invalid_argument("unknown preset '" + name + "'");
  }
  if (full && c.kind == SweepKind::kRollout && c.system != SystemFamily::kLorenz) {
    if (name != "training_set") c.train_trajs = {100};
    c.test_trajs = 100;
  }
  c.validate();
  return c;
}

}  // namespace dynrollout
