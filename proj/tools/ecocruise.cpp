// ecocruise: command-line driver for road generation, DP, inverse
// optimization, network training and closed-loop comparison.

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ecocruise/dp_solver.hpp"
#include "ecocruise/errors.hpp"
#include "ecocruise/gamma_net.hpp"
#include "ecocruise/inverse_opt.hpp"
#include "ecocruise/road_profile.hpp"
#include "ecocruise/sim_harness.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace ecocruise;

namespace {

constexpr const char* kVersion = "1.0.0";

enum Exit { kOk = 0, kUsage = 1, kValidation = 2, kRuntime = 3 };

/// Bad configuration or input values (exit 2).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct StageError : std::runtime_error {
  StageError(const std::string& stage, const std::string& what, int code)
      : std::runtime_error("stage " + stage + " failed: " + what), exit_code(code) {}
  int exit_code;
};

// Effective settings: defaults, then the config file, then flags.
struct RunConfig {
  std::string road;        // road CSV
  double length_km = 0.0;  // generator fallback when no road file is given
  std::uint64_t road_seed = 0;
  std::vector<std::string> eval_roads;
  std::string out_dir = "ecocruise-out";
  std::string vehicle_file;
  VehicleParams vehicle;
  double v_ref = 30.0;
  double v_i = 30.0;
  std::size_t horizon = kMpcHorizon;
  double soft_weight = 1e3;
  double gamma = 0.003;
  TrainConfig train;
  std::string gammas = "0.0005:0.005:10";
  unsigned threads = 0;
};

template <typename T>
void take(const json& j, const char* key, T& dst) {
  if (j.contains(key)) dst = j.at(key).get<T>();
}

void apply_config_file(const std::string& path, RunConfig& c) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  json j;
  try {
    j = json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path + ": " + e.what());
  }
  try {
    if (j.contains("road")) {
      const auto& r = j["road"];
      if (r.is_string()) {
        c.road = r.get<std::string>();
      } else {
        take(r, "length_km", c.length_km);
        take(r, "seed", c.road_seed);
      }
    }
    take(j, "eval_roads", c.eval_roads);
    take(j, "out_dir", c.out_dir);
    take(j, "threads", c.threads);
    if (j.contains("vehicle")) {
      const auto& v = j["vehicle"];
      take(v, "file", c.vehicle_file);
      take(v, "v_min", c.vehicle.v_min);
      take(v, "v_max", c.vehicle.v_max);
      take(v, "te_min", c.vehicle.te_min);
      take(v, "te_max", c.vehicle.te_max);
    }
    if (j.contains("dp")) {
      take(j["dp"], "v_ref", c.v_ref);
      take(j["dp"], "v_i", c.v_i);
    }
    if (j.contains("mpc")) {
      take(j["mpc"], "horizon", c.horizon);
      take(j["mpc"], "soft_weight", c.soft_weight);
      take(j["mpc"], "gamma", c.gamma);
    }
    if (j.contains("train")) {
      const auto& t = j["train"];
      take(t, "learning_rate", c.train.learning_rate);
      take(t, "epochs", c.train.epochs);
      take(t, "batch_size", c.train.batch_size);
      take(t, "l2", c.train.l2);
      take(t, "test_fraction", c.train.test_fraction);
      take(t, "val_fraction", c.train.val_fraction);
      take(t, "patience", c.train.patience);
      take(t, "seed", c.train.seed);
    }
    if (j.contains("sweep")) take(j["sweep"], "gammas", c.gammas);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path + ": " + e.what());
  }
}

std::vector<double> parse_ladder(const std::string& spec) {
  std::vector<std::string> parts;
  std::stringstream ss(spec);
  for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
  try {
    if (parts.size() == 3) {
      const double lo = std::stod(parts[0]), hi = std::stod(parts[1]);
      const long n = std::stol(parts[2]);
      if (n < 1) throw ConfigError("gamma ladder needs at least one value");
      return linear_ladder(lo, hi, static_cast<std::size_t>(n));
    }
    std::vector<double> out;
    std::stringstream list(spec);
    for (std::string p; std::getline(list, p, ',');) out.push_back(std::stod(p));
    if (out.empty()) throw ConfigError("empty gamma ladder");
    return out;
  } catch (const std::invalid_argument&) {
    throw ConfigError("bad gamma ladder '" + spec + "', expected lo:hi:n or a comma list");
  } catch (const std::out_of_range&) {
    throw ConfigError("bad gamma ladder '" + spec + "'");
  }
}

fs::path output_dir(const RunConfig& c) {
  if (const char* env = std::getenv("ECOCRUISE_OUT"); env && *env) return env;
  return c.out_dir;
}

void require_file(const std::string& path, const char* what) {
  if (path.empty()) throw ConfigError(std::string("missing ") + what);
  if (!fs::is_regular_file(path)) throw ConfigError(std::string(what) + " not found: " + path);
}

VehicleParams vehicle_of(const RunConfig& c) {
  VehicleParams p = c.vehicle;
  if (!c.vehicle_file.empty()) {
    require_file(c.vehicle_file, "vehicle file");
    p = load_vehicle_params(c.vehicle_file);
  }
  p.validate();
  return p;
}

Metadata run_meta(const std::string& command, std::uint64_t fingerprint) {
  return {{"tool", "ecocruise"}, {"version", kVersion}, {"command", command}, {"fingerprint", hex64(fingerprint)}};
}

/// Writes through a temporary file so an interrupted stage never leaves a
/// truncated artifact behind.
template <typename F>
void write_atomic(const fs::path& path, F&& body) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    body(out);
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string describe_vehicle(const VehicleParams& p) {
  std::ostringstream s;
  write_vehicle_params(s, p);
  return s.str();
}

std::string fmt17(double x) {
  std::ostringstream s;
  s << std::setprecision(17) << x;
  return s.str();
}

// ---- stages ---------------------------------------------------------------

struct Stage {
  std::string name;
  fs::path path;
  std::uint64_t fingerprint;
  bool cached;
};

Stage stage_path(const fs::path& dir, const std::string& name, const std::string& ext, std::uint64_t fp) {
  Stage s{name, dir / (name + "-" + hex64(fp) + ext), fp, false};
  s.cached = fs::exists(s.path);
  return s;
}

std::uint64_t dp_fingerprint(std::uint64_t road_hash, const VehicleParams& p, double v_ref, double v_i) {
  return fnv1a("dp;v_ref=" + fmt17(v_ref) + ";v_i=" + fmt17(v_i) + ";" + describe_vehicle(p), road_hash);
}

void run_solve_dp(const fs::path& road_file, const fs::path& out, const VehicleParams& p, double v_ref, double v_i,
                  std::uint64_t fp) {
  const auto road = load_road_csv(road_file);
  const auto sol = solve_dp(p, road, DpConfig::defaults(p, v_ref, v_i));
  auto meta = run_meta("solve-dp", fp);
  meta["road"] = road_file.string();
  meta["total_fuel_kg"] = fmt9(sol.total_fuel);
  write_atomic(out, [&](std::ostream& o) { write_trajectory_csv(o, sol.trajectory, meta); });
}

void run_invert(const fs::path& road_file, const fs::path& traj_file, const fs::path& out, const VehicleParams& p,
                double v_ref, std::size_t horizon, unsigned threads, std::uint64_t fp) {
  const auto road = load_road_csv(road_file);
  std::ifstream in(traj_file);
  if (!in) throw ConfigError("cannot open trajectory " + traj_file.string());
  const auto traj = read_trajectory_csv(in);
  const auto series = gamma_series(traj, road, linearize(p, v_ref), p, horizon, threads);
  std::size_t flagged = 0;
  for (auto f : series.flags) flagged += f != kGammaOk;
  auto meta = run_meta("invert", fp);
  meta["flagged"] = std::to_string(flagged);
  write_atomic(out, [&](std::ostream& o) { write_gamma_csv(o, series, meta); });
}

GammaSeries load_gamma(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open gamma series " + path.string());
  return read_gamma_csv(in);
}

void run_train(const fs::path& road_file, const fs::path& gamma_file, const fs::path& out, double v_ref,
               const TrainConfig& cfg) {
  const auto road = load_road_csv(road_file);
  const auto data = make_dataset(road, load_gamma(gamma_file), v_ref);
  const auto res = train(data, cfg);
  const auto e = evaluate(res.model, data.subset(res.test_idx));
  std::cout << "train: " << data.size() << " samples, " << res.history.train_loss.size() << " epochs, test mse_scaled "
            << fmt9(e.mse_scaled) << ", mae_scaled " << fmt9(e.mae_scaled) << '\n';
  write_atomic(out, [&](std::ostream& o) { save_model(o, res.model); });
}

struct Loaded {
  std::optional<MlpModel> model;
  std::optional<GammaSeries> series;
  std::optional<Trajectory> dp;
  SimArtifacts art() const {
    return {model ? &*model : nullptr, series ? &series.value() : nullptr, dp ? &dp->te_nm : nullptr};
  }
};

Loaded load_artifacts(const std::string& model, const std::string& gamma, const std::string& traj) {
  Loaded l;
  if (!model.empty()) {
    require_file(model, "model file");
    l.model = load_model_file(model);
  }
  if (!gamma.empty()) {
    require_file(gamma, "gamma series");
    l.series = load_gamma(gamma);
  }
  if (!traj.empty()) {
    require_file(traj, "trajectory");
    std::ifstream in(traj);
    l.dp = read_trajectory_csv(in);
  }
  return l;
}

ControllerSpec base_spec(const RunConfig& c) {
  ControllerSpec s;
  s.v_ref = c.v_ref;
  s.v_i = c.v_i;
  s.horizon = c.horizon;
  s.soft_weight = c.soft_weight;
  s.gamma = c.gamma;
  return s;
}

void print_rows(const std::vector<SweepRow>& rows) {
  std::cout << std::left << std::setw(12) << "controller" << std::right << std::setw(12) << "gamma" << std::setw(12)
            << "avg_v_mps" << std::setw(12) << "km_per_kg" << std::setw(12) << "fuel_kg" << std::setw(12)
            << "step_s" << '\n';
  for (const auto& r : rows) {
    std::cout << std::left << std::setw(12) << r.controller << std::right << std::setw(12) << fmt9(r.gamma)
              << std::setw(12) << fmt9(r.avg_velocity_mps) << std::setw(12) << fmt9(r.fuel_economy_km_per_kg)
              << std::setw(12) << fmt9(r.total_fuel_kg) << std::setw(12) << fmt9(r.median_step_s);
    if (!r.error.empty()) std::cout << "  error: " << r.error;
    std::cout << '\n';
  }
}

int report(const fs::path& sweep_file, const std::string& plot_out) {
  std::ifstream in(sweep_file);
  if (!in) throw ConfigError("cannot open sweep " + sweep_file.string());
  std::vector<SweepRow> rows;
  try {
    rows = read_sweep_csv(in);
  } catch (const IngestError& e) {
    if (e.row() == 0) throw ConfigError(sweep_file.string() + ": " + e.what());
    throw ConfigError(sweep_file.string() + ":" + std::to_string(e.row()) + ": parse error: " + e.what());
  }
  if (rows.empty()) {
    std::cout << "empty sweep: nothing to report\n";
    return kOk;
  }
  print_rows(rows);
  const SweepRow* pi = nullptr;
  for (const auto& r : rows)
    if (r.controller == "PI" && r.error.empty()) pi = &r;
  if (pi) {
    std::cout << "\nfuel economy improvement over PI:\n";
    for (const auto& r : rows) {
      if (&r == pi || !r.error.empty() || r.controller == "FIXED_LMPC") continue;
      const double pct = 100.0 * (r.fuel_economy_km_per_kg - pi->fuel_economy_km_per_kg) / pi->fuel_economy_km_per_kg;
      std::cout << "  " << std::left << std::setw(10) << r.controller << std::right << std::fixed
                << std::setprecision(2) << std::setw(8) << pct << " %\n"
                << std::defaultfloat;
    }
  } else {
    std::cout << "\nno PI row: improvement percentages unavailable\n";
  }
  for (const auto& r : rows)
    if ((r.controller == "AT_MPC" || r.controller == "PT_MPC") && r.error.empty())
      std::cout << r.controller << " distance to the fixed-weight front: " << fmt9(100.0 * front_gap(rows, r))
                << " %\n";
  const fs::path plot = plot_out.empty() ? fs::path(fs::path(sweep_file).replace_extension("").string() + "-pareto.csv")
                                         : fs::path(plot_out);
  write_atomic(plot, [&](std::ostream& o) { write_pareto_plot_csv(o, rows, run_meta("report", file_hash(sweep_file))); });
  std::cout << "plot data: " << plot.string() << '\n';
  return kOk;
}

int classify(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const std::invalid_argument*>(&e) ||
      dynamic_cast<const IngestError*>(&e) || dynamic_cast<const DomainError*>(&e))
    return kValidation;
  return kRuntime;
}

template <typename F>
void stage(const Stage& s, F&& body) {
  if (s.cached) {
    std::cout << s.name << ": cache hit " << s.path.string() << '\n';
    return;
  }
  std::cout << s.name << ": running\n" << std::flush;
  try {
    body();
  } catch (const std::exception& e) {
    throw StageError(s.name, e.what(), classify(e));
  }
  std::cout << s.name << ": wrote " << s.path.string() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Eco-cruise control: DP, inverse optimization, weight prediction and MPC comparison"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  RunConfig cfg;
  std::string config_file;
  app.add_option("--config", config_file, "JSON run configuration; flags override its values");

  // gen-road
  auto* gen = app.add_subcommand("gen-road", "Generate a synthetic sinusoidal road");
  double gen_len = 0.0, gen_grade = 0.05;
  std::uint64_t gen_seed = 0;
  std::string gen_out;
  gen->add_option("--length-km", gen_len, "Road length in km")->required();
  gen->add_option("--seed", gen_seed, "Generator seed")->required();
  gen->add_option("--out", gen_out, "Output road CSV")->required();
  gen->add_option("--max-grade", gen_grade, "Largest absolute grade");

  // options shared by the processing stages
  std::string road, traj, gamma_file, model_file, out_opt, vehicle_file;
  double v_ref = 30.0, v_i = 30.0;
  auto add_common = [&](CLI::App* c) {
    c->add_option("--v-ref", v_ref, "Set-point speed, m/s");
    c->add_option("--v-i", v_i, "Initial speed, m/s");
    c->add_option("--vehicle", vehicle_file, "Vehicle parameter file");
  };

  auto* sdp = app.add_subcommand("solve-dp", "Fuel-optimal trajectory by dynamic programming");
  sdp->add_option("--road", road, "Road CSV")->required();
  sdp->add_option("--out", out_opt, "Output trajectory CSV")->required();
  add_common(sdp);

  auto* inv = app.add_subcommand("invert", "Recover the weight series from an optimal trajectory");
  std::size_t horizon = kMpcHorizon;
  inv->add_option("--road", road, "Road CSV")->required();
  inv->add_option("--trajectory", traj, "DP trajectory CSV")->required();
  inv->add_option("--out", out_opt, "Output gamma CSV")->required();
  inv->add_option("--horizon", horizon, "MPC horizon in steps");
  add_common(inv);

  auto* trn = app.add_subcommand("train", "Train the weight-prediction network");
  TrainConfig tc;
  trn->add_option("--road", road, "Road CSV")->required();
  trn->add_option("--gamma", gamma_file, "Gamma series CSV")->required();
  trn->add_option("--out", out_opt, "Output model file")->required();
  trn->add_option("--epochs", tc.epochs, "Training epochs");
  trn->add_option("--lr", tc.learning_rate, "Learning rate");
  trn->add_option("--batch", tc.batch_size, "Mini-batch size");
  trn->add_option("--l2", tc.l2, "Weight decay");
  trn->add_option("--patience", tc.patience, "Early-stopping patience (0 disables)");
  trn->add_option("--seed", tc.seed, "Split and initialization seed");
  add_common(trn);

  auto* sim = app.add_subcommand("simulate", "Run one controller on a road");
  std::string controller = "fixed";
  double gamma = 0.003;
  sim->add_option("--road", road, "Road CSV")->required();
  sim->add_option("--controller", controller, "at, pt, fixed, pi or dp");
  sim->add_option("--gamma", gamma, "Weight for the fixed controller");
  sim->add_option("--model", model_file, "Model file (at)");
  sim->add_option("--gamma-series", gamma_file, "Gamma series CSV (pt)");
  sim->add_option("--trajectory", traj, "DP trajectory CSV (dp)");
  sim->add_option("--out", out_opt, "Output directory");
  add_common(sim);

  auto* swp = app.add_subcommand("sweep", "Fixed-weight ladder plus the comparison controllers");
  std::string gammas = "0.0005:0.005:10";
  unsigned threads = 0;
  swp->add_option("--road", road, "Road CSV")->required();
  swp->add_option("--gammas", gammas, "Ladder lo:hi:n or comma list");
  swp->add_option("--model", model_file, "Model file")->required();
  swp->add_option("--gamma-series", gamma_file, "Gamma series CSV")->required();
  swp->add_option("--trajectory", traj, "DP trajectory CSV")->required();
  swp->add_option("--out", out_opt, "Output sweep CSV");
  swp->add_option("--threads", threads, "Worker threads (0: all cores)");
  add_common(swp);

  auto* pipe = app.add_subcommand("pipeline", "solve-dp, invert, train, sweep with cached stages");
  std::vector<std::string> eval_roads;
  pipe->add_option("--road", road, "Training road CSV");
  pipe->add_option("--eval-road", eval_roads, "Additional road to sweep (repeatable)");
  pipe->add_option("--out", out_opt, "Output directory");
  pipe->add_option("--gammas", gammas, "Ladder lo:hi:n or comma list");
  pipe->add_option("--epochs", tc.epochs, "Training epochs");
  pipe->add_option("--threads", threads, "Worker threads (0: all cores)");
  add_common(pipe);

  auto* rep = app.add_subcommand("report", "Summarize a sweep CSV");
  std::string sweep_file, plot_out;
  rep->add_option("sweep", sweep_file, "Sweep CSV")->required();
  rep->add_option("--plot-out", plot_out, "Pareto plot-data CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  auto given = [](CLI::App* c, const char* name) { return c->count(name) > 0; };

  try {
    if (!config_file.empty()) apply_config_file(config_file, cfg);
    CLI::App* cmd = app.get_subcommands().front();
    auto flag = [&](const char* name) {
      try {
        return given(cmd, name);
      } catch (const CLI::OptionNotFound&) {
        return false;
      }
    };
    if (flag("--v-ref")) cfg.v_ref = v_ref;
    if (flag("--v-i")) cfg.v_i = v_i;
    if (flag("--vehicle")) cfg.vehicle_file = vehicle_file;
    if (flag("--road")) cfg.road = road;
    if (flag("--gammas")) cfg.gammas = gammas;
    if (flag("--threads")) cfg.threads = threads;
    if (flag("--horizon")) cfg.horizon = horizon;
    if (flag("--eval-road")) cfg.eval_roads = eval_roads;
    if (flag("--epochs")) cfg.train.epochs = tc.epochs;
    if (flag("--lr")) cfg.train.learning_rate = tc.learning_rate;
    if (flag("--batch")) cfg.train.batch_size = tc.batch_size;
    if (flag("--l2")) cfg.train.l2 = tc.l2;
    if (flag("--patience")) cfg.train.patience = tc.patience;
    if (flag("--seed") && cmd == trn) cfg.train.seed = tc.seed;
    if (flag("--gamma") && cmd == sim) cfg.gamma = gamma;

    if (cmd == gen) {
      if (!(gen_len * 1000.0 >= 3000.0)) throw ConfigError("--length-km must be at least 3 (one full preview)");
      RoadGenSpec spec;
      spec.max_grade = gen_grade;
      spec.ds = vehicle_of(cfg).ds;
      const auto r = gen_sinusoidal(gen_seed, gen_len * 1000.0, spec);
      Metadata meta = run_meta("gen-road", fnv1a("gen-road;" + fmt17(gen_len) + ";" + fmt17(gen_grade), gen_seed));
      meta["seed"] = std::to_string(gen_seed);
      meta["length_km"] = fmt9(gen_len);
      write_atomic(gen_out, [&](std::ostream& o) { write_road_csv(o, r, meta); });
      std::cout << "wrote " << gen_out << " (" << r.steps() << " steps)\n";
      return kOk;
    }

    const VehicleParams p = vehicle_of(cfg);

    if (cmd == sdp) {
      require_file(cfg.road, "road file");
      run_solve_dp(cfg.road, out_opt, p, cfg.v_ref, cfg.v_i,
                   dp_fingerprint(file_hash(cfg.road), p, cfg.v_ref, cfg.v_i));
      std::cout << "wrote " << out_opt << '\n';
      return kOk;
    }
    if (cmd == inv) {
      require_file(cfg.road, "road file");
      require_file(traj, "trajectory");
      run_invert(cfg.road, traj, out_opt, p, cfg.v_ref, cfg.horizon, cfg.threads,
                 fnv1a("invert;h=" + std::to_string(cfg.horizon), file_hash(traj)));
      std::cout << "wrote " << out_opt << '\n';
      return kOk;
    }
    if (cmd == trn) {
      require_file(cfg.road, "road file");
      require_file(gamma_file, "gamma series");
      run_train(cfg.road, gamma_file, out_opt, cfg.v_ref, cfg.train);
      std::cout << "wrote " << out_opt << '\n';
      return kOk;
    }
    if (cmd == sim) {
      require_file(cfg.road, "road file");
      const auto road_p = load_road_csv(cfg.road);
      const auto l = load_artifacts(model_file, gamma_file, traj);
      auto spec = base_spec(cfg);
      spec.kind = parse_controller(controller);
      const auto res = run(spec, road_p, p, l.art());
      SweepRow row;
      row.controller = to_string(spec.kind);
      row.gamma = spec.kind == ControllerKind::FixedLmpc ? spec.gamma : std::nan("");
      row.avg_velocity_mps = res.raw.avg_velocity_mps;
      row.fuel_economy_km_per_kg = res.raw.fuel_economy_km_per_kg;
      row.total_fuel_kg = res.raw.total_fuel_kg;
      row.median_step_s = res.median_step_s();
      print_rows({row});
      const fs::path dir = out_opt.empty() ? output_dir(cfg) : fs::path(out_opt);
      const auto fp = fnv1a(row.controller + ";" + fmt17(spec.gamma), file_hash(cfg.road));
      auto meta = run_meta("simulate", fp);
      meta["road"] = cfg.road;
      const std::string stem = "simulate-" + row.controller;
      write_atomic(dir / (stem + ".csv"), [&](std::ostream& o) { write_sweep_csv(o, {row}, meta); });
      write_atomic(dir / (stem + "-trajectory.csv"),
                   [&](std::ostream& o) { write_trajectory_csv(o, res.trajectory, meta); });
      return kOk;
    }
    if (cmd == swp) {
      require_file(cfg.road, "road file");
      const auto road_p = load_road_csv(cfg.road);
      const auto ladder = parse_ladder(cfg.gammas);
      const auto l = load_artifacts(model_file, gamma_file, traj);
      const auto rows = pareto_sweep(road_p, p, ladder, l.art(), base_spec(cfg), cfg.threads);
      print_rows(rows);
      const fs::path out = out_opt.empty() ? output_dir(cfg) / "sweep.csv" : fs::path(out_opt);
      auto meta = run_meta("sweep", fnv1a("sweep;" + cfg.gammas, file_hash(cfg.road)));
      meta["road"] = cfg.road;
      meta["gammas"] = cfg.gammas;
      write_atomic(out, [&](std::ostream& o) { write_sweep_csv(o, rows, meta); });
      std::cout << "wrote " << out.string() << '\n';
      return kOk;
    }
    if (cmd == rep) {
      if (!fs::is_regular_file(sweep_file)) throw ConfigError("sweep file not found: " + sweep_file);
      return report(sweep_file, plot_out);
    }
    if (cmd == pipe) {
      const fs::path dir = out_opt.empty() ? output_dir(cfg) : fs::path(out_opt);
      fs::create_directories(dir);
      fs::path road_file = cfg.road;
      if (road_file.empty()) {
        if (!(cfg.length_km >= 3.0)) throw ConfigError("pipeline needs --road or a road generator in the config");
        road_file = dir / ("road-" + std::to_string(cfg.road_seed) + ".csv");
        if (!fs::exists(road_file)) {
          RoadGenSpec spec;
          spec.ds = p.ds;
          const auto r = gen_sinusoidal(cfg.road_seed, cfg.length_km * 1000.0, spec);
          auto meta = run_meta("gen-road", fnv1a(fmt17(cfg.length_km), cfg.road_seed));
          meta["seed"] = std::to_string(cfg.road_seed);
          write_atomic(road_file, [&](std::ostream& o) { write_road_csv(o, r, meta); });
        }
      }
      require_file(road_file.string(), "road file");
      for (const auto& r : cfg.eval_roads) require_file(r, "evaluation road");
      const auto ladder = parse_ladder(cfg.gammas);

      const auto road_hash = file_hash(road_file);
      const auto dp_st = stage_path(dir, "dp", ".csv", dp_fingerprint(road_hash, p, cfg.v_ref, cfg.v_i));
      stage(dp_st, [&] { run_solve_dp(road_file, dp_st.path, p, cfg.v_ref, cfg.v_i, dp_st.fingerprint); });

      const auto inv_st =
          stage_path(dir, "gamma", ".csv", fnv1a("invert;h=" + std::to_string(cfg.horizon), dp_st.fingerprint));
      stage(inv_st, [&] {
        run_invert(road_file, dp_st.path, inv_st.path, p, cfg.v_ref, cfg.horizon, cfg.threads, inv_st.fingerprint);
      });

      const auto nn_st = stage_path(dir, "model", ".txt", fnv1a("train;" + cfg.train.describe(), inv_st.fingerprint));
      stage(nn_st, [&] { run_train(road_file, inv_st.path, nn_st.path, cfg.v_ref, cfg.train); });

      const auto model = load_model_file(nn_st.path);
      std::vector<fs::path> sweep_roads{road_file};
      for (const auto& r : cfg.eval_roads) sweep_roads.emplace_back(r);
      const std::string ctrl = "sweep;" + cfg.gammas + ";h=" + std::to_string(cfg.horizon) + ";w=" +
                               fmt17(cfg.soft_weight) + ";" + hex64(nn_st.fingerprint);
      for (std::size_t i = 0; i < sweep_roads.size(); ++i) {
        const auto& rf = sweep_roads[i];
        const auto rh = file_hash(rf);
        const bool training_road = i == 0;
        // evaluation roads need their own DP and weight series for the DP and PT rows
        Stage edp = dp_st, einv = inv_st;
        if (!training_road) {
          edp = stage_path(dir, "dp", ".csv", dp_fingerprint(rh, p, cfg.v_ref, cfg.v_i));
          stage(edp, [&] { run_solve_dp(rf, edp.path, p, cfg.v_ref, cfg.v_i, edp.fingerprint); });
          einv = stage_path(dir, "gamma", ".csv", fnv1a("invert;h=" + std::to_string(cfg.horizon), edp.fingerprint));
          stage(einv, [&] {
            run_invert(rf, edp.path, einv.path, p, cfg.v_ref, cfg.horizon, cfg.threads, einv.fingerprint);
          });
        }
        const auto sw = stage_path(dir, "sweep", ".csv", fnv1a(ctrl + ";" + hex64(einv.fingerprint), rh));
        stage(sw, [&] {
          const auto road_p = load_road_csv(rf);
          const auto l = load_artifacts("", einv.path.string(), edp.path.string());
          SimArtifacts art = l.art();
          art.model = &model;
          const auto rows = pareto_sweep(road_p, p, ladder, art, base_spec(cfg), cfg.threads);
          auto meta = run_meta("pipeline", sw.fingerprint);
          meta["road"] = rf.string();
          meta["gammas"] = cfg.gammas;
          meta["train"] = cfg.train.describe();
          write_atomic(sw.path, [&](std::ostream& o) { write_sweep_csv(o, rows, meta); });
        });
        std::cout << "\nroad " << rf.string() << '\n';
        report(sw.path, "");
      }
      return kOk;
    }
  } catch (const StageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.exit_code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return classify(e);
  }
  return kUsage;
}
