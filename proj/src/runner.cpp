#include "cfident/runner.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

namespace cfident {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

[[noreturn]] void config_fail(const std::string& what) { throw ConfigError(what); }

void expect_keys(const ordered_json& obj, const char* where,
                 std::initializer_list<const char*> allowed) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const char* k : allowed)
      if (it.key() == k) known = true;
    if (!known) config_fail(std::string("unknown key '") + it.key() + "' in " + where);
  }
}

OutputMode parse_output_mode(const std::string& s) {
  if (s == "gap") return OutputMode::GapOnly;
  if (s == "gap-speed") return OutputMode::GapAndSpeed;
  config_fail("output must be 'gap' or 'gap-speed', got '" + s + "'");
}

void apply_json(RunConfig& c, const ordered_json& j) {
  expect_keys(j, "config",
              {"model", "scenario", "structural", "direct", "sweep", "grid", "seed", "jobs",
               "out_dir"});
  if (j.contains("model")) {
    const auto& m = j.at("model");
    if (m.is_string()) {
      c.model = m.get<std::string>();
      c.custom_model.reset();
    } else if (m.is_object()) {
      expect_keys(m, "model", {"name", "params", "f_cf", "equilibrium_gap"});
      CustomModelConfig cm;
      cm.name = m.at("name").get<std::string>();
      for (const auto& p : m.at("params")) {
        expect_keys(p, "model.params[]", {"name", "lower", "upper"});
        cm.params.push_back(
            {p.at("name").get<std::string>(), p.at("lower").get<double>(), p.at("upper").get<double>()});
      }
      cm.f_cf = m.at("f_cf").get<std::string>();
      if (m.contains("equilibrium_gap") && !m.at("equilibrium_gap").is_null())
        cm.equilibrium_gap = m.at("equilibrium_gap").get<std::string>();
      c.model = cm.name;
      c.custom_model = std::move(cm);
    } else {
      config_fail("'model' must be a builtin name or a model object");
    }
  }
  if (j.contains("scenario")) {
    const auto& s = j.at("scenario");
    expect_keys(s, "scenario", {"x0", "u0", "eq_gap", "input", "horizon", "dt", "output"});
    if (s.contains("x0")) {
      if (s.at("x0").is_string()) {
        if (s.at("x0").get<std::string>() != "equilibrium")
          config_fail("scenario.x0 must be [gap, speed] or \"equilibrium\"");
        c.scenario.equilibrium = true;
        c.scenario.x0.reset();
      } else {
        auto v = s.at("x0").get<std::vector<double>>();
        if (v.size() != 2) config_fail("scenario.x0 needs exactly [gap, speed]");
        c.scenario.x0 = State{v[0], v[1]};
        c.scenario.equilibrium = false;
      }
    }
    if (s.contains("u0")) c.scenario.u0 = s.at("u0").get<double>();
    if (s.contains("eq_gap")) c.scenario.eq_gap = s.at("eq_gap").get<double>();
    if (s.contains("input")) c.scenario.input = s.at("input").get<std::string>();
    if (s.contains("horizon")) c.scenario.horizon = s.at("horizon").get<double>();
    if (s.contains("dt")) c.scenario.dt = s.at("dt").get<double>();
    if (s.contains("output")) c.scenario.output = parse_output_mode(s.at("output").get<std::string>());
  }
  if (j.contains("structural")) {
    const auto& s = j.at("structural");
    expect_keys(s, "structural", {"mode", "degree", "trials", "tolerance", "max_degree"});
    if (s.contains("mode")) c.mode = s.at("mode").get<std::string>();
    if (s.contains("degree")) c.degree = s.at("degree").get<int>();
    if (s.contains("trials")) c.trials = s.at("trials").get<int>();
    if (s.contains("tolerance")) c.tol = s.at("tolerance").get<double>();
    if (s.contains("max_degree")) c.max_degree = s.at("max_degree").get<int>();
  }
  if (j.contains("direct")) {
    const auto& d = j.at("direct");
    expect_keys(d, "direct",
                {"eps", "starts", "max_evals", "initial_mesh", "mesh_tol", "sweep_fresh_starts"});
    if (d.contains("eps")) c.eps = d.at("eps").get<double>();
    if (d.contains("starts")) c.opt.starts = d.at("starts").get<int>();
    if (d.contains("max_evals")) c.opt.max_evals_per_start = d.at("max_evals").get<int>();
    if (d.contains("initial_mesh")) c.opt.initial_mesh = d.at("initial_mesh").get<double>();
    if (d.contains("mesh_tol")) c.opt.mesh_tol = d.at("mesh_tol").get<double>();
    if (d.contains("sweep_fresh_starts"))
      c.opt.sweep_fresh_starts = d.at("sweep_fresh_starts").get<int>();
  }
  if (j.contains("sweep")) {
    const auto& s = j.at("sweep");
    expect_keys(s, "sweep", {"eps_grid", "eps_min", "eps_max", "points"});
    if (s.contains("eps_grid")) {
      c.eps_grid = s.at("eps_grid").get<std::vector<double>>();
    } else {
      double lo = s.value("eps_min", 1e-6), hi = s.value("eps_max", 1.0);
      int points = s.value("points", 13);
      if (points < 1 || !(lo > 0.0) || !(hi > lo)) config_fail("invalid sweep grid settings");
      c.eps_grid.clear();
      for (int i = 0; i < points; ++i)
        c.eps_grid.push_back(points == 1 ? lo
                                         : std::pow(10.0, std::log10(lo) + (std::log10(hi) -
                                                                            std::log10(lo)) *
                                                                               i / (points - 1)));
    }
  }
  if (j.contains("grid")) {
    const auto& g = j.at("grid");
    expect_keys(g, "grid",
                {"x_param", "y_param", "x_range", "y_range", "x_count", "y_count", "theta_true"});
    if (g.contains("x_param")) c.x_param = g.at("x_param").get<std::string>();
    if (g.contains("y_param")) c.y_param = g.at("y_param").get<std::string>();
    auto range_of = [](const ordered_json& r) {
      auto v = r.get<std::vector<double>>();
      if (v.size() != 2) config_fail("grid range needs exactly [lo, hi]");
      return std::make_pair(v[0], v[1]);
    };
    if (g.contains("x_range")) c.x_range = range_of(g.at("x_range"));
    if (g.contains("y_range")) c.y_range = range_of(g.at("y_range"));
    if (g.contains("x_count")) c.x_count = g.at("x_count").get<int>();
    if (g.contains("y_count")) c.y_count = g.at("y_count").get<int>();
    if (g.contains("theta_true")) c.theta_true = g.at("theta_true").get<std::vector<double>>();
  }
  if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("jobs")) c.jobs = j.at("jobs").get<int>();
  if (j.contains("out_dir")) c.out_dir = j.at("out_dir").get<std::string>();
}

}  // namespace

RunConfig parse_config_text(const std::string& json_text) {
  RunConfig c;
  if (const char* env = std::getenv("CFIDENT_OUT")) c.out_dir = env;
  merge_config_text(c, json_text);
  return c;
}

void merge_config_text(RunConfig& config, const std::string& json_text) {
  ordered_json j;
  try {
    j = ordered_json::parse(json_text);
  } catch (const std::exception& e) {
    config_fail(std::string("config JSON parse failure: ") + e.what());
  }
  if (!j.is_object()) config_fail("config root must be a JSON object");
  apply_json(config, j);
}

RunConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) config_fail("cannot open config file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

std::string config_json(const RunConfig& c, const std::string& command) {
  ordered_json j;
  j["command"] = command;
  if (c.custom_model) {
    ordered_json m;
    m["name"] = c.custom_model->name;
    ordered_json params = ordered_json::array();
    for (const auto& p : c.custom_model->params)
      params.push_back({{"name", p.name}, {"lower", p.lower}, {"upper", p.upper}});
    m["params"] = params;
    m["f_cf"] = c.custom_model->f_cf;
    if (c.custom_model->equilibrium_gap) m["equilibrium_gap"] = *c.custom_model->equilibrium_gap;
    j["model"] = m;
  } else {
    j["model"] = c.model;
  }
  ordered_json s;
  if (c.scenario.equilibrium)
    s["x0"] = "equilibrium";
  else if (c.scenario.x0)
    s["x0"] = {c.scenario.x0->gap, c.scenario.x0->speed};
  if (c.scenario.u0) s["u0"] = *c.scenario.u0;
  if (c.scenario.eq_gap) s["eq_gap"] = *c.scenario.eq_gap;
  s["input"] = c.scenario.input;
  s["horizon"] = c.scenario.horizon;
  s["dt"] = c.scenario.dt;
  s["output"] = c.scenario.output == OutputMode::GapOnly ? "gap" : "gap-speed";
  j["scenario"] = s;
  if (command == "structural" || command == "table1") {
    j["structural"] = {{"mode", c.mode},
                       {"degree", c.degree},
                       {"trials", c.trials},
                       {"tolerance", c.tol},
                       {"max_degree", c.max_degree}};
  }
  if (command == "direct" || command == "sweep" || command == "table3") {
    j["direct"] = {{"eps", c.eps},
                   {"starts", c.opt.starts},
                   {"max_evals", c.opt.max_evals_per_start},
                   {"initial_mesh", c.opt.initial_mesh},
                   {"mesh_tol", c.opt.mesh_tol},
                   {"sweep_fresh_starts", c.opt.sweep_fresh_starts}};
  }
  if (command == "sweep") j["sweep"] = {{"eps_grid", c.eps_grid.empty() ? resolve_eps_grid(c) : c.eps_grid}};
  if (command == "grid") {
    ordered_json g;
    g["x_param"] = c.x_param;
    g["y_param"] = c.y_param;
    if (c.x_range) g["x_range"] = {c.x_range->first, c.x_range->second};
    if (c.y_range) g["y_range"] = {c.y_range->first, c.y_range->second};
    g["x_count"] = c.x_count;
    g["y_count"] = c.y_count;
    g["theta_true"] = c.theta_true;
    j["grid"] = g;
  }
  j["seed"] = c.seed;
  j["jobs"] = c.jobs;
  j["out_dir"] = c.out_dir;
  return j.dump();
}

ModelSpec resolve_model(const RunConfig& config) {
  try {
    if (config.custom_model) {
      const auto& cm = *config.custom_model;
      return ModelSpec(cm.name, cm.params, cm.f_cf, cm.equilibrium_gap);
    }
    return builtin_model(config.model);
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    // bad model name or malformed custom model text is a configuration problem
    config_fail(e.what());
  }
}

InputProfile resolve_input(const std::string& spec) {
  auto split_csv = [](std::string_view text) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (start <= text.size()) {
      std::size_t comma = text.find(',', start);
      if (comma == std::string_view::npos) comma = text.size();
      parts.emplace_back(text.substr(start, comma - start));
      start = comma + 1;
    }
    return parts;
  };
  auto to_double = [](const std::string& s) {
    try {
      std::size_t used = 0;
      double v = std::stod(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      config_fail("malformed number '" + s + "' in input spec");
    }
  };
  if (spec == "shipped") return InputProfile::shipped();
  if (spec.rfind("constant:", 0) == 0) return InputProfile(ConstantInput{to_double(spec.substr(9))});
  if (spec.rfind("poly:", 0) == 0) {
    PolynomialInput p;
    for (const auto& part : split_csv(spec.substr(5))) p.coeffs.push_back(to_double(part));
    if (p.coeffs.empty()) config_fail("poly: input spec needs coefficients");
    return InputProfile(std::move(p));
  }
  if (spec.rfind("pl:", 0) == 0) {
    PiecewiseLinearInput p;
    for (const auto& part : split_csv(spec.substr(3))) {
      std::size_t colon = part.find(':');
      if (colon == std::string::npos) config_fail("pl: entries must look like t:u");
      p.t.push_back(to_double(part.substr(0, colon)));
      p.u.push_back(to_double(part.substr(colon + 1)));
    }
    return InputProfile(std::move(p));
  }
  if (spec.rfind("csv:", 0) == 0) return InputProfile::from_csv(spec.substr(4));
  config_fail("unrecognized input spec '" + spec +
              "' (expected shipped | constant:V | poly:... | pl:... | csv:PATH)");
}

namespace {

std::vector<double> midpoint_theta(const ModelSpec& m) {
  std::vector<double> theta;
  for (const auto& p : m.params()) theta.push_back(0.5 * (p.lower + p.upper));
  return theta;
}

}  // namespace

Scenario resolve_scenario(const RunConfig& config, const ModelSpec& model) {
  Scenario sc;
  sc.input = resolve_input(config.scenario.input);
  sc.horizon = config.scenario.horizon;
  sc.dt = config.scenario.dt;
  sc.output = config.scenario.output;
  if (config.scenario.equilibrium) {
    double u0 = config.scenario.u0 ? *config.scenario.u0 : sc.input.at(0.0);
    std::vector<double> theta = config.theta_true;
    if (theta.empty()) theta = midpoint_theta(model);
    if (static_cast<int>(theta.size()) != model.param_count())
      config_fail("theta_true size does not match model '" + model.name() + "'");
    sc.x0 = equilibrium_ic(model, u0, theta, config.scenario.eq_gap);
  } else if (config.scenario.x0) {
    sc.x0 = *config.scenario.x0;
  } else {
    sc.x0 = State{72.7, 32.5};  // default experiment IC
  }
  sc.validate();
  return sc;
}

std::vector<double> resolve_eps_grid(const RunConfig& config) {
  if (!config.eps_grid.empty()) return config.eps_grid;
  std::vector<double> grid;
  for (int i = 0; i < 13; ++i) grid.push_back(std::pow(10.0, -6.0 + 0.5 * i));
  return grid;
}

namespace {

fs::path prepare_out_dir(const RunConfig& config) {
  fs::path dir(config.out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) config_fail("cannot create output directory '" + config.out_dir + "': " + ec.message());
  return dir;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << content;
}

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

std::string join_doubles(std::span<const double> v, const std::string& sep = ",") {
  std::vector<std::string> parts;
  parts.reserve(v.size());
  for (double x : v) parts.push_back(format_double(x));
  return join(parts, sep);
}

std::string verdict_band(double delta) {
  if (delta > 0.3) return "practically unidentifiable (delta* > 0.3)";
  if (delta < 0.1) return "practically identifiable (delta* < 0.1)";
  return "inconclusive (0.1 <= delta* <= 0.3)";
}

constexpr const char* kBandCaveat =
    "bands are heuristics; no cutoff generalizes across models and error metrics, and "
    "delta* from a local solver is only a lower bound on the true maximum";

RankMode rank_mode_from(const RunConfig& config, const ModelSpec& model) {
  if (config.mode == "generic") return RankMode::generic();
  if (config.mode == "equilibrium") return RankMode::equilibrium();
  if (config.mode == "fixed") {
    Scenario sc = resolve_scenario(config, model);
    return RankMode::fixed(sc.x0);
  }
  config_fail("structural mode must be generic, equilibrium or fixed, got '" + config.mode + "'");
}

std::string rank_report_text(const RankReport& r, const std::string& embedded_config) {
  std::ostringstream out;
  out << "# config: " << embedded_config << "\n";
  out << "model = " << r.model << "\n";
  out << "output = " << to_string(r.output) << "\n";
  out << "mode = " << r.mode << "\n";
  out << "degree = " << r.degree << "\n";
  out << "n_aug = " << r.n_aug << "\n";
  out << "rank = " << r.rank << "\n";
  out << "full = " << (r.full ? "true" : "false") << "\n";
  out << "lie_orders = " << r.lie_orders << "\n";
  out << "verdict = " << (r.full ? "full rank (structurally locally identifiable here)" : "deficient")
      << "\n";
  out << "unidentifiable = " << join(r.unidentifiable, ",") << "\n";
  out << "trials = " << r.trials << "\n";
  out << "tolerance = " << format_double(r.tol) << "\n";
  out << "seed = " << r.seed << "\n";
  return out.str();
}

}  // namespace

int run_structural(const RunConfig& config) {
  ModelSpec model = resolve_model(config);
  AugmentedSystem sys = augment(model, config.scenario.output);
  OIMatrix oi = build_oi(sys);
  RankMode mode = rank_mode_from(config, model);
  RankOptions opt{config.trials, config.tol, config.seed};
  RankReport report = generic_rank(sys, oi, mode, config.degree, opt);

  fs::path dir = prepare_out_dir(config);
  std::string name = "structural_" + model.name() + "_" + config.mode + "_deg" +
                     std::to_string(config.degree) + ".txt";
  write_file(dir / name, rank_report_text(report, config_json(config, "structural")));

  std::cout << model.name() << " (" << config.mode << ", degree " << config.degree
            << "): " << (report.full ? "full rank " : "deficient, rank ") << report.rank << "/"
            << report.n_aug;
  if (!report.unidentifiable.empty())
    std::cout << ", unidentifiable: " << join(report.unidentifiable, ",");
  std::cout << "\n  -> " << (dir / name).string() << "\n";
  return kOk;
}

int run_table1(const RunConfig& config) {
  fs::path dir = prepare_out_dir(config);
  std::string embedded = config_json(config, "table1");
  RankOptions opt{config.trials, config.tol, config.seed};

  std::ostringstream txt, csv;
  txt << "# config: " << embedded << "\n";
  txt << "Structural local identifiability (admissible polynomial input degree n)\n\n";
  csv << "# config: " << embedded << "\n";
  csv << "model,params,generic_ic,equilibrium_ic\n";

  std::ostringstream body;
  body << "model     params                 generic x0    equilibrium x0*\n";
  bool all_ok = true;
  for (const std::string& name : builtin_model_names()) {
    const ModelSpec& model = builtin_model(name);
    AugmentedSystem sys = augment(model, config.scenario.output);
    OIMatrix oi = build_oi(sys);
    auto generic = min_admissible_degree(sys, oi, RankMode::generic(), 1, opt);
    auto equil = min_admissible_degree(sys, oi, RankMode::equilibrium(), 3, opt);
    auto cell = [](const std::optional<int>& deg) {
      return deg ? "n>=" + std::to_string(*deg) : std::string("N/A");
    };
    std::vector<std::string> pnames;
    for (const auto& p : model.params()) pnames.push_back(p.name);
    std::string params = join(pnames, ",");
    body << name << std::string(10 - name.size(), ' ') << params
         << std::string(params.size() < 22 ? 22 - params.size() : 1, ' ') << cell(generic)
         << std::string(cell(generic).size() < 13 ? 14 - cell(generic).size() : 1, ' ')
         << cell(equil) << "\n";
    csv << name << "," << params << "," << cell(generic) << "," << cell(equil) << "\n";
    all_ok = all_ok && generic.has_value();
  }
  txt << body.str();
  write_file(dir / "table1.txt", txt.str());
  write_file(dir / "table1.csv", csv.str());
  std::cout << body.str() << "\n-> " << (dir / "table1.txt").string() << "\n";
  return all_ok ? kOk : kInternalError;
}

namespace {

DirectTestProblem build_problem(const RunConfig& config, const ModelSpec& model) {
  DirectTestProblem p{model, resolve_scenario(config, model), config.eps, config.opt};
  p.opt.seed = config.seed;
  p.opt.jobs = config.jobs;
  return p;
}

std::string direct_report_text(const RunConfig& config, const ModelSpec& model,
                               const DirectTestResult& r, const std::string& embedded) {
  std::ostringstream out;
  out << "# config: " << embedded << "\n";
  out << "model = " << model.name() << "\n";
  out << "eps = " << format_double(config.eps) << "\n";
  out << "delta = " << format_double(r.delta) << "\n";
  out << "error = " << format_double(r.error) << "\n";
  out << "feasible = " << (r.feasible ? "true" : "false") << "\n";
  out << "evaluations = " << r.evaluations << "\n";
  out << "best_start = " << r.best_start << "\n";
  out << "verdict = " << verdict_band(r.delta) << "\n";
  out << "note = " << kBandCaveat << "\n";
  out << "theta1 = " << join_doubles(r.theta1) << "\n";
  out << "theta2 = " << join_doubles(r.theta2) << "\n";
  for (int i = 0; i < model.param_count(); ++i) {
    out << "param " << model.params()[static_cast<std::size_t>(i)].name << " = "
        << format_double(r.theta1[static_cast<std::size_t>(i)]) << " | "
        << format_double(r.theta2[static_cast<std::size_t>(i)]) << "\n";
  }
  return out.str();
}

std::string overlay_csv(const ModelSpec& model, const Scenario& sc, const DirectTestResult& r,
                        const std::string& embedded) {
  Trajectory t1 = simulate(model, sc, r.theta1);
  Trajectory t2 = simulate(model, sc, r.theta2);
  std::ostringstream csv;
  csv << "# config: " << embedded << "\n";
  csv << "t,gap_theta1,speed_theta1,gap_theta2,speed_theta2\n";
  for (std::size_t k = 0; k < t1.size(); ++k) {
    csv << format_double(t1.t[k]) << "," << format_double(t1.gap[k]) << ","
        << format_double(t1.speed[k]) << "," << format_double(t2.gap[k]) << ","
        << format_double(t2.speed[k]) << "\n";
  }
  return csv.str();
}

int direct_common(const RunConfig& config, const std::string& command) {
  ModelSpec model = resolve_model(config);
  DirectTestProblem p = build_problem(config, model);
  DirectTestResult r = solve(p);
  std::string embedded = config_json(config, command);

  fs::path dir = prepare_out_dir(config);
  std::string stem = command == "table3" ? "table3" : "direct_" + model.name();
  write_file(dir / (stem + ".txt"), direct_report_text(config, model, r, embedded));
  write_file(dir / (stem + "_trajectories.csv"), overlay_csv(model, p.scenario, r, embedded));

  std::cout << model.name() << ": delta* = " << format_double(r.delta)
            << " (e* = " << format_double(r.error) << " <= eps = " << format_double(config.eps)
            << ")\n  " << verdict_band(r.delta) << "\n  note: " << kBandCaveat << "\n  -> "
            << (dir / (stem + ".txt")).string() << "\n";
  if (command == "table3") {
    std::cout << "  param        theta1*      theta2*\n";
    for (int i = 0; i < model.param_count(); ++i) {
      std::cout << "  " << model.params()[static_cast<std::size_t>(i)].name << "  "
                << format_double(r.theta1[static_cast<std::size_t>(i)]) << "  "
                << format_double(r.theta2[static_cast<std::size_t>(i)]) << "\n";
    }
  }
  return r.feasible ? kOk : kInfeasibleCode;
}

}  // namespace

int run_direct(const RunConfig& config) { return direct_common(config, "direct"); }

int run_table3(const RunConfig& config) {
  RunConfig c = config;
  c.model = "cthrv";
  c.custom_model.reset();
  c.scenario.x0 = State{72.7, 32.5};
  c.scenario.equilibrium = false;
  c.scenario.input = "shipped";
  c.eps = 1e-6;
  return direct_common(c, "table3");
}

int run_sweep(const RunConfig& config) {
  ModelSpec model = resolve_model(config);
  DirectTestProblem p = build_problem(config, model);
  std::vector<double> grid = resolve_eps_grid(config);
  SensitivityCurve curve = sweep(p, grid);
  std::string embedded = config_json(config, "sweep");

  std::ostringstream csv;
  csv << "# config: " << embedded << "\n";
  csv << "eps,delta,solved";
  for (const auto& par : model.params()) csv << ",theta1_" << par.name;
  for (const auto& par : model.params()) csv << ",theta2_" << par.name;
  csv << "\n";
  for (const auto& pt : curve) {
    csv << format_double(pt.eps) << "," << format_double(pt.delta) << ","
        << (pt.solved ? "true" : "false");
    auto emit = [&](const std::vector<double>& v) {
      for (int i = 0; i < model.param_count(); ++i)
        csv << ","
            << (v.empty() ? "nan" : format_double(v[static_cast<std::size_t>(i)]));
    };
    emit(pt.theta1);
    emit(pt.theta2);
    csv << "\n";
  }
  fs::path dir = prepare_out_dir(config);
  std::string name = "sweep_" + model.name() + ".csv";
  write_file(dir / name, csv.str());

  std::cout << model.name() << " sweep: delta*(" << format_double(grid.front())
            << ") = " << format_double(curve.front().delta) << ", delta*("
            << format_double(grid.back()) << ") = " << format_double(curve.back().delta)
            << "\n  -> " << (dir / name).string() << "\n";
  return kOk;
}

int run_grid(const RunConfig& config) {
  ModelSpec model = resolve_model(config);
  if (config.x_param.empty() || config.y_param.empty())
    config_fail("grid needs x_param and y_param");
  int xi = model.param_index(config.x_param);
  int yi = model.param_index(config.y_param);
  if (xi < 0) config_fail("unknown grid parameter '" + config.x_param + "'");
  if (yi < 0) config_fail("unknown grid parameter '" + config.y_param + "'");
  if (config.theta_true.empty()) config_fail("grid needs theta_true");
  if (static_cast<int>(config.theta_true.size()) != model.param_count())
    config_fail("theta_true size does not match model '" + model.name() + "'");
  auto xr = config.x_range ? *config.x_range
                           : std::make_pair(model.params()[static_cast<std::size_t>(xi)].lower,
                                            model.params()[static_cast<std::size_t>(xi)].upper);
  auto yr = config.y_range ? *config.y_range
                           : std::make_pair(model.params()[static_cast<std::size_t>(yi)].lower,
                                            model.params()[static_cast<std::size_t>(yi)].upper);

  Scenario sc = resolve_scenario(config, model);
  ErrorGrid grid =
      error_grid(model, sc, config.theta_true, xi, yi, xr, yr, config.x_count, config.y_count);

  std::ostringstream csv;
  csv << "# config: " << config_json(config, "grid") << "\n";
  csv << grid.x_param << "\\" << grid.y_param;
  for (double y : grid.y_values) csv << "," << format_double(y);
  csv << "\n";
  for (std::size_t i = 0; i < grid.x_values.size(); ++i) {
    csv << format_double(grid.x_values[i]);
    for (std::size_t jj = 0; jj < grid.y_values.size(); ++jj)
      csv << "," << format_double(grid.e[i][jj]);
    csv << "\n";
  }
  fs::path dir = prepare_out_dir(config);
  std::string name = "grid_" + model.name() + "_" + grid.x_param + "_" + grid.y_param + ".csv";
  write_file(dir / name, csv.str());
  std::cout << model.name() << " error grid " << grid.x_param << " x " << grid.y_param << " ("
            << config.x_count << "x" << config.y_count << ")\n  -> " << (dir / name).string()
            << "\n";
  return kOk;
}

int guarded(const std::function<int()>& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigErrorCode;
  } catch (const ParseError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigErrorCode;
  } catch (const InfeasibleError& e) {
    std::cerr << "infeasible: " << e.what() << "\n";
    return kInfeasibleCode;
  } catch (const DomainError& e) {
    std::cerr << "domain violation: " << e.what() << "\n";
    return kDomainErrorCode;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInternalError;
  }
}

}  // namespace cfident
