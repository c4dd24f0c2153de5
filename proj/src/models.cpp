#include "cfident/models.hpp"

#include <algorithm>
#include <cmath>

namespace cfident {

ModelSpec::ModelSpec(std::string name, std::vector<ParamSpec> params, const std::string& f_cf_text,
                     const std::optional<std::string>& equilibrium_gap_text)
    : name_(std::move(name)), params_(std::move(params)), table_(std::make_shared<SymbolTable>()) {
  if (params_.empty()) throw Error("model '" + name_ + "' has no parameters");
  for (const auto& p : params_) {
    if (!(p.lower < p.upper))
      throw Error("model '" + name_ + "': parameter '" + p.name + "' needs lower < upper");
  }
  s_ = table_->add_state("s");
  v_ = table_->add_state("v");
  u_ = table_->add_input_family("u", 0);
  for (const auto& p : params_) theta_.push_back(table_->add_parameter(p.name));

  f_cf_ = parse(f_cf_text, *table_);
  if (equilibrium_gap_text) eq_gap_ = parse(*equilibrium_gap_text, *table_);

  std::vector<const Symbol*> layout;
  layout.push_back(s_);
  layout.push_back(v_);
  layout.push_back(u_);
  layout.insert(layout.end(), theta_.begin(), theta_.end());
  tape_ = Tape::compile(std::span<const Expr>(&f_cf_, 1), layout);
}

int ModelSpec::param_index(std::string_view name) const {
  for (std::size_t i = 0; i < params_.size(); ++i)
    if (params_[i].name == name) return static_cast<int>(i);
  return -1;
}

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

ModelSpec make_cthrv() {
  return ModelSpec("cthrv",
                   {{"k1", 0.001, 1.0}, {"k2", 0.01, 1.0}, {"tau", 0.1, 3.0}},
                   "k1*(s - tau*v) + k2*(u - v)", "tau*u");
}

ModelSpec make_ov() {
  // optimal-velocity term V(s) = a*(tanh((s-hm)/b) + tanh(hm/b))
  return ModelSpec("ov",
                   {{"alpha", 0.5, 3.3}, {"a", 10.0, 32.0}, {"hm", 2.0, 30.0}, {"b", 18.0, 45.0}},
                   "alpha*(a*(tanh((s - hm)/b) + tanh(hm/b)) - v)",
                   "hm - b*atanh(tanh(hm/b) - u/a)");
}

ModelSpec make_ftl() {
  // any gap is an equilibrium once v = u, so no equilibrium-gap expression
  return ModelSpec("ftl", {{"C", 100.0, 600.0}, {"gamma", 1.0, 3.0}}, "C*(u - v)/s^gamma",
                   std::nullopt);
}

ModelSpec make_idm() {
  return ModelSpec(
      "idm",
      {{"sj", 3.0, 25.0}, {"vf", 21.0, 41.0}, {"T", 0.1, 3.0}, {"a", 0.1, 3.0}, {"b", 0.5, 5.0}},
      "a*(1 - (v/vf)^4 - ((sj + v*T + v*(u - v)/(2*sqrt(a*b)))/s)^2)",
      "(sj + u*T)/sqrt(1 - (u/vf)^4)");
}

}  // namespace

const ModelSpec& builtin_model(std::string_view name) {
  static const ModelSpec cthrv = make_cthrv();
  static const ModelSpec ov = make_ov();
  static const ModelSpec ftl = make_ftl();
  static const ModelSpec idm = make_idm();
  std::string n = lower(name);
  if (n == "cthrv" || n == "cth-rv") return cthrv;
  if (n == "ov") return ov;
  if (n == "ftl") return ftl;
  if (n == "idm") return idm;
  throw Error("unknown model '" + std::string(name) + "' (expected cthrv, ov, ftl or idm)");
}

std::vector<std::string> builtin_model_names() { return {"cthrv", "ov", "ftl", "idm"}; }

State equilibrium_ic(const ModelSpec& m, double u0, std::span<const double> theta,
                     std::optional<double> gap) {
  if (static_cast<int>(theta.size()) != m.param_count())
    throw Error("equilibrium_ic: theta size mismatch for model '" + m.name() + "'");
  State x0;
  x0.speed = u0;
  if (m.equilibrium_gap()) {
    Bindings point;
    point.emplace(m.input_symbol(), u0);
    for (int i = 0; i < m.param_count(); ++i)
      point.emplace(m.param_symbol(i), theta[static_cast<std::size_t>(i)]);
    x0.gap = evaluate(*m.equilibrium_gap(), point);
  } else {
    if (!gap)
      throw DomainError("model '" + m.name() +
                        "' does not determine an equilibrium gap; one must be supplied");
    x0.gap = *gap;
  }
  double residual = acceleration(m, x0, u0, theta);
  if (!(std::abs(residual) <= 1e-9))
    throw DomainError("equilibrium initial condition for '" + m.name() +
                      "' has nonzero acceleration residual " + format_double(residual));
  return x0;
}

double acceleration(const ModelSpec& m, const State& x, double u, std::span<const double> theta) {
  if (static_cast<int>(theta.size()) != m.param_count())
    throw Error("acceleration: theta size mismatch for model '" + m.name() + "'");
  Bindings point;
  point.emplace(m.gap_symbol(), x.gap);
  point.emplace(m.speed_symbol(), x.speed);
  point.emplace(m.input_symbol(), u);
  for (int i = 0; i < m.param_count(); ++i)
    point.emplace(m.param_symbol(i), theta[static_cast<std::size_t>(i)]);
  return evaluate(m.dynamics(), point);
}

}  // namespace cfident
