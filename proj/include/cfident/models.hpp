#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cfident/expr.hpp"

namespace cfident {

// Ego state of the car-following ODE: space gap to the leader (m) and ego
// speed (m/s).
struct State {
  double gap = 0.0;
  double speed = 0.0;
};

struct ParamSpec {
  std::string name;
  double lower = 0.0;
  double upper = 0.0;
};

// A car-following model as a symbolic system: acceleration dynamics
// f_CF(s, v, u, theta) plus the closed-form equilibrium gap s0*(u0, theta)
// when the model determines one (FTL admits any gap at equilibrium).
//
// The symbol table is laid out as [s, v, u, theta...] and is shared by the
// dynamics and equilibrium expressions; in the equilibrium expression the
// input symbol u stands for the initial lead speed u0.
class ModelSpec {
 public:
  ModelSpec(std::string name, std::vector<ParamSpec> params, const std::string& f_cf_text,
            const std::optional<std::string>& equilibrium_gap_text);

  const std::string& name() const { return name_; }
  const std::vector<ParamSpec>& params() const { return params_; }
  int param_count() const { return static_cast<int>(params_.size()); }
  int param_index(std::string_view name) const;  // -1 when absent

  const SymbolTable& table() const { return *table_; }
  std::shared_ptr<const SymbolTable> table_ptr() const { return table_; }
  const Symbol* gap_symbol() const { return s_; }
  const Symbol* speed_symbol() const { return v_; }
  const Symbol* input_symbol() const { return u_; }
  const Symbol* param_symbol(int i) const { return theta_[static_cast<std::size_t>(i)]; }

  Expr dynamics() const { return f_cf_; }
  std::optional<Expr> equilibrium_gap() const { return eq_gap_; }

  // Compiled dynamics over the input layout [s, v, u, theta...].
  const Tape& dynamics_tape() const { return tape_; }

 private:
  std::string name_;
  std::vector<ParamSpec> params_;
  std::shared_ptr<SymbolTable> table_;
  const Symbol* s_ = nullptr;
  const Symbol* v_ = nullptr;
  const Symbol* u_ = nullptr;
  std::vector<const Symbol*> theta_;
  Expr f_cf_;
  std::optional<Expr> eq_gap_;
  Tape tape_;
};

// The four catalog models: cthrv, ov, ftl, idm (case-insensitive, "cth-rv"
// also accepted). Throws Error for unknown names.
const ModelSpec& builtin_model(std::string_view name);
std::vector<std::string> builtin_model_names();

// Equilibrium initial condition x0* = [s0*, u0] with zero initial
// acceleration. FTL does not determine the gap; pass `gap` explicitly for it.
// Throws DomainError when no equilibrium exists for this (u0, theta) or the
// residual check |f_CF| <= 1e-9 fails.
State equilibrium_ic(const ModelSpec& m, double u0, std::span<const double> theta,
                     std::optional<double> gap = std::nullopt);

// f_CF evaluated at (x, u, theta).
double acceleration(const ModelSpec& m, const State& x, double u, std::span<const double> theta);

}  // namespace cfident
