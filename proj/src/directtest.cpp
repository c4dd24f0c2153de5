#include "cfident/directtest.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace cfident {

double distance(std::span<const double> theta1, std::span<const double> theta2,
                std::span<const ParamSpec> bounds) {
  if (theta1.size() != bounds.size() || theta2.size() != bounds.size())
    throw Error("distance: vector size mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < bounds.size(); ++i) {
    double w = (theta1[i] - theta2[i]) / (bounds[i].upper - bounds[i].lower);
    sum += w * w;
  }
  return std::sqrt(sum / static_cast<double>(bounds.size()));
}

namespace {

struct StartOutcome {
  std::vector<double> x;  // concatenated (theta1, theta2)
  double d = -1.0;
  double e = 0.0;
  long evals = 0;
  bool valid = false;
};

struct PollContext {
  const Simulator* sim;
  std::span<const ParamSpec> bounds;
  double eps;
  int n;  // parameters per vector
};

double pair_distance(const PollContext& ctx, std::span<const double> x) {
  double sum = 0.0;
  for (int i = 0; i < ctx.n; ++i) {
    double w = (x[static_cast<std::size_t>(i)] - x[static_cast<std::size_t>(ctx.n + i)]) /
               (ctx.bounds[static_cast<std::size_t>(i)].upper -
                ctx.bounds[static_cast<std::size_t>(i)].lower);
    sum += w * w;
  }
  return std::sqrt(sum / ctx.n);
}

// e(theta1, theta2) with the eps cap; feasible iff ok and e <= eps.
bool evaluate_pair(const PollContext& ctx, std::span<const double> x, double& e_out) {
  bool ok = true;
  double e = ctx.sim->paired_error(x.subspan(0, static_cast<std::size_t>(ctx.n)),
                                   x.subspan(static_cast<std::size_t>(ctx.n)), ctx.eps, ok);
  e_out = e;
  return ok && e <= ctx.eps;
}

// Pattern search from a feasible start; x0 must satisfy e <= eps.
StartOutcome pattern_search(const PollContext& ctx, std::vector<double> x0, double e0,
                            const OptimizerSettings& opt) {
  const int n = ctx.n;
  const int dim = 2 * n;
  StartOutcome cur;
  cur.x = std::move(x0);
  cur.d = pair_distance(ctx, cur.x);
  cur.e = e0;
  cur.valid = true;

  std::vector<double> width(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    width[static_cast<std::size_t>(i)] =
        ctx.bounds[static_cast<std::size_t>(i)].upper - ctx.bounds[static_cast<std::size_t>(i)].lower;
  auto clamp_coord = [&](int coord, double value) {
    const auto& b = ctx.bounds[static_cast<std::size_t>(coord % n)];
    return std::clamp(value, b.lower, b.upper);
  };

  double mesh = opt.initial_mesh;
  std::vector<double> cand(static_cast<std::size_t>(dim));
  while (mesh >= opt.mesh_tol && cur.evals < opt.max_evals_per_start) {
    bool moved = false;

    // split polls: one coordinate of one vector; accept on strict d increase
    for (int c = 0; c < dim && !moved; ++c) {
      for (int sign = 0; sign < 2 && !moved; ++sign) {
        if (cur.evals >= opt.max_evals_per_start) break;
        double step = (sign ? -1.0 : 1.0) * mesh * width[static_cast<std::size_t>(c % n)];
        cand = cur.x;
        double moved_to = clamp_coord(c, cand[static_cast<std::size_t>(c)] + step);
        if (moved_to == cand[static_cast<std::size_t>(c)]) continue;
        cand[static_cast<std::size_t>(c)] = moved_to;
        double e = 0.0;
        ++cur.evals;
        if (!evaluate_pair(ctx, cand, e)) continue;
        double d = pair_distance(ctx, cand);
        if (d > cur.d + 1e-15 * (1.0 + cur.d)) {
          cur.x = cand;
          cur.d = d;
          cur.e = e;
          moved = true;
        }
      }
    }

    // shared polls: the same parameter of both vectors; distance-neutral,
    // accept on strict e decrease (lets the pair slide along output-
    // equivalent sets without breaking the barrier)
    if (!moved && cur.e > 0.0) {
      for (int i = 0; i < n && !moved; ++i) {
        for (int sign = 0; sign < 2 && !moved; ++sign) {
          if (cur.evals >= opt.max_evals_per_start) break;
          double step = (sign ? -1.0 : 1.0) * mesh * width[static_cast<std::size_t>(i)];
          cand = cur.x;
          double a = clamp_coord(i, cand[static_cast<std::size_t>(i)] + step);
          double b = clamp_coord(n + i, cand[static_cast<std::size_t>(n + i)] + step);
          if (a == cand[static_cast<std::size_t>(i)] && b == cand[static_cast<std::size_t>(n + i)])
            continue;
          cand[static_cast<std::size_t>(i)] = a;
          cand[static_cast<std::size_t>(n + i)] = b;
          double d = pair_distance(ctx, cand);
          // clamping can break distance neutrality; keep this a pure slide
          if (std::abs(d - cur.d) > 1e-12 * (1.0 + cur.d)) continue;
          double e = 0.0;
          ++cur.evals;
          if (!evaluate_pair(ctx, cand, e)) continue;
          if (e < cur.e * (1.0 - 1e-12)) {
            cur.x = cand;
            cur.d = d;
            cur.e = e;
            moved = true;
          }
        }
      }
    }

    mesh = moved ? std::min(mesh * 2.0, 0.5) : mesh * 0.5;
  }
  return cur;
}

struct StartPoint {
  std::vector<double> x;
  double e = 0.0;
};

DirectTestResult solve_multi(const DirectTestProblem& p, const Simulator& sim,
                             std::span<const StartPoint> warm_starts, int fresh_starts,
                             std::uint64_t seed_offset) {
  const auto& bounds = p.model.params();
  const int n = p.model.param_count();
  PollContext ctx{&sim, bounds, p.eps, n};
  if (!(p.eps >= 0.0)) throw Error("direct test: eps must be >= 0");

  const std::size_t total = warm_starts.size() + static_cast<std::size_t>(fresh_starts);
  std::vector<StartOutcome> outcomes(total);
  parallel_for(total, p.opt.jobs, [&](std::size_t idx) {
    if (idx < warm_starts.size()) {
      outcomes[idx] =
          pattern_search(ctx, warm_starts[idx].x, warm_starts[idx].e, p.opt);
      return;
    }
    // fresh start: theta1 = theta2 = random in-bounds point (e = 0), retried
    // across points whose simulation fails outright
    std::size_t fresh_idx = idx - warm_starts.size();
    Rng rng(p.opt.seed + seed_offset, static_cast<std::uint64_t>(fresh_idx));
    StartOutcome out;
    for (int attempt = 0; attempt < 32; ++attempt) {
      std::vector<double> x(static_cast<std::size_t>(2 * n));
      for (int i = 0; i < n; ++i) {
        double v = rng.uniform(bounds[static_cast<std::size_t>(i)].lower,
                               bounds[static_cast<std::size_t>(i)].upper);
        x[static_cast<std::size_t>(i)] = v;
        x[static_cast<std::size_t>(n + i)] = v;
      }
      double e = 0.0;
      out.evals += 1;
      if (!evaluate_pair(ctx, x, e)) continue;
      long spent = out.evals;
      out = pattern_search(ctx, std::move(x), e, p.opt);
      out.evals += spent;
      break;
    }
    outcomes[idx] = out;
  });

  DirectTestResult result;
  long total_evals = 0;
  int best = -1;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    total_evals += outcomes[i].evals;
    if (!outcomes[i].valid) continue;
    if (best < 0 || outcomes[i].d > outcomes[static_cast<std::size_t>(best)].d)
      best = static_cast<int>(i);
  }
  result.evaluations = total_evals;
  if (best < 0) {
    throw InfeasibleError("direct test: no feasible start point found for model '" +
                          p.model.name() + "'");
  }
  const StartOutcome& winner = outcomes[static_cast<std::size_t>(best)];
  result.theta1.assign(winner.x.begin(), winner.x.begin() + n);
  result.theta2.assign(winner.x.begin() + n, winner.x.end());
  result.best_start = best;
  result.delta = distance(result.theta1, result.theta2, bounds);
  // end-to-end feasibility recheck; do not trust optimizer bookkeeping
  bool ok = true;
  result.error =
      sim.paired_error(result.theta1, result.theta2, std::numeric_limits<double>::infinity(), ok);
  result.feasible = ok && result.error <= p.eps;
  return result;
}

}  // namespace

DirectTestResult solve(const DirectTestProblem& p) {
  Simulator sim(p.model, p.scenario);
  return solve_multi(p, sim, {}, p.opt.starts, 0);
}

SensitivityCurve sweep(const DirectTestProblem& p, std::span<const double> eps_grid) {
  for (std::size_t i = 1; i < eps_grid.size(); ++i)
    if (!(eps_grid[i] > eps_grid[i - 1]))
      throw Error("sweep: eps grid must be strictly increasing");
  Simulator sim(p.model, p.scenario);

  SensitivityCurve curve;
  std::optional<DirectTestResult> incumbent;
  for (std::size_t gi = 0; gi < eps_grid.size(); ++gi) {
    DirectTestProblem point = p;
    point.eps = eps_grid[gi];
    SweepPoint sp;
    sp.eps = point.eps;
    std::vector<StartPoint> warm;
    int fresh = p.opt.starts;
    if (incumbent) {
      StartPoint w;
      w.x = incumbent->theta1;
      w.x.insert(w.x.end(), incumbent->theta2.begin(), incumbent->theta2.end());
      w.e = incumbent->error;
      warm.push_back(std::move(w));
      fresh = p.opt.sweep_fresh_starts;
      // continuation points refine the carried incumbent; a quarter of the
      // first-point budget is enough for that and keeps long sweeps tractable
      point.opt.max_evals_per_start = std::max(2000, p.opt.max_evals_per_start / 4);
    }
    try {
      // the first grid point replays exactly what a plain solve would do
      DirectTestResult r = solve_multi(point, sim, warm, fresh, gi == 0 ? 0 : 1000 * gi);
      // monotone carry-forward: a pair feasible at a smaller eps stays feasible
      if (incumbent && incumbent->feasible && incumbent->delta > r.delta) {
        r.theta1 = incumbent->theta1;
        r.theta2 = incumbent->theta2;
        r.delta = incumbent->delta;
        r.error = incumbent->error;
        r.feasible = true;
      }
      sp.delta = r.delta;
      sp.theta1 = r.theta1;
      sp.theta2 = r.theta2;
      sp.solved = true;
      incumbent = std::move(r);
    } catch (const InfeasibleError&) {
      // record the failure and keep going; carry the previous incumbent
      if (incumbent) {
        sp.delta = incumbent->delta;
        sp.theta1 = incumbent->theta1;
        sp.theta2 = incumbent->theta2;
      }
      sp.solved = false;
    }
    curve.push_back(std::move(sp));
  }
  return curve;
}

}  // namespace cfident
