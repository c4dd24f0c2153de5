#include "cfident/structural.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/SVD>

namespace cfident {

std::string to_string(OutputMode m) {
  return m == OutputMode::GapOnly ? "gap" : "gap-speed";
}

std::string RankMode::describe() const {
  std::string base = ic == ICMode::Generic       ? "generic"
                     : ic == ICMode::Equilibrium ? "equilibrium"
                                                 : "fixed";
  if (theta) base += "+pinned-theta";
  return base;
}

const SamplingRanges& sampling_ranges() {
  static const SamplingRanges r;
  return r;
}

AugmentedSystem augment(const ModelSpec& m, OutputMode output, int max_input_order) {
  int n_aug = 2 + m.param_count();
  if (max_input_order < 0) max_input_order = std::max(n_aug + 2, 5);
  if (max_input_order < n_aug - 1)
    throw Error("augment: input family must reach order n_aug - 1 = " + std::to_string(n_aug - 1));

  AugmentedSystem sys{std::make_shared<SymbolTable>(), m, output, {}, {}, {}, 2};
  const Symbol* s = sys.table->add_state("s");
  const Symbol* v = sys.table->add_state("v");
  sys.aug_states = {s, v};
  for (const auto& p : m.params()) sys.aug_states.push_back(sys.table->add_parameter(p.name));
  const Symbol* u0 = sys.table->add_input_family("u", max_input_order);

  // rebase the model dynamics onto the augmented table
  ExprBindings rebind;
  rebind.emplace(m.gap_symbol(), make_symbol(s));
  rebind.emplace(m.speed_symbol(), make_symbol(v));
  rebind.emplace(m.input_symbol(), make_symbol(u0));
  for (int i = 0; i < m.param_count(); ++i)
    rebind.emplace(m.param_symbol(i), make_symbol(sys.aug_states[static_cast<std::size_t>(2 + i)]));
  Expr f_cf = substitute(m.dynamics(), rebind);

  sys.f.push_back(make_symbol(u0) - make_symbol(v));
  sys.f.push_back(f_cf);
  for (int i = 0; i < m.param_count(); ++i) sys.f.push_back(make_constant(0.0));

  sys.g.push_back(make_symbol(s));
  if (output == OutputMode::GapAndSpeed) sys.g.push_back(make_symbol(v));
  return sys;
}

Expr extended_lie_step(const AugmentedSystem& sys, Expr h) {
  Expr acc = make_constant(0.0);
  for (std::size_t k = 0; k < sys.aug_states.size(); ++k) {
    if (sys.f[k].is_constant(0.0)) continue;
    acc = acc + differentiate(h, sys.aug_states[k]) * sys.f[k];
  }
  int J = sys.max_input_order();
  for (int j = 0; j + 1 <= J; ++j) {
    Expr dj = differentiate(h, sys.table->input(j));
    if (dj.is_constant(0.0)) continue;
    acc = acc + dj * make_symbol(sys.table->input(j + 1));
  }
  return acc;
}

Expr extended_lie(const AugmentedSystem& sys, Expr h, int order) {
  if (order < 0) throw Error("extended_lie: negative order");
  if (order > sys.max_input_order())
    throw Error("extended_lie: order " + std::to_string(order) +
                " exceeds the housed input family (J = " +
                std::to_string(sys.max_input_order()) + ")");
  Expr L = h;
  for (int i = 0; i < order; ++i) L = extended_lie_step(sys, L);
  return L;
}

std::vector<Expr> lie_derivatives(const AugmentedSystem& sys, Expr h, int max_order) {
  std::vector<Expr> out;
  out.reserve(static_cast<std::size_t>(max_order) + 1);
  out.push_back(h);
  for (int i = 1; i <= max_order; ++i) out.push_back(extended_lie_step(sys, out.back()));
  return out;
}

OIMatrix build_oi(const AugmentedSystem& sys) {
  OIMatrix m;
  m.table = sys.table;
  m.aug_states = sys.aug_states;
  m.n_aug = sys.n_aug();
  for (const Expr& g : sys.g) {
    std::vector<Expr> lies = lie_derivatives(sys, g, m.n_aug - 1);
    for (const Expr& L : lies) {
      std::vector<Expr>& row = m.rows.emplace_back();
      row.reserve(sys.aug_states.size());
      for (const Symbol* x : sys.aug_states) row.push_back(differentiate(L, x));
    }
  }
  return m;
}

int matrix_rank(const Eigen::MatrixXd& m, double tol) {
  if (m.rows() == 0 || m.cols() == 0) return 0;
  Eigen::MatrixXd a = m;
  // Row max-abs equilibration (D * M keeps the rank) so that Lie-derivative
  // rows whose scales grow with the order do not mask each other in the SVD
  // cut. Rows that are pure rounding noise relative to the matrix stay
  // unscaled, and columns are never scaled: amplifying a numerically-zero
  // column would fabricate rank.
  double global_max = a.cwiseAbs().maxCoeff();
  if (global_max == 0.0) return 0;
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    double mx = a.row(r).cwiseAbs().maxCoeff();
    if (mx > 1e-14 * global_max) a.row(r) /= mx;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0 || sv(0) == 0.0) return 0;
  int rank = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv(i) > tol * sv(0)) ++rank;
  return rank;
}

Eigen::MatrixXd evaluate_matrix(const OIMatrix& m, const Bindings& point) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(m.rows.size()), m.n_aug);
  for (std::size_t r = 0; r < m.rows.size(); ++r)
    for (int c = 0; c < m.n_aug; ++c)
      out(static_cast<Eigen::Index>(r), c) = evaluate(m.rows[r][static_cast<std::size_t>(c)], point);
  return out;
}

int numeric_rank(const OIMatrix& m, const Bindings& point, double tol) {
  Eigen::MatrixXd a = evaluate_matrix(m, point);
  if (!a.allFinite()) throw DomainError("numeric_rank: matrix evaluation is not finite");
  return matrix_rank(a, tol);
}

namespace {

// Rank of the matrix with one column removed.
int rank_without_column(const Eigen::MatrixXd& a, int col, double tol) {
  Eigen::MatrixXd reduced(a.rows(), a.cols() - 1);
  reduced.leftCols(col) = a.leftCols(col);
  reduced.rightCols(a.cols() - col - 1) = a.rightCols(a.cols() - col - 1);
  return matrix_rank(reduced, tol);
}

}  // namespace

namespace {

struct TrialSweep {
  int best_rank = 0;
  std::vector<int> best_colrank;
  int successes = 0;
};

// Evaluates the given gradient rows at `trials` sampled points and collects
// the max rank plus the max rank under each single-column removal. The draw
// sequence depends only on (seed, trial), so extending the row set revisits
// the same points.
TrialSweep run_trials(const AugmentedSystem& sys, const std::vector<std::vector<Expr>>& rows,
                      const RankMode& mode, int degree, const RankOptions& opt) {
  const ModelSpec& model = sys.model;
  const auto& ranges = sampling_ranges();
  const int n_params = model.param_count();
  const int n_aug = sys.n_aug();
  const int J = sys.max_input_order();
  const Eigen::Index n_rows = static_cast<Eigen::Index>(rows.size());

  std::vector<Expr> flat;
  flat.reserve(rows.size() * static_cast<std::size_t>(n_aug));
  for (const auto& row : rows)
    for (const Expr& e : row) flat.push_back(e);
  Tape tape = Tape::compile(flat, sys.table->all());

  std::vector<double> in(sys.table->all().size(), 0.0);
  std::vector<double> scratch(static_cast<std::size_t>(tape.slot_count()));
  std::vector<double> vals(flat.size());

  TrialSweep sweep;
  sweep.best_colrank.assign(static_cast<std::size_t>(n_aug), 0);

  for (int trial = 0; trial < opt.trials; ++trial) {
    Rng rng(opt.seed, static_cast<std::uint64_t>(trial));
    bool sampled = false;
    for (int attempt = 0; attempt < 50 && !sampled; ++attempt) {
      // fixed draw order keeps trials reproducible and degree-nested
      std::vector<double> theta(static_cast<std::size_t>(n_params));
      for (int i = 0; i < n_params; ++i) {
        const ParamSpec& p = model.params()[static_cast<std::size_t>(i)];
        theta[static_cast<std::size_t>(i)] = rng.uniform(p.lower, p.upper);
      }
      if (mode.theta) theta = *mode.theta;

      double s0 = rng.uniform(ranges.gap_lo, ranges.gap_hi);
      double v0 = rng.uniform(ranges.speed_lo, ranges.speed_hi);
      double u0 = rng.uniform(ranges.speed_lo, ranges.speed_hi);
      if (mode.ic == ICMode::Equilibrium) {
        v0 = u0;
        if (model.equilibrium_gap()) {
          try {
            s0 = equilibrium_ic(model, u0, theta).gap;
          } catch (const DomainError&) {
            continue;  // equilibrium does not exist here; redraw
          }
        }
        // models without a determined equilibrium gap keep the sampled s0
      } else if (mode.ic == ICMode::Fixed) {
        s0 = mode.x0->gap;
        v0 = mode.x0->speed;
      }

      in.assign(in.size(), 0.0);
      in[static_cast<std::size_t>(sys.aug_states[0]->index)] = s0;
      in[static_cast<std::size_t>(sys.aug_states[1]->index)] = v0;
      for (int i = 0; i < n_params; ++i)
        in[static_cast<std::size_t>(sys.aug_states[static_cast<std::size_t>(2 + i)]->index)] =
            theta[static_cast<std::size_t>(i)];
      for (int j = 0; j <= J; ++j) {
        double value = 0.0;
        if (j == 0)
          value = u0;
        else if (j <= degree)
          value = rng.uniform(ranges.deriv_lo, ranges.deriv_hi);
        in[static_cast<std::size_t>(sys.table->input(j)->index)] = value;
      }

      if (!tape.eval(in, scratch, vals)) continue;  // domain violation; redraw
      sampled = true;
    }
    if (!sampled) continue;
    ++sweep.successes;

    Eigen::MatrixXd a(n_rows, n_aug);
    for (Eigen::Index r = 0; r < n_rows; ++r)
      for (int c = 0; c < n_aug; ++c)
        a(r, c) = vals[static_cast<std::size_t>(r) * static_cast<std::size_t>(n_aug) +
                       static_cast<std::size_t>(c)];

    sweep.best_rank = std::max(sweep.best_rank, matrix_rank(a, opt.tol));
    for (int c = 0; c < n_aug; ++c) {
      int& slot = sweep.best_colrank[static_cast<std::size_t>(c)];
      slot = std::max(slot, rank_without_column(a, c, opt.tol));
    }
  }
  return sweep;
}

std::vector<std::vector<Expr>> gradient_rows(const AugmentedSystem& sys, int max_order) {
  std::vector<std::vector<Expr>> rows;
  for (const Expr& g : sys.g) {
    std::vector<Expr> lies = lie_derivatives(sys, g, max_order);
    for (const Expr& L : lies) {
      std::vector<Expr>& row = rows.emplace_back();
      row.reserve(sys.aug_states.size());
      for (const Symbol* x : sys.aug_states) row.push_back(differentiate(L, x));
    }
  }
  return rows;
}

}  // namespace

RankReport generic_rank(const AugmentedSystem& sys, const OIMatrix& m, const RankMode& mode,
                        int degree, const RankOptions& opt) {
  if (opt.trials < 1) throw Error("generic_rank: trials must be >= 1");
  if (degree < 0 || degree > sys.max_input_order())
    throw Error("generic_rank: degree outside the housed input family");
  const ModelSpec& model = sys.model;
  if (mode.theta && static_cast<int>(mode.theta->size()) != model.param_count())
    throw Error("generic_rank: pinned theta size mismatch");

  const int n_aug = sys.n_aug();
  int order = n_aug - 1;
  // A single measured output gets one derivative order beyond the canonical
  // n_aug - 1; that restores the rows the second output would have carried
  // and makes gap-only verdicts agree with gap-and-speed ones. Measuring
  // both states already stacks two rows per order, so no extension there.
  const int order_cap =
      std::min(sys.g.size() == 1 ? n_aug : n_aug - 1, sys.max_input_order());

  TrialSweep sweep = run_trials(sys, m.rows, mode, degree, opt);
  // full rank at n_aug rows is sufficient, not necessary; extend while an
  // added order still exposes rank
  while (sweep.best_rank < n_aug && order < order_cap) {
    TrialSweep wider = run_trials(sys, gradient_rows(sys, order + 1), mode, degree, opt);
    if (wider.best_rank <= sweep.best_rank) break;  // saturated
    sweep = std::move(wider);
    ++order;
  }

  if (sweep.successes == 0)
    throw DomainError("generic_rank: all " + std::to_string(opt.trials) +
                      " trials hit domain violations");

  RankReport report;
  report.model = model.name();
  report.output = sys.output;
  report.mode = mode.describe();
  report.degree = degree;
  report.n_aug = n_aug;
  report.rank = sweep.best_rank;
  report.full = sweep.best_rank == n_aug;
  report.lie_orders = order;
  for (int c = 0; c < n_aug; ++c)
    if (sweep.best_colrank[static_cast<std::size_t>(c)] == sweep.best_rank)
      report.unidentifiable.push_back(sys.aug_states[static_cast<std::size_t>(c)]->name);
  report.trials = opt.trials;
  report.tol = opt.tol;
  report.seed = opt.seed;
  return report;
}

std::optional<int> min_admissible_degree(const AugmentedSystem& sys, const OIMatrix& m,
                                         const RankMode& mode, int max_degree,
                                         const RankOptions& opt) {
  if (max_degree > sys.max_input_order() - 1)
    throw Error("min_admissible_degree: max degree must stay below the housed input family");
  for (int n = 0; n <= max_degree; ++n) {
    if (generic_rank(sys, m, mode, n, opt).full) return n;
  }
  return std::nullopt;
}

}  // namespace cfident
