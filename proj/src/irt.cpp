#include "heywood/irt.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include "heywood/errors.hpp"
#include "heywood/tetra.hpp"

namespace heywood {

namespace {

double log_logistic(double z) {
  // log(1 / (1 + exp(-z))) without overflow
  return z >= 0.0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z));
}

double logistic(double z) {
  return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

struct PatternTable {
  std::vector<std::vector<std::uint8_t>> patterns;
  std::vector<double> counts;
};

PatternTable collapse(const BinaryDataset& data) {
  std::map<std::vector<std::uint8_t>, double> m;
  for (std::size_t r = 0; r < data.rows(); ++r) {
    auto row = data.row(r);
    m[std::vector<std::uint8_t>(row.begin(), row.end())] += 1.0;
  }
  PatternTable t;
  for (auto& [pat, c] : m) {
    t.patterns.push_back(pat);
    t.counts.push_back(c);
  }
  return t;
}

// log P(pattern | node) for every (pattern, node)
Eigen::MatrixXd pattern_loglik(const PatternTable& t, const IrtParams& params,
                               const QuadratureRule& rule) {
  const auto q = static_cast<Eigen::Index>(rule.size());
  const auto items = params.a.size();
  Eigen::MatrixXd log_p1(items, q), log_p0(items, q);
  for (Eigen::Index i = 0; i < items; ++i) {
    for (Eigen::Index k = 0; k < q; ++k) {
      const double z = params.a(i) * (rule.nodes[static_cast<std::size_t>(k)] - params.b(i));
      log_p1(i, k) = log_logistic(z);
      log_p0(i, k) = log_logistic(-z);
    }
  }
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(t.patterns.size()), q);
  for (std::size_t u = 0; u < t.patterns.size(); ++u)
    for (Eigen::Index i = 0; i < items; ++i)
      out.row(static_cast<Eigen::Index>(u)) +=
          t.patterns[u][static_cast<std::size_t>(i)] ? log_p1.row(i) : log_p0.row(i);
  return out;
}

struct EStep {
  double loglik = 0.0;
  Eigen::VectorXd n_node;   // expected persons per node
  Eigen::MatrixXd r_item;   // expected correct responses, items x nodes
};

EStep e_step(const PatternTable& t, const IrtParams& params, const QuadratureRule& rule) {
  const Eigen::MatrixXd lp = pattern_loglik(t, params, rule);
  const auto q = lp.cols();
  const auto items = params.a.size();
  EStep e;
  e.n_node = Eigen::VectorXd::Zero(q);
  e.r_item = Eigen::MatrixXd::Zero(items, q);
  Eigen::VectorXd post(q);
  for (std::size_t u = 0; u < t.patterns.size(); ++u) {
    const auto row = lp.row(static_cast<Eigen::Index>(u));
    const double top = row.maxCoeff();
    double total = 0.0;
    for (Eigen::Index k = 0; k < q; ++k) {
      post(k) = rule.weights[static_cast<std::size_t>(k)] * std::exp(row(k) - top);
      total += post(k);
    }
    e.loglik += t.counts[u] * (top + std::log(total));
    post *= t.counts[u] / total;
    e.n_node += post;
    for (Eigen::Index i = 0; i < items; ++i)
      if (t.patterns[u][static_cast<std::size_t>(i)]) e.r_item.row(i) += post.transpose();
  }
  return e;
}

// Expected complete-data log-likelihood of one item in slope/intercept form.
double item_q(double slope, double intercept, const Eigen::VectorXd& n_node,
              const Eigen::RowVectorXd& r, const QuadratureRule& rule) {
  double v = 0.0;
  for (Eigen::Index k = 0; k < n_node.size(); ++k) {
    const double z = slope * rule.nodes[static_cast<std::size_t>(k)] + intercept;
    v += r(k) * log_logistic(z) + (n_node(k) - r(k)) * log_logistic(-z);
  }
  return v;
}

// Newton-Raphson for one weighted logistic regression on the quadrature grid.
void m_step_item(double& slope, double& intercept, const Eigen::VectorXd& n_node,
                 const Eigen::RowVectorXd& r, const QuadratureRule& rule, const IrtOptions& opts) {
  double q_now = item_q(slope, intercept, n_node, r, rule);
  for (int it = 0; it < opts.newton_max_iter; ++it) {
    double g0 = 0, g1 = 0, h00 = 0, h01 = 0, h11 = 0;
    for (Eigen::Index k = 0; k < n_node.size(); ++k) {
      const double x = rule.nodes[static_cast<std::size_t>(k)];
      const double pr = logistic(slope * x + intercept);
      const double resid = r(k) - n_node(k) * pr;
      const double wgt = n_node(k) * pr * (1.0 - pr);
      g0 += resid * x;
      g1 += resid;
      h00 += wgt * x * x;
      h01 += wgt * x;
      h11 += wgt;
    }
    const double det = h00 * h11 - h01 * h01;
    if (!(det > 0.0)) break;
    const double d0 = (h11 * g0 - h01 * g1) / det;
    const double d1 = (h00 * g1 - h01 * g0) / det;
    double step = 1.0;
    bool improved = false;
    for (int half = 0; half < 30; ++half, step *= 0.5) {
      const double q_try = item_q(slope + step * d0, intercept + step * d1, n_node, r, rule);
      if (q_try >= q_now) {
        slope += step * d0;
        intercept += step * d1;
        q_now = q_try;
        improved = true;
        break;
      }
    }
    if (!improved || std::max(std::abs(step * d0), std::abs(step * d1)) < opts.newton_tol) break;
  }
}

}  // namespace

double ItemResponseFunction::operator()(double theta) const { return logistic(a * (theta - b)); }

double marginal_loglik(const BinaryDataset& data, const IrtParams& params,
                       const QuadratureRule& rule) {
  if (static_cast<std::size_t>(params.a.size()) != data.cols() ||
      static_cast<std::size_t>(params.b.size()) != data.cols())
    throw DomainError("marginal_loglik: parameter count does not match the data");
  return e_step(collapse(data), params, rule).loglik;
}

namespace {

// Slope/intercept form used inside EM: logit = slope * theta + intercept.
struct SlopeIntercept {
  Eigen::VectorXd slope;
  Eigen::VectorXd intercept;
};

IrtParams to_params(const SlopeIntercept& s) {
  IrtParams p{s.slope, Eigen::VectorXd(s.slope.size())};
  for (Eigen::Index i = 0; i < s.slope.size(); ++i)
    p.b(i) = s.slope(i) != 0.0 ? -s.intercept(i) / s.slope(i) : 0.0;
  return p;
}

bool within_bounds(double slope, double intercept, double bound) {
  return std::abs(slope) <= bound && std::abs(intercept) <= bound * std::abs(slope);
}

// Largest t in [0, 1] keeping from + t (to - from) inside |a|, |b| <= bound.
// `from` must be feasible. Q is concave in (slope, intercept), so every point
// of the segment is at least as good as `from` whenever `to` is.
double feasible_fraction(double s0, double c0, double s1, double c1, double bound) {
  if (within_bounds(s1, c1, bound)) return 1.0;
  double lo = 0.0, hi = 1.0;
  for (int k = 0; k < 60; ++k) {
    const double mid = 0.5 * (lo + hi);
    if (within_bounds(s0 + mid * (s1 - s0), c0 + mid * (c1 - c0), bound)) lo = mid; else hi = mid;
  }
  return lo;
}

// Gradient of the marginal log-likelihood in (slope..., intercept...) order;
// by Fisher's identity it equals the expected complete-data score.
Eigen::VectorXd marginal_gradient(const SlopeIntercept& s, const EStep& e, const QuadratureRule& rule) {
  const auto items = s.slope.size();
  Eigen::VectorXd g = Eigen::VectorXd::Zero(2 * items);
  for (Eigen::Index i = 0; i < items; ++i) {
    for (Eigen::Index k = 0; k < e.n_node.size(); ++k) {
      const double x = rule.nodes[static_cast<std::size_t>(k)];
      const double resid = e.r_item(i, k) - e.n_node(k) * logistic(s.slope(i) * x + s.intercept(i));
      g(i) += resid * x;
      g(items + i) += resid;
    }
  }
  return g;
}

}  // namespace

IrtFit fit_2pl(const BinaryDataset& data, const IrtOptions& opts) {
  const std::size_t p = data.cols();
  if (data.rows() < p) throw DomainError("fit_2pl: need at least as many rows as items");
  const QuadratureRule rule = gauss_hermite(opts.nodes);
  const PatternTable table = collapse(data);

  const auto items = static_cast<Eigen::Index>(p);
  SlopeIntercept cur{Eigen::VectorXd::Ones(items), Eigen::VectorXd::Zero(items)};
  for (std::size_t j = 0; j < p; ++j) {
    const double p1 = data.proportion_ones(j);
    if (!(p1 > 0.0 && p1 < 1.0))
      throw DegenerateMargin("column " + std::to_string(j + 1) + " (" + data.names()[j] +
                             ") is constant");
    const double b = std::clamp(std_normal_quantile(1.0 - p1), -opts.bound, opts.bound);
    cur.intercept(static_cast<Eigen::Index>(j)) = -b;
  }

  IrtFit fit;
  std::vector<bool> bound_hit(p, false);

  // One Bock-Aitkin cycle: M-step from the posterior at `from`, each item's
  // update shortened so it stays inside the soft bounds.
  auto em_map = [&](const SlopeIntercept& from, const EStep& e_from) {
    SlopeIntercept to = from;
    for (Eigen::Index i = 0; i < items; ++i) {
      double slope = from.slope(i);
      double intercept = from.intercept(i);
      m_step_item(slope, intercept, e_from.n_node, e_from.r_item.row(i), rule, opts);
      const double t = feasible_fraction(from.slope(i), from.intercept(i), slope, intercept, opts.bound);
      bound_hit[static_cast<std::size_t>(i)] = t < 1.0;
      to.slope(i) = from.slope(i) + t * (slope - from.slope(i));
      to.intercept(i) = from.intercept(i) + t * (intercept - from.intercept(i));
    }
    return to;
  };
  auto posterior = [&](const SlopeIntercept& s) { return e_step(table, to_params(s), rule); };

  EStep e = posterior(cur);
  int cycle = 0;
  bool converged = false;
  while (cycle < opts.max_cycles && !converged) {
    ++cycle;
    fit.loglik_trace.push_back(e.loglik);

    SlopeIntercept next = em_map(cur, e);
    EStep e_next = posterior(next);
    if (opts.accelerate) {
      // Squared extrapolation over two EM cycles. The extrapolated point is
      // kept only if it beats the plain double step, so the log-likelihood
      // sequence never decreases.
      SlopeIntercept second = em_map(next, e_next);
      EStep e_second = posterior(second);
      Eigen::VectorXd r(2 * items), v(2 * items);
      r << next.slope - cur.slope, next.intercept - cur.intercept;
      v << second.slope - 2.0 * next.slope + cur.slope,
          second.intercept - 2.0 * next.intercept + cur.intercept;
      if (v.norm() > 0.0) {
        const double alpha = std::min(-1.0, -r.norm() / v.norm());
        SlopeIntercept jump = cur;
        for (Eigen::Index i = 0; i < items; ++i) {
          const double s1 = cur.slope(i) - 2.0 * alpha * r(i) + alpha * alpha * v(i);
          const double c1 = cur.intercept(i) - 2.0 * alpha * r(items + i) + alpha * alpha * v(items + i);
          const double t = feasible_fraction(cur.slope(i), cur.intercept(i), s1, c1, opts.bound);
          jump.slope(i) = cur.slope(i) + t * (s1 - cur.slope(i));
          jump.intercept(i) = cur.intercept(i) + t * (c1 - cur.intercept(i));
        }
        const EStep e_jump = posterior(jump);
        if (std::isfinite(e_jump.loglik) && e_jump.loglik > e_second.loglik) {
          SlopeIntercept settled = em_map(jump, e_jump);
          EStep e_settled = posterior(settled);
          if (e_settled.loglik >= e_second.loglik) {
            second = std::move(settled);
            e_second = std::move(e_settled);
          }
        }
      }
      next = std::move(second);
      e_next = std::move(e_second);

      // Newton step on the marginal likelihood itself, which converges where
      // EM crawls along a flat ridge. Hessian by differencing the gradient.
      const Eigen::Index m = 2 * items;
      const Eigen::VectorXd g = marginal_gradient(next, e_next, rule);
      Eigen::MatrixXd hess(m, m);
      for (Eigen::Index j = 0; j < m; ++j) {
        SlopeIntercept up = next, down = next;
        double& u = j < items ? up.slope(j) : up.intercept(j - items);
        double& d = j < items ? down.slope(j) : down.intercept(j - items);
        const double h = 1e-5 * std::max(1.0, std::abs(u));
        u += h;
        d -= h;
        hess.col(j) = (marginal_gradient(up, posterior(up), rule) -
                       marginal_gradient(down, posterior(down), rule)) / (2.0 * h);
      }
      const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (hess + hess.transpose()));
      if (eig.info() == Eigen::Success) {
        const double floor = 1e-10 * std::max(1.0, eig.eigenvalues().cwiseAbs().maxCoeff());
        Eigen::VectorXd step = Eigen::VectorXd::Zero(m);
        for (Eigen::Index j = 0; j < m; ++j) {
          const Eigen::VectorXd vec = eig.eigenvectors().col(j);
          step += vec * (vec.dot(g) / std::max(std::abs(eig.eigenvalues()(j)), floor));
        }
        for (double shrink = 1.0; shrink > 1e-3; shrink *= 0.5) {
          SlopeIntercept trial = next;
          for (Eigen::Index i = 0; i < items; ++i) {
            const double s1 = next.slope(i) + shrink * step(i);
            const double c1 = next.intercept(i) + shrink * step(items + i);
            const double t = feasible_fraction(next.slope(i), next.intercept(i), s1, c1, opts.bound);
            trial.slope(i) = next.slope(i) + t * (s1 - next.slope(i));
            trial.intercept(i) = next.intercept(i) + t * (c1 - next.intercept(i));
          }
          EStep e_trial = posterior(trial);
          if (e_trial.loglik > e_next.loglik) {
            next = std::move(trial);
            e_next = std::move(e_trial);
            break;
          }
        }
      }

      // On a flat ridge the likelihood no longer registers the parameter
      // drift. Follow the cycle's direction with doubling steps for as long
      // as the likelihood does not drop; this carries a discrimination that
      // is running away to the soft bound instead of crawling for hundreds
      // of cycles.
      if (std::abs(e_next.loglik - e.loglik) <= opts.loglik_tol) {
        const SlopeIntercept base = next;
        for (double stretch = 1.0; stretch <= 1e6; stretch *= 2.0) {
          SlopeIntercept trial = base;
          bool moved = false;
          for (Eigen::Index i = 0; i < items; ++i) {
            const double s1 = base.slope(i) + stretch * (base.slope(i) - cur.slope(i));
            const double c1 = base.intercept(i) + stretch * (base.intercept(i) - cur.intercept(i));
            const double t = feasible_fraction(base.slope(i), base.intercept(i), s1, c1, opts.bound);
            trial.slope(i) = base.slope(i) + t * (s1 - base.slope(i));
            trial.intercept(i) = base.intercept(i) + t * (c1 - base.intercept(i));
            moved = moved || trial.slope(i) != next.slope(i) || trial.intercept(i) != next.intercept(i);
          }
          if (!moved) break;
          EStep e_trial = posterior(trial);
          if (!(e_trial.loglik >= e_next.loglik)) break;
          next = std::move(trial);
          e_next = std::move(e_trial);
        }
      }
    }

    const IrtParams before = to_params(cur);
    const IrtParams after = to_params(next);
    const double dpar = std::max((after.a - before.a).lpNorm<Eigen::Infinity>(),
                                 (after.b - before.b).lpNorm<Eigen::Infinity>());
    const double dll = e_next.loglik - e.loglik;
    cur = std::move(next);
    e = std::move(e_next);
    converged = std::abs(dll) <= opts.loglik_tol && dpar <= opts.param_tol;
    if (!converged && cycle == opts.max_cycles && std::abs(dll) > 1e-4)
      throw NonconvergenceError("fit_2pl: log-likelihood still changing by " + std::to_string(dll) +
                                " after " + std::to_string(cycle) + " EM cycles");
  }
  fit.loglik_trace.push_back(e.loglik);
  fit.converged = converged;
  fit.em_cycles = cycle;
  const IrtParams final = to_params(cur);
  fit.discriminations = final.a;
  fit.difficulties = final.b;
  for (Eigen::Index i = 0; i < items; ++i) {
    const bool at_edge = std::abs(final.a(i)) >= opts.bound * (1.0 - 1e-9) ||
                         std::abs(final.b(i)) >= opts.bound * (1.0 - 1e-9);
    if (bound_hit[static_cast<std::size_t>(i)] || at_edge) fit.at_bound.push_back(static_cast<std::size_t>(i) + 1);
  }
  fit.extreme_items = classify_irt(fit, opts.extreme_threshold);
  return fit;
}

std::vector<std::size_t> classify_irt(const Eigen::VectorXd& discriminations, double extreme_threshold) {
  std::vector<std::size_t> out;
  for (Eigen::Index i = 0; i < discriminations.size(); ++i)
    if (std::abs(discriminations(i)) > extreme_threshold) out.push_back(static_cast<std::size_t>(i) + 1);
  return out;
}

std::vector<std::size_t> classify_irt(const IrtFit& fit, double extreme_threshold) {
  return classify_irt(fit.discriminations, extreme_threshold);
}

}  // namespace heywood
