#include "hsar/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "hsar/errors.hpp"

namespace hsar {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

class Counted {
 public:
  Counted(const Objective& f, OptimResult& out) : f_(f), out_(out) {}

  double operator()(const Eigen::VectorXd& x) {
    double v = kInf;
    try {
      v = f_(x);
    } catch (const Error&) {
      v = kInf;
    }
    if (!std::isfinite(v)) v = kInf;
    ++out_.n_evals;
    if (out_.trace.empty() || v < out_.value) {
      out_.value = v;
      out_.x = x;
    }
    out_.trace.push_back(out_.value);
    return v;
  }

 private:
  const Objective& f_;
  OptimResult& out_;
};

// One Nelder-Mead run from a fresh simplex; returns true on convergence.
bool nm_run(Counted& f, const OptimResult& state, Eigen::VectorXd x0, double step,
            const NelderMeadOptions& opt, int budget_end) {
  const auto d = x0.size();
  std::vector<Eigen::VectorXd> simplex(static_cast<std::size_t>(d) + 1, x0);
  std::vector<double> fv(simplex.size());
  fv[0] = f(x0);
  for (Eigen::Index i = 0; i < d; ++i) {
    simplex[i + 1][i] += step;
    fv[i + 1] = f(simplex[i + 1]);
  }
  std::vector<std::size_t> order(simplex.size());
  while (true) {
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return fv[a] < fv[b]; });
    const auto best = order.front(), worst = order.back(), second = order[order.size() - 2];
    const double fb = fv[best], fw = fv[worst];
    double spread = 0.0;
    for (const auto& v : simplex) spread = std::max(spread, (v - simplex[best]).cwiseAbs().maxCoeff());
    if (std::isfinite(fw) && std::abs(fw - fb) <= opt.reltol * (std::abs(fb) + opt.reltol) &&
        spread <= opt.xtol)
      return true;
    if (state.n_evals >= budget_end) return false;

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(d);
    for (std::size_t k = 0; k < simplex.size(); ++k)
      if (k != worst) centroid += simplex[k];
    centroid /= static_cast<double>(d);

    const Eigen::VectorXd xr = centroid + (centroid - simplex[worst]);
    const double fr = f(xr);
    if (fr < fb) {
      const Eigen::VectorXd xe = centroid + 2.0 * (centroid - simplex[worst]);
      const double fe = f(xe);
      if (fe < fr) {
        simplex[worst] = xe;
        fv[worst] = fe;
      } else {
        simplex[worst] = xr;
        fv[worst] = fr;
      }
      continue;
    }
    if (fr < fv[second]) {
      simplex[worst] = xr;
      fv[worst] = fr;
      continue;
    }
    const bool outside = fr < fw;
    const Eigen::VectorXd xc = outside ? Eigen::VectorXd(centroid + 0.5 * (xr - centroid))
                                       : Eigen::VectorXd(centroid + 0.5 * (simplex[worst] - centroid));
    const double fc = f(xc);
    if (fc < (outside ? fr : fw)) {
      simplex[worst] = xc;
      fv[worst] = fc;
      continue;
    }
    for (std::size_t k = 0; k < simplex.size(); ++k) {
      if (k == best) continue;
      simplex[k] = simplex[best] + 0.5 * (simplex[k] - simplex[best]);
      fv[k] = f(simplex[k]);
    }
  }
}

}  // namespace

OptimResult nelder_mead(const Objective& f, const Eigen::VectorXd& x0, const NelderMeadOptions& opt) {
  if (!(opt.reltol > 0.0)) throw InvalidArgument("Nelder-Mead: reltol must be > 0");
  if (opt.max_evals < 1) throw InvalidArgument("Nelder-Mead: max_evals must be >= 1");
  OptimResult out;
  out.x = x0;
  out.value = kInf;
  Counted counted(f, out);
  const int budget_end = opt.max_evals;
  bool ok = nm_run(counted, out, x0, opt.initial_step, opt, budget_end);
  double step = opt.initial_step;
  for (int r = 0; ok && r < opt.polish_restarts; ++r) {
    const double before = out.value;
    step = std::max(step * 0.1, 10.0 * opt.xtol);
    ok = nm_run(counted, out, out.x, step, opt, budget_end);
    if (std::abs(before - out.value) <= opt.reltol * (std::abs(out.value) + opt.reltol)) break;
  }
  out.converged = ok && std::isfinite(out.value);
  return out;
}

namespace {

constexpr double kInvPhi = 0.6180339887498949;

template <class F>
std::pair<double, double> golden(F&& g, double lo, double hi, double xtol, int& evals, int max_evals) {
  double a = lo, b = hi;
  double c = b - kInvPhi * (b - a), d = a + kInvPhi * (b - a);
  double fc = g(c), fd = g(d);
  evals += 2;
  while (b - a > xtol && evals < max_evals) {
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - kInvPhi * (b - a);
      fc = g(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + kInvPhi * (b - a);
      fd = g(d);
    }
    ++evals;
  }
  return fc <= fd ? std::pair{c, fc} : std::pair{d, fd};
}

}  // namespace

OptimResult golden_section_nested(const Objective& f, std::pair<double, double> outer,
                                  std::pair<double, double> inner, const GoldenSectionOptions& opt) {
  if (!(outer.first < outer.second) || !(inner.first < inner.second))
    throw InvalidArgument("golden_section_nested: empty search interval");
  OptimResult out;
  out.x = Eigen::Vector2d(outer.first, inner.first);
  out.value = kInf;
  Counted counted(f, out);
  int outer_evals = 0;
  bool exhausted = false;
  auto profile = [&](double u) {
    int inner_evals = 0;
    auto g = [&](double v) { return counted(Eigen::Vector2d(u, v)); };
    const auto remaining = opt.max_evals - out.n_evals;
    if (remaining < 2) {
      exhausted = true;
      return kInf;
    }
    const auto r = golden(g, inner.first, inner.second, opt.xtol, inner_evals, remaining);
    if (inner_evals >= remaining) exhausted = true;
    return r.second;
  };
  golden(profile, outer.first, outer.second, opt.xtol, outer_evals, std::numeric_limits<int>::max());
  out.converged = !exhausted && std::isfinite(out.value);
  return out;
}

}  // namespace hsar
