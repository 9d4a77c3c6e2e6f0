#include "sgfm/flow.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "sgfm/spectral.hpp"
#include "sgfm/util.hpp"

namespace sgfm {

ForcingSpec ForcingSpec::zero() { return {}; }

ForcingSpec ForcingSpec::analytic(std::string id, std::vector<double> params) {
  if (id == "kolmogorov") {
    if (params.size() != 2)
      throw std::invalid_argument("kolmogorov forcing needs {amplitude, wavenumber}");
  } else if (id == "damping") {
    if (params.size() != 1)
      throw std::invalid_argument("damping forcing needs {rate}");
  } else {
    throw std::invalid_argument("unknown analytic forcing '" + id + "'");
  }
  ForcingSpec f;
  f.kind = Kind::Analytic;
  f.expression = std::move(id);
  f.params = std::move(params);
  return f;
}

ForcingSpec ForcingSpec::prescribed(Field field) {
  ForcingSpec f;
  f.kind = Kind::Prescribed;
  f.field = std::move(field);
  return f;
}

ForcingSpec ForcingSpec::learned(
    std::function<Field(const Field&)> evaluate,
    std::function<Field(const Field&, const Field&)> vjp) {
  ForcingSpec f;
  f.kind = Kind::Learned;
  f.evaluate = std::move(evaluate);
  f.vjp = std::move(vjp);
  return f;
}

bool ForcingSpec::state_dependent() const {
  return kind == Kind::Learned || (kind == Kind::Analytic && expression == "damping");
}

Field evaluate_forcing(const ForcingSpec& forcing, const Field& u) {
  switch (forcing.kind) {
    case ForcingSpec::Kind::Zero:
      return Field(u.grid(), u.channels());
    case ForcingSpec::Kind::Prescribed:
      if (!forcing.field || !forcing.field->same_shape(u))
        throw std::invalid_argument("prescribed forcing shape mismatch");
      return *forcing.field;
    case ForcingSpec::Kind::Learned: {
      Field f = forcing.evaluate(u);
      if (!f.same_shape(u)) throw std::invalid_argument("learned forcing shape mismatch");
      return f;
    }
    case ForcingSpec::Kind::Analytic:
      break;
  }
  if (forcing.expression == "damping") return -forcing.params[0] * u;
  // kolmogorov: shear forcing in the first component of each vector group.
  const int d = u.grid().ndim;
  const double amp = forcing.params[0];
  const double k = forcing.params[1];
  return sample_field(u.grid(), u.channels(),
                      [&](std::span<const double> x, int c) {
                        return c % d == 0 ? amp * std::sin(k * x[1]) : 0.0;
                      });
}

Field forcing_vjp(const ForcingSpec& forcing, const Field& u, const Field& r) {
  switch (forcing.kind) {
    case ForcingSpec::Kind::Zero:
    case ForcingSpec::Kind::Prescribed:
      return Field(u.grid(), u.channels());
    case ForcingSpec::Kind::Learned:
      if (!forcing.vjp)
        throw std::logic_error("learned forcing has no vector-Jacobian product");
      return forcing.vjp(u, r);
    case ForcingSpec::Kind::Analytic:
      break;
  }
  if (forcing.expression == "damping") return -forcing.params[0] * r;
  return Field(u.grid(), u.channels());
}

double estimate_forcing_lipschitz(const ForcingSpec& forcing, const Grid& grid,
                                  int channels, int trials, std::uint64_t seed) {
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    const Field u = gaussian_field(grid, channels, derive_seed(seed, {2u * t}));
    Field v = gaussian_field(grid, channels, derive_seed(seed, {2u * t + 1}));
    v = u + 0.1 * v;
    const double du = l2_norm(u - v);
    const double df = l2_norm(evaluate_forcing(forcing, u) - evaluate_forcing(forcing, v));
    if (du > 0.0) worst = std::max(worst, df / du);
  }
  return worst;
}

void SpdeParams::validate() const {
  if (!(viscosity > 0.0)) throw std::invalid_argument("viscosity must be > 0");
  if (!(noise_amplitude >= 0.0))
    throw std::invalid_argument("noise amplitude must be >= 0");
  if (!(dt >= 0.0)) throw std::invalid_argument("dt must be >= 0");
}

// ---------------------------------------------------------------------------

Field advection(const Field& v) {
  const auto& grid = v.grid();
  const int d = grid.ndim;
  if (v.channels() % d != 0)
    throw std::invalid_argument("advection: channel count is not a multiple of ndim");
  const Field grad = gradient(v);  // channel c*d + b holds d(v_c)/dx_b
  Field out(grid, v.channels());
  const std::size_t n = grid.size();
  const int groups = v.channels() / d;
  for (int g = 0; g < groups; ++g) {
    for (int a = 0; a < d; ++a) {
      auto dst = out.channel(g * d + a);
      for (int b = 0; b < d; ++b) {
        auto vb = v.channel(g * d + b);
        auto dva = grad.channel((g * d + a) * d + b);
        for (std::size_t i = 0; i < n; ++i) dst[i] += vb[i] * dva[i];
      }
    }
  }
  return out;
}

Field spde_rhs(const Field& u, const SpdeParams& p) {
  Field rhs = laplacian(u);
  rhs *= p.viscosity;
  rhs -= advection(u);
  rhs += evaluate_forcing(p.forcing, u);
  return p.project_each_step ? helmholtz_project(rhs) : rhs;
}

Field residual(const Field& u_prev, const Field& u_next, double dt,
               const SpdeParams& p) {
  if (!(dt > 0.0)) throw std::invalid_argument("residual: dt must be > 0");
  if (!u_prev.same_shape(u_next))
    throw std::invalid_argument("residual: snapshot shape mismatch");
  Field r = u_next - u_prev;
  r *= 1.0 / dt;
  r += advection(u_next);
  r.axpy(-p.viscosity, laplacian(u_next));
  r -= evaluate_forcing(p.forcing, u_next);
  return r;
}

double residual_energy(const Field& u_prev, const Field& u_next, double dt,
                       const SpdeParams& p) {
  const double n = l2_norm(helmholtz_project(residual(u_prev, u_next, dt, p)));
  return n * n;
}

namespace {

/// J_A(u)^T r for A(u) = (u.grad)u, per vector group:
///   (J^T r)_c = sum_a r_a d_c u_a - sum_b d_b (r_c u_b).
Field advection_vjp(const Field& u, const Field& r) {
  const auto& grid = u.grid();
  const int d = grid.ndim;
  const std::size_t n = grid.size();
  const int groups = u.channels() / d;
  const Field grad = gradient(u);
  Field out(grid, u.channels());
  Field flux(grid, d);
  for (int g = 0; g < groups; ++g) {
    for (int c = 0; c < d; ++c) {
      auto dst = out.channel(g * d + c);
      for (int a = 0; a < d; ++a) {
        auto ra = r.channel(g * d + a);
        auto du = grad.channel((g * d + a) * d + c);
        for (std::size_t i = 0; i < n; ++i) dst[i] += ra[i] * du[i];
      }
      auto rc = r.channel(g * d + c);
      for (int b = 0; b < d; ++b) {
        auto ub = u.channel(g * d + b);
        auto fb = flux.channel(b);
        for (std::size_t i = 0; i < n; ++i) fb[i] = rc[i] * ub[i];
      }
      const Field div = divergence(flux);
      auto dv = div.channel(0);
      for (std::size_t i = 0; i < n; ++i) dst[i] -= dv[i];
    }
  }
  return out;
}

}  // namespace

Field residual_energy_gradient(const Field& u_prev, const Field& u_next,
                               double dt, const SpdeParams& p) {
  // E = cv * |P R|^2 and P is symmetric and idempotent, so
  // dE/du = 2 cv J_R^T P R.
  const Field pr = helmholtz_project(residual(u_prev, u_next, dt, p));
  Field g = (1.0 / dt) * pr;
  g += advection_vjp(u_next, pr);
  g.axpy(-p.viscosity, laplacian(pr));
  g -= forcing_vjp(p.forcing, u_next, pr);
  g *= 2.0 * u_next.grid().cell_volume();
  return g;
}

// ---------------------------------------------------------------------------

std::uint64_t step_seed(std::uint64_t seed, long step_index) {
  return derive_seed(seed, {0x5eedULL, static_cast<std::uint64_t>(step_index)});
}

Field step_euler_maruyama(const Field& u, const SpdeParams& p, std::uint64_t seed,
                          long step_index) {
  p.validate();
  Field next = u;
  if (p.dt > 0.0) {
    next.axpy(p.dt, spde_rhs(u, p));
    if (p.noise_amplitude > 0.0) {
      Field xi = gaussian_field(u.grid(), u.channels(), step_seed(seed, step_index));
      if (p.project_each_step) xi = helmholtz_project(xi);
      next.axpy(p.noise_amplitude * std::sqrt(p.dt), xi);
    }
  }
  if (!next.all_finite())
    throw InstabilityError("Euler-Maruyama step produced non-finite values",
                           step_index);
  return next;
}

Trajectory simulate(const Field& u0, const SpdeParams& p, int steps,
                    std::uint64_t seed, long first_step_index) {
  if (steps < 1) throw std::invalid_argument("simulate: steps must be >= 1");
  p.validate();
  if (!(p.dt > 0.0)) throw std::invalid_argument("simulate: dt must be > 0");
  Trajectory traj(p.dt);
  traj.push(u0, p.dt * static_cast<double>(first_step_index));
  Field u = u0;
  for (int k = 0; k < steps; ++k) {
    u = step_euler_maruyama(u, p, seed, first_step_index + k);
    traj.push(u);
  }
  return traj;
}

// ---------------------------------------------------------------------------

EnergyReport energy_diagnostics(const Trajectory& traj, const SpdeParams& p) {
  EnergyReport rep;
  if (traj.empty()) return rep;
  const Field& u0 = traj.front().field;
  const auto& grid = u0.grid();
  double sup_fu = 0.0;
  for (const auto& s : traj) {
    const double e = l2_norm(s.field);
    const double g = l2_norm(gradient(s.field));
    rep.times.push_back(s.time);
    rep.kinetic_energy.push_back(e * e);
    rep.enstrophy.push_back(g * g);
    sup_fu = std::max(sup_fu, l2_norm(evaluate_forcing(p.forcing, s.field)) * e);
  }
  rep.forcing_constant = 2.0 * sup_fu;
  rep.noise_hs2 = p.noise_amplitude * p.noise_amplitude *
                  static_cast<double>(grid.size()) * grid.ndim * grid.cell_volume();
  double integral = 0.0;
  for (std::size_t i = 0; i < rep.times.size(); ++i) {
    if (i > 0)
      integral += 0.5 * (rep.times[i] - rep.times[i - 1]) *
                  (rep.enstrophy[i] + rep.enstrophy[i - 1]);
    const double t = rep.times[i] - rep.times[0];
    rep.dissipation.push_back(2.0 * p.viscosity * integral);
    rep.lhs.push_back(rep.kinetic_energy[i] + rep.dissipation.back());
    rep.bound_rhs.push_back(rep.kinetic_energy[0] +
                            (rep.forcing_constant + rep.noise_hs2) * t);
  }
  return rep;
}

EnergyReport average_reports(const std::vector<EnergyReport>& reports) {
  if (reports.empty()) return {};
  EnergyReport avg = reports.front();
  const double w = 1.0 / static_cast<double>(reports.size());
  auto accumulate = [&](std::vector<double> EnergyReport::*member) {
    auto& dst = avg.*member;
    std::fill(dst.begin(), dst.end(), 0.0);
    for (const auto& r : reports) {
      const auto& src = r.*member;
      if (src.size() != dst.size())
        throw std::invalid_argument("reports have different time grids");
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += w * src[i];
    }
  };
  accumulate(&EnergyReport::kinetic_energy);
  accumulate(&EnergyReport::enstrophy);
  accumulate(&EnergyReport::dissipation);
  accumulate(&EnergyReport::lhs);
  accumulate(&EnergyReport::bound_rhs);
  avg.forcing_constant = 0.0;
  for (const auto& r : reports) avg.forcing_constant += w * r.forcing_constant;
  return avg;
}

Field vorticity_residual(const Trajectory& traj, const SpdeParams& p,
                         std::size_t index) {
  if (index == 0 || index + 1 >= traj.size())
    throw std::invalid_argument("vorticity_residual needs an interior snapshot");
  const Field& u = traj[index].field;
  Field r = vorticity2d(traj[index + 1].field) - vorticity2d(traj[index - 1].field);
  r *= 1.0 / (2.0 * traj.dt());
  const Field omega = vorticity2d(u);
  const Field grad_w = gradient(omega);
  const std::size_t n = u.grid().size();
  const int groups = u.channels() / 2;
  for (int g = 0; g < groups; ++g) {
    auto dst = r.channel(g);
    auto ux = u.channel(2 * g);
    auto uy = u.channel(2 * g + 1);
    auto wx = grad_w.channel(2 * g);
    auto wy = grad_w.channel(2 * g + 1);
    for (std::size_t i = 0; i < n; ++i) dst[i] += ux[i] * wx[i] + uy[i] * wy[i];
  }
  r.axpy(-p.viscosity, laplacian(omega));
  r -= vorticity2d(evaluate_forcing(p.forcing, u));
  return r;
}

SeparationFit fit_separation(const Trajectory& a, const Trajectory& b) {
  if (a.size() != b.size() || a.size() < 2)
    throw std::invalid_argument("fit_separation: trajectories must match in length");
  SeparationFit fit;
  const double d0 = l2_norm(a[0].field - b[0].field);
  if (!(d0 > 0.0)) throw std::invalid_argument("fit_separation: identical starts");
  double st = 0, sy = 0, stt = 0, sty = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double t = a[i].time - a[0].time;
    const double dist = l2_norm(a[i].field - b[i].field);
    fit.times.push_back(t);
    fit.distances.push_back(dist);
    const double y = std::log(dist / d0);
    st += t;
    sy += y;
    stt += t * t;
    sty += t * y;
  }
  const double m = static_cast<double>(a.size());
  fit.rate = (m * sty - st * sy) / (m * stt - st * st);
  fit.log_prefactor = (sy - fit.rate * st) / m;
  return fit;
}

}  // namespace sgfm
