#include "vorder/moments.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "vorder/specfun.hpp"

namespace vorder {

namespace {

constexpr Complex kI(0.0, 1.0);

double factorial(int n) { return std::tgamma(n + 1.0); }

// Entire series of the ball moment in s = y·y: π^{d/2} r^d Σ (r²s/4)^m / (m! Γ(m+d/2+1)).
Complex ball_series(double radius, int d, Complex s, int terms) {
  const double half_d = 0.5 * d;
  Complex term = std::pow(kPi, half_d) * std::pow(radius, d) / gamma(half_d + 1.0);
  Complex sum = term;
  const Complex step = 0.25 * radius * radius * s;
  for (int m = 0; m + 1 < terms; ++m) {
    term *= step / ((m + 1.0) * (m + 1.0 + half_d));
    sum += term;
  }
  return sum;
}

// Ball moment as a function of s = y·y (the integral depends on y only through s).
Complex ball_moment_of_square(double radius, int d, Complex s) {
  if (!(radius > 0.0)) throw Error(ErrorKind::Domain, "ball radius must be positive");
  if (std::abs(s) * radius * radius < 1e-12) return ball_series(radius, d, s, 3);

  // Either square root works in exact arithmetic; taking Im ρ <= 0 keeps iρ in the right
  // half-plane, where both the principal branch and the large-|z| expansion are valid.
  Complex rho = std::sqrt(s);
  if (rho.imag() > 0.0 || (rho.imag() == 0.0 && rho.real() < 0.0)) rho = -rho;

  const double nu = 0.5 * d;
  const Complex rho_pow = (d % 2 == 0) ? std::pow(rho, -d / 2) : principal_power(rho, -nu);
  const Complex phase = std::exp(-kI * (0.25 * d * kPi));
  return std::pow(2.0 * kPi * radius, nu) * rho_pow * phase * bessel_j(nu, kI * radius * rho);
}

// Hyperspherical coordinates (coefficients along ê₁..ê_d) of ω(θ, φ).
CVec sphere_coefficients(Complex theta, const Vec& phis, int d) {
  CVec c(d);
  const Complex cos_t = std::cos(theta);
  const Complex sin_t = std::sin(theta);
  c[0] = cos_t;
  if (d == 2) {
    c[1] = sin_t;
    return c;
  }
  double prod = 1.0;
  for (int i = 1; i < d - 1; ++i) {
    c[i] = sin_t * prod * std::cos(phis[i - 1]);
    prod *= std::sin(phis[i - 1]);
  }
  c[d - 1] = sin_t * prod;
  return c;
}

}  // namespace

// --------------------------------------------------------------------------
// Directions

void SphereDirection::validate() const {
  const auto d = basis.rows();
  if (d < 2 || basis.cols() != d) throw Error(ErrorKind::Domain, "direction basis must be square with d >= 2");
  if (!(basis * basis.transpose()).isIdentity(1e-12)) throw Error(ErrorKind::Domain, "direction basis is not orthonormal");
  if (phis.size() != std::max<Eigen::Index>(d - 2, 0))
    throw Error(ErrorKind::Domain, "direction needs d - 2 angles phi");
  if (!std::isfinite(theta.real()) || !std::isfinite(theta.imag()) || !phis.allFinite())
    throw Error(ErrorKind::Domain, "direction angles must be finite");
}

SphereDirection SphereDirection::on_half_line(double R) const {
  SphereDirection out = *this;
  out.theta = Complex(theta.real(), theta.imag() - R);
  return out;
}

SphereDirection make_direction(Mat basis, Complex theta, Vec phis) {
  if (phis.size() == 0) phis = Vec::Zero(std::max<Eigen::Index>(basis.rows() - 2, 0));
  SphereDirection dir{std::move(basis), theta, std::move(phis)};
  dir.validate();
  return dir;
}

SphereDirection direction_from_vector(const Mat& basis, const Vec& unit) {
  const auto d = basis.rows();
  const Vec u = basis * unit.normalized();
  Vec phis = Vec::Zero(std::max<Eigen::Index>(d - 2, 0));
  if (d == 2) return make_direction(basis, std::atan2(u[1], u[0]), phis);
  const double theta = std::atan2(u.tail(d - 1).norm(), u[0]);
  for (Eigen::Index i = 1; i < d - 2; ++i) phis[i - 1] = std::atan2(u.tail(d - i - 1).norm(), u[i]);
  phis[d - 3] = std::atan2(u[d - 1], u[d - 2]);
  return make_direction(basis, theta, phis);
}

CVec direction_vector(const SphereDirection& dir) {
  return dir.basis.transpose().cast<Complex>() * sphere_coefficients(dir.theta, dir.phis, dir.dim());
}

Vec quarter_turn(const SphereDirection& dir) {
  const CVec c = sphere_coefficients(Complex(dir.theta.real() + 0.5 * kPi, 0.0), dir.phis, dir.dim());
  return dir.basis.transpose() * c.real();
}

// --------------------------------------------------------------------------
// Moments

Complex ball_moment(double radius, const CVec& y) {
  return ball_moment_of_square(radius, static_cast<int>(y.size()), bdot(y, y));
}

Complex ball_moment(double radius, const SphereDirection& dir) {
  if (!(std::abs(dir.theta.real()) < 0.5 * kPi))
    throw Error(ErrorKind::Branch, "ball probe needs |Re theta| < pi/2");
  // |ω + ê₁|² continued holomorphically: 2 + 2cos θ.
  return ball_moment_of_square(radius, dir.dim(), 2.0 + 2.0 * std::cos(dir.theta));
}

Complex exp_divided_difference(const CVec& nodes) {
  const auto m = nodes.size();
  if (m == 0) throw Error(ErrorKind::Domain, "divided difference of an empty node set");
  if (m == 1) return std::exp(nodes[0]);

  Eigen::Index ia = 0, ib = 1;
  double spread = 0.0;
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = i + 1; j < m; ++j)
      if (std::abs(nodes[i] - nodes[j]) > spread) {
        spread = std::abs(nodes[i] - nodes[j]);
        ia = i;
        ib = j;
      }

  if (spread > 1.0) {
    auto drop = [&](Eigen::Index k) {
      CVec out(m - 1);
      for (Eigen::Index i = 0, j = 0; i < m; ++i)
        if (i != k) out[j++] = nodes[i];
      return out;
    };
    return (exp_divided_difference(drop(ib)) - exp_divided_difference(drop(ia))) / (nodes[ia] - nodes[ib]);
  }

  // Cluster: f[z] = e^c Σ_k h_k(z - c) / (n + k)!, h_k the complete homogeneous polynomials.
  const Complex c = nodes.mean();
  const CVec w = nodes.array() - c;
  const int n = static_cast<int>(m) - 1;
  constexpr int kMaxOrder = 60;
  // H(j, k) = h_k(w_0..w_j); row-wise update h_k(w_0..w_j) = h_k(w_0..w_{j-1}) + w_j h_{k-1}(w_0..w_j).
  CVec h = CVec::Zero(kMaxOrder + 1);
  h[0] = 1.0;
  for (Eigen::Index j = 0; j < m; ++j)
    for (int k = 1; k <= kMaxOrder; ++k) h[k] += w[j] * h[k - 1];
  // |h_k(w)| <= C(n+k, k) ρ^k, so the tail after k is bounded by ρ^k / (n! k!).
  const double rho = w.cwiseAbs().maxCoeff();
  Complex sum = 0.0;
  double fact = factorial(n);
  double bound = 1.0 / fact;
  for (int k = 0; k <= kMaxOrder; ++k) {
    if (k > 0) {
      fact *= (n + k);
      bound *= rho / k;
    }
    sum += h[k] / fact;
    if (bound <= 1e-18 * std::abs(sum)) break;
  }
  return std::exp(c) * sum;
}

Complex simplex_moment(const Vec& base, const Mat& matrix, const CVec& y) {
  const auto d = base.size();
  if (matrix.rows() != d || matrix.cols() != d || y.size() != d)
    throw Error(ErrorKind::Domain, "simplex moment dimension mismatch");
  const double det = matrix.determinant();
  if (!(det > 0.0)) throw Error(ErrorKind::Domain, "simplex moment needs det V > 0");

  const CVec Y = matrix.transpose().cast<Complex>() * y;
  const Complex shift = bdot(base, y);

  double max_abs = 0.0;
  double min_gap = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < d; ++i) {
    max_abs = std::max(max_abs, std::abs(Y[i]));
    min_gap = std::min(min_gap, std::abs(Y[i]));
    for (Eigen::Index j = i + 1; j < d; ++j) min_gap = std::min(min_gap, std::abs(Y[i] - Y[j]));
  }

  if (min_gap >= 1e-3 * (1.0 + max_abs)) {
    Complex sum = 0.0;
    Complex prod = 1.0;
    for (Eigen::Index i = 0; i < d; ++i) {
      Complex denom = Y[i];
      for (Eigen::Index j = 0; j < d; ++j)
        if (j != i) denom *= Y[i] - Y[j];
      sum += std::exp(shift + Y[i]) / denom;
      prod *= Y[i];
    }
    const double sign = (d % 2 == 0) ? 1.0 : -1.0;
    return det * (sum + sign * std::exp(shift) / prod);
  }

  // Hermite-Genocchi: ∫_T e^{Y·t} dt = exp[0, Y_1, ..., Y_d]; the shift moves every node.
  CVec nodes(d + 1);
  nodes[0] = shift;
  nodes.tail(d) = Y.array() + shift;
  return det * exp_divided_difference(nodes);
}

Complex box_moment(const Vec& center, const Vec& widths, const CVec& y) {
  const auto d = center.size();
  if (widths.size() != d || y.size() != d) throw Error(ErrorKind::Domain, "box moment dimension mismatch");
  if (!(widths.array() > 0.0).all()) throw Error(ErrorKind::Domain, "box widths must be positive");
  Complex value = 1.0;
  for (Eigen::Index j = 0; j < d; ++j) {
    const Complex t = y[j];
    const double delta = widths[j];
    const Complex td = t * delta;
    Complex factor;
    if (std::abs(td) < 1e-3) {
      const Complex td2 = td * td;
      factor = delta * (1.0 + td2 / 24.0 + td2 * td2 / 1920.0) * std::exp(center[j] * t);
    } else {
      factor = (std::exp(t * (center[j] + 0.5 * delta)) - std::exp(t * (center[j] - 0.5 * delta))) / t;
    }
    value *= factor;
  }
  return value;
}

Complex shape_moment(const Inclusion& inc, const CVec& y) {
  if (y.size() != inc.dim()) throw Error(ErrorKind::Domain, "frequency dimension does not match inclusion");
  if (const auto* b = std::get_if<Ball>(&inc.shape)) return std::exp(bdot(b->center, y)) * ball_moment(b->radius, y);
  if (const auto* s = std::get_if<Simplex>(&inc.shape)) return simplex_moment(s->base, s->matrix, y);
  const auto& box = std::get<Box>(inc.shape);
  return box_moment(box.center, box.widths, y);
}

Complex difference_moment(const OrderField& cfg1, const OrderField& cfg2, const CVec& y) {
  if (!cfg1.same_background(cfg2))
    throw Error(ErrorKind::Unsupported, "difference moment needs a shared background and domain");
  if (y.size() != cfg1.dim) throw Error(ErrorKind::Domain, "frequency dimension does not match the order field");
  Complex first = 0.0;
  for (const auto& inc : cfg1.inclusions) first += inc.amplitude * shape_moment(inc, y);
  Complex second = 0.0;
  for (const auto& inc : cfg2.inclusions) second += inc.amplitude * shape_moment(inc, y);
  return first - second;
}

Complex difference_moment(const OrderField& cfg1, const OrderField& cfg2, const SphereDirection& dir,
                          const Vec& omega0) {
  if (omega0.size() != dir.dim()) throw Error(ErrorKind::Domain, "omega0 dimension mismatch");
  const CVec y = direction_vector(dir) + omega0.cast<Complex>();
  if (!cfg1.same_background(cfg2))
    throw Error(ErrorKind::Unsupported, "difference moment needs a shared background and domain");
  // Balls probed with ω₀ = ê₁ use the holomorphic strip form, which avoids forming y·y.
  const bool strip_form = (omega0 - dir.basis.row(0).transpose()).norm() < 1e-14 &&
                          std::abs(dir.theta.real()) < 0.5 * kPi;
  auto sum = [&](const OrderField& cfg) {
    Complex total = 0.0;
    for (const auto& inc : cfg.inclusions) {
      if (const auto* b = std::get_if<Ball>(&inc.shape); b && strip_form)
        total += inc.amplitude * std::exp(bdot(b->center, y)) * ball_moment(b->radius, dir);
      else
        total += inc.amplitude * shape_moment(inc, y);
    }
    return total;
  };
  return sum(cfg1) - sum(cfg2);
}

MomentSampler difference_sampler(OrderField cfg1, OrderField cfg2) {
  if (!cfg1.same_background(cfg2))
    throw Error(ErrorKind::Unsupported, "difference moment needs a shared background and domain");
  return [c1 = std::move(cfg1), c2 = std::move(cfg2)](const SphereDirection& dir) {
    return difference_moment(c1, c2, dir, dir.basis.row(0).transpose());
  };
}

// --------------------------------------------------------------------------
// Direction selection

Vec generic_direction(const std::vector<HyperplaneConstraint>& constraints, int dim, std::uint64_t seed,
                      const GenericOptions& opts) {
  if (dim < 2) throw Error(ErrorKind::Domain, "generic direction needs d >= 2");
  double scale = 0.0;
  for (const auto& c : constraints) {
    if (c.a.size() != dim) throw Error(ErrorKind::Domain, "constraint dimension mismatch");
    if (!(c.a.norm() > 0.0)) throw Error(ErrorKind::Domain, "constraint normal must be nonzero");
    scale = std::max(scale, c.a.norm());
  }
  const double margin = opts.margin_factor * scale;

  double best_slack = -1.0;
  std::size_t tightest = 0;
  for (int attempt = 0; attempt < opts.seeds; ++attempt) {
    std::mt19937_64 rng(seed + 0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(attempt));
    std::normal_distribution<double> normal;
    for (int s = 0; s < opts.samples_per_seed; ++s) {
      Vec omega(dim);
      for (int i = 0; i < dim; ++i) omega[i] = normal(rng);
      if (omega.norm() < 1e-12) continue;
      omega.normalize();
      double slack = std::numeric_limits<double>::infinity();
      std::size_t arg = 0;
      for (std::size_t i = 0; i < constraints.size(); ++i) {
        const double v = std::abs(omega.dot(constraints[i].a) - constraints[i].b);
        if (v < slack) {
          slack = v;
          arg = i;
        }
      }
      if (slack >= margin) return omega;
      if (slack > best_slack) {
        best_slack = slack;
        tightest = arg;
      }
    }
  }
  throw Error(ErrorKind::Genericity, "no direction clears margin " + std::to_string(margin) +
                                         "; tightest constraint index " + std::to_string(tightest) +
                                         " with best slack " + std::to_string(best_slack));
}

std::vector<HyperplaneConstraint> distinct_projection_constraints(const std::vector<Vec>& points) {
  std::vector<HyperplaneConstraint> out;
  for (std::size_t i = 0; i < points.size(); ++i)
    for (std::size_t j = i + 1; j < points.size(); ++j) {
      const Vec diff = points[i] - points[j];
      if (diff.norm() > 1e-14) out.push_back({diff, 0.0});
    }
  return out;
}

std::vector<double> simplex_genericity_values(const std::vector<Mat>& matrices, const SphereDirection& dir) {
  const CVec omega = direction_vector(dir);
  const Vec shifted = omega.real() + dir.basis.row(0).transpose();
  const Vec turned = quarter_turn(dir);
  std::vector<double> values;
  for (const Mat& V : matrices) {
    for (const Vec& probe : {shifted, turned}) {
      const Vec v = V.transpose() * probe;
      for (Eigen::Index j = 0; j < v.size(); ++j) {
        values.push_back(v[j]);
        for (Eigen::Index k = j + 1; k < v.size(); ++k) values.push_back(v[j] - v[k]);
      }
    }
  }
  return values;
}

SphereDirection simplex_generic_direction(const std::vector<Mat>& matrices, const Mat& basis, std::uint64_t seed,
                                          const GenericOptions& opts) {
  const auto d = basis.rows();
  double scale = 0.0;
  for (const Mat& V : matrices) scale = std::max(scale, V.norm());
  const double margin = opts.margin_factor * std::max(scale, 1e-300);

  double best = -1.0;
  for (int attempt = 0; attempt < opts.seeds; ++attempt) {
    std::mt19937_64 rng(seed + 0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(attempt));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int s = 0; s < opts.samples_per_seed; ++s) {
      const double theta = (unit(rng) - 0.5) * kPi;
      Vec phis(std::max<Eigen::Index>(d - 2, 0));
      for (Eigen::Index j = 0; j < phis.size(); ++j)
        phis[j] = (j + 1 == phis.size()) ? 2.0 * kPi * unit(rng) : kPi * unit(rng);
      SphereDirection dir = make_direction(basis, theta, phis);
      double slack = std::numeric_limits<double>::infinity();
      for (double v : simplex_genericity_values(matrices, dir)) slack = std::min(slack, std::abs(v));
      if (slack >= margin) return dir;
      best = std::max(best, slack);
    }
  }
  throw Error(ErrorKind::Genericity,
              "no direction in the simplex generic set; best slack " + std::to_string(best));
}

SeparatingDirection separating_direction(const std::vector<Vec>& polytope, const Vec& vertex) {
  // Minimum-norm point of conv{vertex - x_i} (Wolfe's algorithm); its direction separates.
  std::vector<Vec> pts;
  double scale = 0.0;
  for (const Vec& x : polytope) {
    if (x.size() != vertex.size()) throw Error(ErrorKind::Domain, "polytope dimension mismatch");
    const Vec z = vertex - x;
    scale = std::max(scale, z.norm());
    if (z.norm() > 1e-12 * (1.0 + vertex.norm())) pts.push_back(z);
  }
  if (pts.empty()) throw Error(ErrorKind::Separation, "polytope has no vertex other than the query");
  const double tol = 1e-12 * scale * scale;

  const auto n = pts.size();
  std::vector<std::size_t> active;
  std::vector<double> lambda;
  {
    std::size_t best = 0;
    for (std::size_t i = 1; i < n; ++i)
      if (pts[i].squaredNorm() < pts[best].squaredNorm()) best = i;
    active = {best};
    lambda = {1.0};
  }
  auto current = [&]() {
    Vec x = Vec::Zero(vertex.size());
    for (std::size_t k = 0; k < active.size(); ++k) x += lambda[k] * pts[active[k]];
    return x;
  };

  for (int major = 0; major < 200; ++major) {
    const Vec x = current();
    std::size_t j = 0;
    for (std::size_t i = 1; i < n; ++i)
      if (pts[i].dot(x) < pts[j].dot(x)) j = i;
    if (x.squaredNorm() - pts[j].dot(x) <= tol ||
        std::find(active.begin(), active.end(), j) != active.end())
      break;
    active.push_back(j);
    lambda.push_back(0.0);

    for (int minor = 0; minor < 200; ++minor) {
      const auto m = static_cast<Eigen::Index>(active.size());
      Mat kkt = Mat::Zero(m + 1, m + 1);
      Vec rhs = Vec::Zero(m + 1);
      for (Eigen::Index a = 0; a < m; ++a) {
        for (Eigen::Index b = 0; b < m; ++b) kkt(a, b) = pts[active[a]].dot(pts[active[b]]);
        kkt(a, m) = 1.0;
        kkt(m, a) = 1.0;
      }
      rhs[m] = 1.0;
      const Vec mu = kkt.completeOrthogonalDecomposition().solve(rhs).head(m);
      if ((mu.array() > 1e-14).all()) {
        lambda.assign(mu.data(), mu.data() + m);
        break;
      }
      double step = 1.0;
      for (Eigen::Index a = 0; a < m; ++a)
        if (mu[a] <= 1e-14) step = std::min(step, lambda[a] / (lambda[a] - mu[a]));
      std::vector<std::size_t> keep_idx;
      std::vector<double> keep_lambda;
      for (Eigen::Index a = 0; a < m; ++a) {
        const double l = lambda[a] + step * (mu[a] - lambda[a]);
        if (l > 1e-14) {
          keep_idx.push_back(active[a]);
          keep_lambda.push_back(l);
        }
      }
      active = std::move(keep_idx);
      lambda = std::move(keep_lambda);
      const double total = std::accumulate(lambda.begin(), lambda.end(), 0.0);
      for (double& l : lambda) l /= total;
    }
  }

  const Vec x = current();
  if (x.norm() <= 1e-9 * scale) throw Error(ErrorKind::Separation, "query point is not an extreme point of the hull");
  SeparatingDirection out{x.normalized(), std::numeric_limits<double>::infinity()};
  for (const Vec& z : pts) out.gap = std::min(out.gap, z.dot(out.omega));
  if (!(out.gap > 0.0)) throw Error(ErrorKind::Separation, "query point is not an extreme point of the hull");
  return out;
}

}  // namespace vorder
