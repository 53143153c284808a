#include "vorder/oracle.hpp"

#include <cmath>
#include <random>

namespace vorder {

std::pair<Vec, Vec> gauss_legendre(int n, double a, double b) {
  if (n < 1) throw Error(ErrorKind::Domain, "Gauss-Legendre needs at least one node");
  Vec x(n), w(n);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double z = std::cos(kPi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = z;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      if (n == 1) p0 = 1.0;
      dp = n * (z * p1 - p0) / (z * z - 1.0);
      const double dz = p1 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    double p0 = 1.0, p1 = z;
    for (int k = 2; k <= n; ++k) {
      const double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
      p0 = p1;
      p1 = p2;
    }
    dp = n * (z * p1 - p0) / (z * z - 1.0);
    x[i] = -z;
    x[n - 1 - i] = z;
    w[i] = w[n - 1 - i] = 2.0 / ((1.0 - z * z) * dp * dp);
  }
  x = (0.5 * (b - a)) * (x.array() + 1.0) + a;
  w *= 0.5 * (b - a);
  return {x, w};
}

namespace {

// Map from the unit cube onto a shape: x(u) and |det dx/du|.
struct CubeMap {
  int dim = 0;
  std::vector<bool> periodic;
  std::function<double(const Vec& u, Vec& x)> apply;
};

CubeMap make_map(const Inclusion& shape) {
  CubeMap m;
  m.dim = shape.dim();
  m.periodic.assign(m.dim, false);
  if (const auto* ball = std::get_if<Ball>(&shape.shape)) {
    const Vec c = ball->center;
    const double r = ball->radius;
    if (m.dim == 2) {
      m.periodic[1] = true;
      m.apply = [c, r](const Vec& u, Vec& x) {
        const double rho = r * u[0];
        const double phi = 2.0 * kPi * u[1];
        x = c + rho * Vec2(std::cos(phi), std::sin(phi));
        return 2.0 * kPi * r * rho;
      };
    } else if (m.dim == 3) {
      m.periodic[2] = true;
      m.apply = [c, r](const Vec& u, Vec& x) {
        const double rho = r * u[0];
        const double ct = 2.0 * u[1] - 1.0;
        const double st = std::sqrt(std::max(0.0, 1.0 - ct * ct));
        const double phi = 2.0 * kPi * u[2];
        x = c + rho * Eigen::Vector3d(ct, st * std::cos(phi), st * std::sin(phi));
        return 4.0 * kPi * r * rho * rho;
      };
    } else {
      throw Error(ErrorKind::Unsupported, "ball quadrature is implemented for d = 2 and d = 3");
    }
  } else if (const auto* s = std::get_if<Simplex>(&shape.shape)) {
    const Vec base = s->base;
    const Mat V = s->matrix;
    const double det = std::abs(V.determinant());
    const int d = m.dim;
    m.apply = [base, V, det, d](const Vec& u, Vec& x) {
      // Duffy collapse: ξ_k = Π_{j<k}(1 - u_j) u_k.
      Vec xi(d);
      double remaining = 1.0;
      double jac = det;
      for (int k = 0; k < d; ++k) {
        xi[k] = remaining * u[k];
        jac *= std::pow(1.0 - u[k], d - 1 - k);
        remaining *= 1.0 - u[k];
      }
      x = base + V * xi;
      return jac;
    };
  } else {
    const auto& box = std::get<Box>(shape.shape);
    const Vec lower = box.center - 0.5 * box.widths;
    const Vec widths = box.widths;
    const double vol = widths.prod();
    m.apply = [lower, widths, vol](const Vec& u, Vec& x) {
      x = lower + widths.cwiseProduct(u);
      return vol;
    };
  }
  return m;
}

// Tensor rule of order n per axis on the sub-cube [lo, lo + size].
Complex tensor_rule(const CubeMap& map, const Integrand& f, int n, const Vec& lo, double size) {
  const int d = map.dim;
  std::vector<Vec> nodes(d), weights(d);
  const auto [gx, gw] = gauss_legendre(n, 0.0, 1.0);
  for (int k = 0; k < d; ++k) {
    if (map.periodic[k] && size == 1.0) {
      nodes[k] = Vec::LinSpaced(n, 0.5 / n, 1.0 - 0.5 / n);
      weights[k] = Vec::Constant(n, 1.0 / n);
    } else {
      nodes[k] = lo[k] + size * gx.array();
      weights[k] = size * gw;
    }
  }
  std::vector<int> idx(d, 0);
  Vec u(d), x(d);
  Complex sum = 0.0;
  while (true) {
    double w = 1.0;
    for (int k = 0; k < d; ++k) {
      u[k] = nodes[k][idx[k]];
      w *= weights[k][idx[k]];
    }
    const double jac = map.apply(u, x);
    sum += w * jac * f(x);
    int k = 0;
    while (k < d && ++idx[k] == n) idx[k++] = 0;
    if (k == d) break;
  }
  return sum;
}

QuadratureResult tensor(const CubeMap& map, const Integrand& f, const QuadratureSpec& spec) {
  static const int kOrders[] = {4, 8, 16, 24, 32, 48, 64, 96, 128};
  QuadratureResult out;
  Complex previous;
  bool have_previous = false;
  for (int n : kOrders) {
    if (n > spec.max_order) break;
    const Complex value = tensor_rule(map, f, n, Vec::Zero(map.dim), 1.0);
    if (have_previous) {
      const double err = std::abs(value - previous);
      out.history.push_back(err);
      out.value = value;
      out.error = err;
      out.order = n;
      if (err <= spec.tol * std::abs(value) || (value == Complex(0.0) && previous == Complex(0.0))) return out;
    }
    previous = value;
    have_previous = true;
  }
  out.value = previous;
  throw Error(ErrorKind::Precision, "tensor quadrature did not converge; best estimate " +
                                        std::to_string(out.value.real()) + (out.value.imag() < 0 ? "" : "+") +
                                        std::to_string(out.value.imag()) + "i, last difference " +
                                        std::to_string(out.error));
}

QuadratureResult adaptive(const CubeMap& map, const Integrand& f, const QuadratureSpec& spec) {
  constexpr int kCellOrder = 6;
  const int d = map.dim;
  const int depth_cap = spec.max_depth > 0 ? spec.max_depth : (d == 2 ? 9 : 5);
  QuadratureResult out;
  // Root estimate only sets the absolute scale of the per-cell tolerance.
  const double scale = std::abs(tensor_rule(map, f, 12, Vec::Zero(d), 1.0));
  const int children = 1 << d;

  std::function<Complex(const Vec&, double, Complex, int)> recurse = [&](const Vec& lo, double size, Complex coarse,
                                                                       int depth) -> Complex {
    const double half = 0.5 * size;
    std::vector<Complex> parts(children);
    Complex fine = 0.0;
    for (int c = 0; c < children; ++c) {
      Vec child_lo = lo;
      for (int k = 0; k < d; ++k)
        if ((c >> k) & 1) child_lo[k] += half;
      parts[c] = tensor_rule(map, f, kCellOrder, child_lo, half);
      fine += parts[c];
    }
    const double diff = std::abs(fine - coarse);
    const double cell_share = std::pow(size, d);
    if (diff <= spec.tol * scale * cell_share || depth >= depth_cap) {
      out.error += diff;
      out.order += 1;
      return fine;
    }
    Complex total = 0.0;
    for (int c = 0; c < children; ++c) {
      Vec child_lo = lo;
      for (int k = 0; k < d; ++k)
        if ((c >> k) & 1) child_lo[k] += half;
      total += recurse(child_lo, half, parts[c], depth + 1);
    }
    return total;
  };
  const Vec origin = Vec::Zero(d);
  out.value = recurse(origin, 1.0, tensor_rule(map, f, kCellOrder, origin, 1.0), 0);
  return out;
}

QuadratureResult monte_carlo(const CubeMap& map, const Integrand& f, const QuadratureSpec& spec) {
  if (spec.samples < 2) throw Error(ErrorKind::Configuration, "Monte Carlo needs at least two samples");
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int d = map.dim;
  Vec u(d), x(d);
  Complex mean = 0.0;
  double m2 = 0.0;  // Welford accumulator of |g - mean|²
  for (std::size_t i = 0; i < spec.samples; ++i) {
    for (int k = 0; k < d; ++k) u[k] = unit(rng);
    const double jac = map.apply(u, x);
    const Complex g = jac * f(x);
    const Complex delta = g - mean;
    mean += delta / static_cast<double>(i + 1);
    m2 += std::real(delta * std::conj(g - mean));
  }
  QuadratureResult out;
  out.value = mean;
  out.error = std::sqrt(m2 / static_cast<double>(spec.samples - 1) / static_cast<double>(spec.samples));
  out.order = static_cast<int>(spec.samples);
  return out;
}

}  // namespace

QuadratureResult quadrature_integral(const Inclusion& shape, const Integrand& f, const QuadratureSpec& spec) {
  shape.validate();
  const CubeMap map = make_map(shape);
  switch (spec.method) {
    case QuadratureMethod::Tensor: return tensor(map, f, spec);
    case QuadratureMethod::Adaptive: return adaptive(map, f, spec);
    case QuadratureMethod::MonteCarlo: return monte_carlo(map, f, spec);
  }
  throw Error(ErrorKind::Configuration, "unknown quadrature method");
}

QuadratureResult quadrature_moment(const Inclusion& shape, const CVec& y, const QuadratureSpec& spec) {
  if (y.size() != shape.dim()) throw Error(ErrorKind::Domain, "frequency dimension does not match shape");
  return quadrature_integral(shape, [&y](const Vec& x) { return std::exp(bdot(x, y)); }, spec);
}

}  // namespace vorder
