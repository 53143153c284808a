#include "vorder/inverse.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace vorder {

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

std::string fmt(const Vec& v) {
  std::ostringstream os;
  os.precision(6);
  os << "(";
  for (Eigen::Index i = 0; i < v.size(); ++i) os << (i ? ", " : "") << v[i];
  os << ")";
  return os.str();
}

// ---------------------------------------------------------------------------
// Levenberg-Marquardt with central-difference Jacobian and Marquardt scaling.

using ResidualFn = std::function<bool(const Vec&, Vec&)>;

struct LMResult {
  Vec params;
  Vec residual;
  double cost = 0.0;
  int iterations = 0;
  Vec singular_values;
};

// Five-point stencil where the model allows it; the real-direction problems are badly
// conditioned and a plain central difference loses too many digits.
Mat jacobian(const ResidualFn& f, const Vec& p, const Vec& r0) {
  Mat J(r0.size(), p.size());
  Vec r1, r2, r3, r4;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    auto at = [&](double h, Vec& r) {
      Vec q = p;
      q[i] += h;
      return f(q, r);
    };
    const double H = 1e-3 * std::max(1e-2, std::abs(p[i]));
    if (at(H, r1) && at(-H, r2) && at(2 * H, r3) && at(-2 * H, r4)) {
      J.col(i) = (8.0 * (r1 - r2) - (r3 - r4)) / (12.0 * H);
      continue;
    }
    const double h = 1e-7 * std::max(1.0, std::abs(p[i]));
    const bool up = at(h, r1), dn = at(-h, r2);
    if (up && dn) J.col(i) = (r1 - r2) / (2.0 * h);
    else if (up) J.col(i) = (r1 - r0) / h;
    else if (dn) J.col(i) = (r0 - r2) / h;
    else J.col(i).setZero();
  }
  return J;
}

LMResult levenberg_marquardt(const ResidualFn& f, Vec p, int max_iterations, double step_tol) {
  LMResult out;
  Vec r;
  if (!f(p, r)) throw Error(ErrorKind::Numerics, "initial parameters outside the model domain");
  double cost = r.squaredNorm();
  double lambda = 1e-3;
  Mat J = jacobian(f, p, r);
  int it = 0;
  for (; it < max_iterations && cost > 1e-32; ++it) {
    const Vec D = J.colwise().squaredNorm().transpose().eval().cwiseMax(1e-30 * std::max(1.0, J.colwise().squaredNorm().maxCoeff()));
    bool accepted = false;
    Vec step;
    while (lambda < 1e16) {
      // Augmented least squares by QR; the normal equations square an already poor condition.
      Mat M(J.rows() + J.cols(), J.cols());
      M << J, Mat((lambda * D).cwiseSqrt().asDiagonal());
      Vec rhs = Vec::Zero(M.rows());
      rhs.head(r.size()) = -r;
      step = M.colPivHouseholderQr().solve(rhs);
      Vec rn;
      const Vec pn = p + step;
      if (step.allFinite() && f(pn, rn) && rn.squaredNorm() < cost) {
        p = pn;
        r = rn;
        cost = rn.squaredNorm();
        lambda = std::max(lambda / 3.0, 1e-12);
        accepted = true;
        break;
      }
      lambda *= 4.0;
    }
    if (!accepted) break;
    J = jacobian(f, p, r);
    if (step.norm() <= step_tol * (1.0 + p.norm())) {
      ++it;
      break;
    }
  }
  out.params = p;
  out.residual = r;
  out.cost = cost;
  out.iterations = it;
  out.singular_values = Eigen::JacobiSVD<Mat>(J).singularValues();
  return out;
}

// ---------------------------------------------------------------------------
// Probe-local ball model: a ball seen along one half-line only depends on its projections
// s = x·ω̃ and u = x·turn, its radius and its amplitude.

struct ProbeSamples {
  std::vector<SphereDirection> dirs;
  std::vector<CVec> y;
  CVec W;
  Vec R;
};

struct LocalBall {
  double s, u, r, C;
};

Complex local_moment(const LocalBall& b, const ProbeSamples& ps, std::size_t k, const Vec& wt, const Vec& turn) {
  const Vec x = b.s * wt + b.u * turn;
  return b.C * std::exp(bdot(x, ps.y[k])) * ball_moment(b.r, ps.dirs[k]);
}

ProbeSamples sample_probe(const MomentSampler& W, const HalfLineProbe& probe) {
  ProbeSamples ps;
  ps.R = probe.R_grid;
  ps.W.resize(probe.R_grid.size());
  for (Eigen::Index k = 0; k < probe.R_grid.size(); ++k) {
    ps.dirs.push_back(probe.at(probe.R_grid[k]));
    ps.y.push_back(direction_vector(ps.dirs.back()) + to_complex(probe.basis.row(0).transpose()));
    ps.W[k] = W(ps.dirs.back());
  }
  return ps;
}

// Variable projection: real amplitudes for complex columns by weighted linear least squares.
// Returns the weighted misfit (model - target), real and imaginary parts interleaved.
Vec project_amplitudes(const CMat& cols, const CVec& target, const Vec& inv_scale, Vec& amp) {
  const Eigen::Index K = cols.rows();
  Mat A(2 * K, cols.cols());
  Vec b(2 * K);
  for (Eigen::Index k = 0; k < K; ++k) {
    A.row(2 * k) = cols.row(k).real() * inv_scale[k];
    A.row(2 * k + 1) = cols.row(k).imag() * inv_scale[k];
    b[2 * k] = target[k].real() * inv_scale[k];
    b[2 * k + 1] = target[k].imag() * inv_scale[k];
  }
  amp = A.colPivHouseholderQr().solve(b);
  return A * amp - b;
}

// Least squares of v on the columns of A.
Vec lsq(const Mat& A, const Vec& v) { return A.colPivHouseholderQr().solve(v); }

double cond(const Mat& A) {
  const Vec sv = Eigen::JacobiSVD<Mat>(A).singularValues();
  return sv[sv.size() - 1] > 0.0 ? sv[0] / sv[sv.size() - 1] : std::numeric_limits<double>::infinity();
}

DirectionStage peel_direction(const ProbeSamples& ps, const HalfLineProbe& probe, const PeelOptions& opts,
                              std::vector<LocalBall>& balls, ProbeTrace& trace) {
  const Vec wt = probe.omega_tilde(), turn = probe.turn();
  const auto K = static_cast<Eigen::Index>(ps.R.size());
  DirectionStage st;
  st.omega_tilde = wt;
  st.turn = turn;
  st.theta = probe.theta;

  Vec scale(K);
  for (Eigen::Index k = 0; k < K; ++k) scale[k] = std::abs(ps.W[k]);

  auto residual_trace = [&](const std::vector<LocalBall>& bs) {
    CVec T = ps.W;
    for (const auto& b : bs)
      for (Eigen::Index k = 0; k < K; ++k) T[k] -= local_moment(b, ps, static_cast<std::size_t>(k), wt, turn);
    return T;
  };
  auto relative = [&](const CVec& T) {
    double m = 0.0;
    for (Eigen::Index k = 0; k < K; ++k) m = std::max(m, std::abs(T[k]) / scale[k]);
    return m;
  };

  Mat basis(K, 4);
  for (Eigen::Index k = 0; k < K; ++k)
    basis.row(k) << std::cosh(ps.R[k]), 2.0 * std::cos(0.5 * probe.theta) * std::cosh(0.5 * ps.R[k]), ps.R[k], 1.0;
  if (cond(basis.leftCols(2)) > 1e12) throw Error(ErrorKind::Genericity, "growth terms are collinear on this grid");

  trace.R = ps.R;
  trace.log_abs.resize(K);
  for (Eigen::Index k = 0; k < K; ++k) trace.log_abs[k] = std::log(scale[k]);

  const double U = 1.2 * opts.max_norm;
  CVec T = ps.W;
  while (true) {
    const double rel = relative(T);
    st.relative_residual = rel;
    if (rel <= opts.floor) {
      st.reached_floor = true;
      break;
    }
    if (static_cast<int>(balls.size()) >= opts.max_balls) break;

    Vec logT(K);
    for (Eigen::Index k = 0; k < K; ++k) logT[k] = std::log(std::max(std::abs(T[k]), 1e-300));
    const Vec c = lsq(basis, logT);
    if (balls.empty()) trace.fitted = basis * c;

    // The growth fit pins the projection well but the radius poorly on a short grid, so
    // (projection, offset, radius) are scanned with every amplitude eliminated by linear
    // least squares against W. Later balls can hide under earlier ones (nested balls look
    // like one), so their projection is scanned over the whole range.
    std::vector<std::vector<Complex>> bm;
    std::vector<double> radii;
    for (int i = 0; i < 40; ++i) {
      radii.push_back(0.02 + (opts.max_radius - 0.02) * i / 39.0);
      bm.emplace_back(static_cast<std::size_t>(K));
      for (Eigen::Index k = 0; k < K; ++k) bm.back()[static_cast<std::size_t>(k)] = ball_moment(radii.back(), ps.dirs[k]);
    }
    const std::size_t n = balls.size();
    std::vector<std::vector<Complex>> old(n, std::vector<Complex>(static_cast<std::size_t>(K)));
    for (std::size_t j = 0; j < n; ++j)
      for (Eigen::Index k = 0; k < K; ++k) {
        LocalBall unit = balls[j];
        unit.C = 1.0;
        old[j][static_cast<std::size_t>(k)] = local_moment(unit, ps, static_cast<std::size_t>(k), wt, turn);
      }
    // Ball n + 1 is fitted on the top of the grid only: at small R the balls not yet found
    // are not negligible. The window widens by a quarter of the grid per ball.
    const Eigen::Index window = std::max<Eigen::Index>(4, K / 4);
    const Eigen::Index first = std::max<Eigen::Index>(0, K - window * static_cast<Eigen::Index>(n + 1));
    Vec inv = Vec::Zero(K);
    for (Eigen::Index k = first; k < K; ++k) inv[k] = 1.0 / scale[k];
    std::vector<double> w(static_cast<std::size_t>(K));
    for (Eigen::Index k = 0; k < K; ++k) w[static_cast<std::size_t>(k)] = inv[k] * inv[k];
    Mat G0(n + 1, n + 1);
    Vec h0(n + 1);
    for (std::size_t i = 0; i < n; ++i) {
      h0[i] = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        double g = 0.0;
        for (std::size_t k = 0; k < w.size(); ++k) g += w[k] * (std::conj(old[i][k]) * old[j][k]).real();
        G0(i, j) = g;
      }
      for (std::size_t k = 0; k < w.size(); ++k) h0[i] += w[k] * (std::conj(old[i][k]) * ps.W[k]).real();
    }
    std::vector<double> svals;
    if (n == 0)
      for (int is = -5; is <= 5; ++is) svals.push_back(c[0] + 0.01 * is);
    else
      for (int is = 0; is <= 120; ++is) svals.push_back(-U + 2.0 * U * is / 120.0);

    struct Candidate {
      double res;
      LocalBall ball;
      Vec amp;
    };
    std::vector<Candidate> cands, nested;
    std::vector<Complex> e(static_cast<std::size_t>(K)), m(static_cast<std::size_t>(K));
    for (double sv : svals) {
      for (int iu = 0; iu <= 240; ++iu) {
        const double u = -U + 2.0 * U * iu / 240.0;
        const Vec x = sv * wt + u * turn;
        for (Eigen::Index k = 0; k < K; ++k) e[static_cast<std::size_t>(k)] = std::exp(bdot(x, ps.y[k]));
        for (std::size_t ir = 0; ir < radii.size(); ++ir) {
          for (std::size_t k = 0; k < m.size(); ++k) m[k] = e[k] * bm[ir][k];
          Mat G = G0;
          Vec h = h0;
          double gnn = 0.0, hn = 0.0;
          for (std::size_t j = 0; j < n; ++j) {
            double g = 0.0;
            for (std::size_t k = 0; k < m.size(); ++k) g += w[k] * (std::conj(old[j][k]) * m[k]).real();
            G(j, n) = G(n, j) = g;
          }
          for (std::size_t k = 0; k < m.size(); ++k) {
            gnn += w[k] * std::norm(m[k]);
            hn += w[k] * (std::conj(m[k]) * ps.W[k]).real();
          }
          G(n, n) = gnn;
          h[n] = hn;
          const Vec amp = n == 0 ? Vec::Constant(1, hn / gnn) : Vec(G.ldlt().solve(h));
          double res = 0.0;
          for (std::size_t k = 0; k < m.size(); ++k) {
            Complex r = ps.W[static_cast<Eigen::Index>(k)] - amp[n] * m[k];
            for (std::size_t j = 0; j < n; ++j) r -= amp[j] * old[j][k];
            res += w[k] * std::norm(r);
          }
          if (!std::isfinite(res)) continue;
          // Keep a handful of mutually distinct good starts, with a separate pool for starts
          // sitting on a ball already found: nested balls barely lower the scan residual
          // until the joint refinement moves the outer radius.
          const LocalBall lb{sv, u, radii[ir], amp[n]};
          bool on_old = false;
          for (std::size_t j = 0; j < n; ++j)
            on_old = on_old || (std::abs(balls[j].s - sv) < 0.03 && std::abs(balls[j].u - u) < 0.03);
          auto& pool = on_old ? nested : cands;
          auto near = [&](const Candidate& c) {
            return std::abs(c.ball.s - lb.s) < 0.05 && std::abs(c.ball.u - lb.u) < 0.05 && std::abs(c.ball.r - lb.r) < 0.05;
          };
          auto it = std::find_if(pool.begin(), pool.end(), near);
          if (it != pool.end()) {
            if (res < it->res) *it = {res, lb, amp};
          } else if (pool.size() < 4 || res < pool.back().res) {
            if (pool.size() == 4) pool.pop_back();
            pool.push_back({res, lb, amp});
          } else {
            continue;
          }
          std::sort(pool.begin(), pool.end(), [](const Candidate& x, const Candidate& y) { return x.res < y.res; });
        }
      }
    }
    for (auto& c : nested) cands.push_back(std::move(c));
    // Splits of a found ball into two concentric ones with the same total mass.
    std::vector<std::vector<LocalBall>> splits;
    for (std::size_t j = 0; j < n; ++j)
      for (const auto& [fo, fi] : {std::pair{1.15, 0.6}, std::pair{1.3, 0.5}, std::pair{1.05, 0.8}}) {
        std::vector<LocalBall> bs = balls;
        const LocalBall b = balls[j];
        bs[j] = {b.s, b.u, b.r * fo, 0.5 * b.C / (fo * fo)};
        bs.push_back({b.s, b.u, b.r * fi, 0.5 * b.C / (fi * fi)});
        splits.push_back(bs);
      }

    // Joint refinement of everything found so far against the full trace, from each start.
    // Amplitudes are eliminated at every evaluation.
    const std::size_t nn = n + 1;
    auto columns = [&](const std::vector<LocalBall>& bs) {
      CMat cols(K, static_cast<Eigen::Index>(bs.size()));
      for (std::size_t i = 0; i < bs.size(); ++i) {
        LocalBall unit = bs[i];
        unit.C = 1.0;
        for (Eigen::Index k = 0; k < K; ++k)
          cols(k, static_cast<Eigen::Index>(i)) = local_moment(unit, ps, static_cast<std::size_t>(k), wt, turn);
      }
      return cols;
    };
    auto unpack = [&](const Vec& q) {
      std::vector<LocalBall> bs(nn);
      for (std::size_t i = 0; i < nn; ++i) bs[i] = {q[3 * i], q[3 * i + 1], q[3 * i + 2], 0.0};
      return bs;
    };
    const Vec* weights = &inv;
    ResidualFn f = [&](const Vec& q, Vec& r) {
      const auto bs = unpack(q);
      for (const auto& b : bs)
        if (!(b.r > 0.0) || b.r > 4.0 * opts.max_radius || std::abs(b.u) > 4.0 * opts.max_norm) return false;
      Vec amp;
      r = project_amplitudes(columns(bs), ps.W, *weights, amp);
      return r.allFinite();
    };
    double best = std::numeric_limits<double>::infinity();
    std::vector<LocalBall> chosen;
    auto refine = [&](const std::vector<LocalBall>& start, int iterations) {
      Vec p(3 * nn);
      for (std::size_t i = 0; i < nn; ++i) p.segment<3>(3 * i) << start[i].s, start[i].u, start[i].r;
      Vec r0;
      if (!f(p, r0)) return;
      const LMResult lm = levenberg_marquardt(f, p, iterations, 1e-15);
      const auto got = unpack(lm.params);
      // Balls shrinking to points are a spurious minimum of the windowed fit.
      if (std::any_of(got.begin(), got.end(), [&](const LocalBall& b) { return b.r < 1e-2 * opts.max_radius; })) return;
      if (lm.cost < best) {
        best = lm.cost;
        chosen = got;
        Vec amp;
        project_amplitudes(columns(chosen), ps.W, *weights, amp);
        for (std::size_t i = 0; i < nn; ++i) chosen[i].C = amp[static_cast<Eigen::Index>(i)];
      }
    };
    auto run_starts = [&] {
      for (const auto& c : cands) {
        if (std::sqrt(best) < opts.floor) break;
        std::vector<LocalBall> start = balls;
        start.push_back(c.ball);
        refine(start, 150);
      }
      for (const auto& bs : splits) {
        if (std::sqrt(best) < opts.floor) break;
        refine(bs, 150);
      }
    };
    // The window is too short to pin a model that is already complete (radii collapse on
    // it), so every start is first tried on the whole grid.
    const Vec full = scale.cwiseInverse();
    bool closed = false;
    if (first > 0) {
      weights = &full;
      run_starts();
      if (!chosen.empty() && std::sqrt(best / static_cast<double>(K)) < 1e-5) {
        refine(std::vector<LocalBall>(chosen), 5000);
        closed = relative(residual_trace(chosen)) <= opts.floor;
      }
      weights = &inv;
      if (!closed) {
        best = std::numeric_limits<double>::infinity();
        chosen.clear();
      }
    }
    if (!closed) {
      run_starts();
      if (chosen.empty()) throw Error(ErrorKind::Numerics, "no admissible start for the next ball");
      // Exponential-sum fits are slow in their last digits; polish the winner. If the model
      // may already be complete, try the whole grid as well and keep that when it closes.
      refine(std::vector<LocalBall>(chosen), 5000);
      if (first > 0) {
        const std::vector<LocalBall> windowed = chosen;
        weights = &full;
        best = std::numeric_limits<double>::infinity();
        refine(windowed, 5000);
        if (relative(residual_trace(chosen)) > opts.floor) chosen = windowed;
        weights = &inv;
      }
    }
    // A ball shrinking to a point or fading out means the starts were poor for this
    // direction; the caller retries with another one.
    double cmax = 0.0;
    for (const auto& b : chosen) cmax = std::max(cmax, std::abs(b.C));
    for (const auto& b : chosen)
      if (b.r < 1e-2 * opts.max_radius || std::abs(b.C) < 1e-8 * cmax)
        throw Error(ErrorKind::Genericity, "degenerate ball in the layer fit");
    // Recovery order: dominant first, by the growth exponent at the top of the grid.
    const double Rm = ps.R[K - 1];
    auto growth = [&](const LocalBall& b) { return b.s * std::cosh(Rm) + 2.0 * b.r * std::cosh(0.5 * Rm); };
    std::sort(chosen.begin(), chosen.end(), [&](const LocalBall& x, const LocalBall& y) { return growth(x) > growth(y); });
    balls = chosen;
    T = residual_trace(balls);
  }

  st.projections.resize(static_cast<Eigen::Index>(balls.size()));
  st.offsets.resizeLike(st.projections);
  st.radii.resizeLike(st.projections);
  st.amplitudes.resizeLike(st.projections);
  for (std::size_t i = 0; i < balls.size(); ++i) {
    st.projections[i] = balls[i].s;
    st.offsets[i] = balls[i].u;
    st.radii[i] = balls[i].r;
    st.amplitudes[i] = balls[i].C;
  }
  return st;
}

// ---------------------------------------------------------------------------
// Parameter packing for fit_inclusions.

// Shape parameters only; amplitudes are linear and are eliminated during the fit.
int shape_params(const std::string& kind, int d) {
  if (kind == "ball") return d + 1;
  if (kind == "simplex") return d + d * d;
  if (kind == "box") return 2 * d;
  throw Error(ErrorKind::Configuration, "unknown inclusion kind '" + kind + "'");
}

Vec pack(const Inclusion& inc) {
  const int d = inc.dim();
  if (const auto* b = std::get_if<Ball>(&inc.shape)) {
    Vec p(d + 1);
    p << b->center, b->radius;
    return p;
  }
  if (const auto* s = std::get_if<Simplex>(&inc.shape)) {
    Vec p(d + d * d);
    p << s->base, s->matrix.reshaped();
    return p;
  }
  const auto& b = std::get<Box>(inc.shape);
  Vec p(2 * d);
  p << b.center, b.widths;
  return p;
}

// Unit-amplitude inclusion from a parameter block; false when the shape is degenerate.
bool unpack(const std::string& kind, int d, const Eigen::Ref<const Vec>& p, Inclusion& inc) {
  inc.amplitude = 1.0;
  if (kind == "ball") {
    if (!(p[d] > 0.0)) return false;
    inc.shape = Ball{p.head(d), p[d]};
    return true;
  }
  if (kind == "simplex") {
    Mat m = p.segment(d, d * d).reshaped(d, d);
    if (!(std::abs(m.determinant()) > 1e-12)) return false;
    inc.shape = Simplex{p.head(d), m};
    return true;
  }
  if (!(p.segment(d, d).array() > 0.0).all()) return false;
  inc.shape = Box{p.head(d), p.segment(d, d)};
  return true;
}

// ---------------------------------------------------------------------------
// Convex polygon helpers for the assumption checker.

double cross2(const Vec2& a, const Vec2& b, const Vec2& c) {
  return (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
}

double poly_area(const std::vector<Vec2>& p) {
  double a = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) a += cross2(Vec2::Zero(), p[i], p[(i + 1) % p.size()]);
  return 0.5 * a;
}

// Keep {x : n·x ≤ c}.
std::vector<Vec2> clip(const std::vector<Vec2>& poly, const Vec2& n, double c) {
  std::vector<Vec2> out;
  const std::size_t m = poly.size();
  for (std::size_t i = 0; i < m; ++i) {
    const Vec2& a = poly[i];
    const Vec2& b = poly[(i + 1) % m];
    const double fa = n.dot(a) - c, fb = n.dot(b) - c;
    if (fa <= 0.0) out.push_back(a);
    if ((fa < 0.0 && fb > 0.0) || (fa > 0.0 && fb < 0.0)) out.push_back(a + fa / (fa - fb) * (b - a));
  }
  return out;
}

// Half-planes n·x ≤ c describing a convex counter-clockwise polygon.
std::vector<std::pair<Vec2, double>> half_planes(const std::vector<Vec2>& poly) {
  std::vector<std::pair<Vec2, double>> hp;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Vec2 e = poly[(i + 1) % poly.size()] - poly[i];
    const Vec2 n = Vec2(e.y(), -e.x()).normalized();
    hp.emplace_back(n, n.dot(poly[i]));
  }
  return hp;
}

std::vector<Vec2> polygon_of(const Inclusion& inc) {
  std::vector<Vec2> out;
  auto v = inc.vertices();
  if (std::holds_alternative<Box>(inc.shape)) std::swap(v[2], v[3]);
  for (const Vec& x : v) out.emplace_back(x[0], x[1]);
  if (poly_area(out) < 0.0) std::reverse(out.begin(), out.end());
  return out;
}

// Overlay of signed convex shapes into convex cells of constant value.
std::vector<ConvexPiece> overlay(const std::vector<ConvexPiece>& shapes, double min_area) {
  std::vector<ConvexPiece> pieces;
  auto keep = [&](const std::vector<Vec2>& p) { return p.size() >= 3 && std::abs(poly_area(p)) > min_area; };
  // Q minus a convex S, as convex parts.
  auto subtract = [&](const std::vector<Vec2>& Q, const std::vector<Vec2>& S, std::vector<std::vector<Vec2>>& outside) {
    std::vector<Vec2> rest = Q;
    for (const auto& [n, c] : half_planes(S)) {
      auto part = clip(rest, -n, -c);
      if (keep(part)) outside.push_back(part);
      rest = clip(rest, n, c);
      if (!keep(rest)) return std::vector<Vec2>{};
    }
    return rest;
  };
  for (const auto& S : shapes) {
    std::vector<ConvexPiece> next;
    std::vector<std::vector<Vec2>> fresh{S.polygon};
    for (const auto& Q : pieces) {
      std::vector<std::vector<Vec2>> out;
      const auto inside = subtract(Q.polygon, S.polygon, out);
      for (auto& o : out) next.push_back({std::move(o), Q.value});
      if (keep(inside)) next.push_back({inside, Q.value + S.value});
      std::vector<std::vector<Vec2>> remaining;
      for (const auto& F : fresh) subtract(F, Q.polygon, remaining);
      fresh = std::move(remaining);
    }
    for (auto& F : fresh) next.push_back({std::move(F), S.value});
    pieces = std::move(next);
  }
  return pieces;
}

}  // namespace

// ---------------------------------------------------------------------------
// Probes

SphereDirection HalfLineProbe::at(double R) const { return make_direction(basis, Complex(theta, -R), phis); }

Vec HalfLineProbe::omega_tilde() const { return direction_vector(make_direction(basis, theta, phis)).real(); }

Vec HalfLineProbe::turn() const { return quarter_turn(make_direction(basis, theta, phis)); }

void HalfLineProbe::validate(double max_norm, double max_radius) const {
  make_direction(basis, theta, phis).validate();
  if (!(std::abs(theta) < 0.5 * kPi)) throw Error(ErrorKind::Branch, "probe angle must satisfy |theta| < pi/2");
  if (R_grid.size() < 4) throw Error(ErrorKind::Configuration, "probe grid needs at least 4 points");
  for (Eigen::Index i = 0; i < R_grid.size(); ++i)
    if (!(R_grid[i] > 0.0) || (i > 0 && !(R_grid[i] > R_grid[i - 1])))
      throw Error(ErrorKind::Configuration, "probe grid must be positive and increasing");
  const double Rm = R_grid[R_grid.size() - 1];
  const double exponent = 0.5 * std::exp(Rm) * (max_norm + 2.0) + max_radius * std::exp(0.5 * Rm);
  if (exponent > 650.0) throw Error(ErrorKind::Configuration, "probe grid exceeds the overflow budget (R_max too large)");
}

HalfLineProbe make_probe(Mat basis, double theta, Vec phis, Vec R_grid) {
  HalfLineProbe p;
  if (phis.size() == 0 && basis.rows() > 2) phis = Vec::Zero(basis.rows() - 2);
  p.basis = std::move(basis);
  p.theta = theta;
  p.phis = std::move(phis);
  p.R_grid = std::move(R_grid);
  return p;
}

Vec range_grid(double a, double b, double step) {
  const int n = static_cast<int>(std::floor((b - a) / step + 1e-9)) + 1;
  Vec g(n);
  for (int i = 0; i < n; ++i) g[i] = a + i * step;
  return g;
}

// ---------------------------------------------------------------------------
// Spherical peeling

RecoveryReport peel_spherical(const MomentSampler& W, const HalfLineProbe& probe, int n_dirs, const PeelOptions& opts) {
  probe.validate(opts.max_norm, opts.max_radius);
  if (n_dirs < 1) throw Error(ErrorKind::Configuration, "peeling needs at least one direction");
  const int d = probe.dim();
  RecoveryReport rep;
  rep.kind = "ball";
  rep.notes.push_back("differences are relative to the declared reference configuration");

  std::mt19937_64 rng(opts.seed);
  std::uniform_real_distribution<double> th(-1.2, 1.2), ph(0.0, 2.0 * kPi);
  auto next_probe = [&](bool first) {
    HalfLineProbe p = probe;
    if (!first) {
      p.theta = th(rng);
      for (Eigen::Index i = 0; i < p.phis.size(); ++i) p.phis[i] = ph(rng);
    }
    return p;
  };

  std::vector<std::vector<LocalBall>> found;
  for (int j = 0; j < n_dirs; ++j) {
    HalfLineProbe p = next_probe(j == 0);
    for (int attempt = 0;; ++attempt) {
      const ProbeSamples ps = sample_probe(W, p);
      if (ps.W.cwiseAbs().maxCoeff() == 0.0) {
        rep.stages.push_back(DirectionStage{p.omega_tilde(), p.turn(), p.theta, Vec(), Vec(), Vec(), Vec(), 0.0, true, attempt});
        found.emplace_back();
        break;
      }
      std::vector<LocalBall> balls;
      ProbeTrace trace;
      try {
        DirectionStage st = peel_direction(ps, p, opts, balls, trace);
        st.retries = attempt;
        if (st.reached_floor || attempt >= opts.retries) {
          if (!st.reached_floor) rep.complete = false;
          rep.stages.push_back(st);
          rep.traces.push_back(trace);
          found.push_back(balls);
          break;
        }
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::Genericity && e.kind() != ErrorKind::Numerics) throw;
        if (attempt >= opts.retries) throw;
      }
      p = next_probe(false);
    }
  }

  // Centres by least squares over the directions. Balls are matched to the smallest model
  // that closed: a direction can also close with a ball split in several.
  std::size_t ref = 0;
  auto closed = [&](std::size_t j) { return rep.stages[j].reached_floor && !found[j].empty(); };
  for (std::size_t j = 1; j < found.size(); ++j)
    if ((closed(j) && (!closed(ref) || found[j].size() < found[ref].size())) ||
        (!closed(ref) && !closed(j) && found[j].size() > found[ref].size()))
      ref = j;
  for (std::size_t j = 0; j < found.size(); ++j)
    if (closed(j) && found[j].size() != found[ref].size()) {
      rep.notes.push_back("directions disagree on the number of balls; the smallest closing model is used");
      break;
    }
  for (std::size_t b = 0; b < found[ref].size(); ++b) {
    const LocalBall& rb = found[ref][b];
    std::vector<Vec> rows;
    std::vector<double> rhs;
    double rsum = 0.0, csum = 0.0;
    int used = 0;
    for (std::size_t j = 0; j < found.size(); ++j) {
      int best = -1;
      double cost = 0.05 * (1.0 + std::abs(rb.C) + rb.r);
      for (std::size_t i = 0; i < found[j].size(); ++i) {
        const double c = std::abs(found[j][i].r - rb.r) + std::abs(found[j][i].C - rb.C);
        if (c < cost) {
          cost = c;
          best = static_cast<int>(i);
        }
      }
      if (best < 0) continue;
      const LocalBall& m = found[j][static_cast<std::size_t>(best)];
      rows.push_back(rep.stages[j].omega_tilde);
      rhs.push_back(m.s);
      rows.push_back(rep.stages[j].turn);
      rhs.push_back(m.u);
      rsum += m.r;
      csum += m.C;
      ++used;
    }
    Mat A(static_cast<Eigen::Index>(rows.size()), d);
    Vec v(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      A.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
      v[static_cast<Eigen::Index>(i)] = rhs[i];
    }
    // Components outside every probed plane stay at zero.
    const Vec x = A.completeOrthogonalDecomposition().solve(v);
    Inclusion inc;
    inc.shape = Ball{x, rsum / used};
    inc.amplitude = csum / used;
    rep.inclusions.push_back(inc);
  }
  std::stable_sort(rep.inclusions.begin(), rep.inclusions.end(),
                   [](const Inclusion& a, const Inclusion& b) { return std::abs(a.amplitude) > std::abs(b.amplitude); });

  double num = 0.0, den = 0.0;
  for (std::size_t j = 0; j < rep.stages.size(); ++j) {
    rep.relative_residual = std::max(rep.relative_residual, rep.stages[j].relative_residual);
    (void)num;
    (void)den;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Real-direction traces and least-squares refinement

std::vector<SphereDirection> real_directions(const Mat& basis, int count, double offset) {
  const int d = static_cast<int>(basis.rows());
  std::vector<SphereDirection> out;
  for (int j = 0; j < count; ++j) {
    if (d == 2) {
      out.push_back(make_direction(basis, offset + 2.0 * kPi * j / count));
    } else {
      // Fibonacci spiral, then expressed in the basis.
      const double z = 1.0 - (2.0 * j + 1.0) / count;
      const double phi = offset + j * kPi * (3.0 - std::sqrt(5.0));
      Vec u = Vec::Zero(d);
      u[0] = z;
      u[1] = std::sqrt(1.0 - z * z) * std::cos(phi);
      u[2] = std::sqrt(1.0 - z * z) * std::sin(phi);
      out.push_back(direction_from_vector(basis, basis.transpose() * u));
    }
  }
  return out;
}

MomentTrace sample_trace(const MomentSampler& W, const Mat& basis, int count, double offset) {
  MomentTrace t;
  t.directions = real_directions(basis, count, offset);
  t.values.resize(count);
  for (int j = 0; j < count; ++j) t.values[j] = W(t.directions[static_cast<std::size_t>(j)]);
  return t;
}

Complex model_moment(const std::vector<Inclusion>& incs, const SphereDirection& dir) {
  const CVec y = direction_vector(dir) + to_complex(dir.basis.row(0).transpose());
  Complex s = 0.0;
  for (const auto& inc : incs) s += inc.amplitude * shape_moment(inc, y);
  return s;
}

RecoveryReport fit_inclusions(const MomentTrace& samples, const FitModel& model, const RecoveryReport* init,
                              const FitOptions& opts) {
  if (samples.directions.empty()) throw Error(ErrorKind::Contract, "no samples to fit");
  const int d = samples.directions[0].dim();
  const int per = shape_params(model.kind, d);
  const int np = per * model.count;
  const auto m = static_cast<Eigen::Index>(samples.directions.size());
  if (2 * m < 3 * np) throw Error(ErrorKind::Contract, "too few samples for the parameter count");

  Vec p(np);
  if (init && static_cast<int>(init->inclusions.size()) >= model.count) {
    for (int i = 0; i < model.count; ++i) {
      const Vec q = pack(init->inclusions[static_cast<std::size_t>(i)]);
      if (q.size() != per) throw Error(ErrorKind::Contract, "initial guess has a different inclusion kind");
      p.segment(i * per, per) = q;
    }
  } else {
    for (int i = 0; i < model.count; ++i) {
      Vec c = Vec::Zero(d);
      c[0] = 0.3 * std::cos(2.0 * kPi * i / model.count);
      c[1] = 0.3 * std::sin(2.0 * kPi * i / model.count);
      Inclusion g;
      if (model.kind == "ball") g = Inclusion{Ball{c, 0.2}, 0.1};
      else if (model.kind == "simplex") g = Inclusion{Simplex{c, 0.3 * Mat::Identity(d, d)}, 0.1};
      else g = Inclusion{Box{c, Vec::Constant(d, 0.3)}, 0.1};
      p.segment(i * per, per) = pack(g);
    }
  }

  std::vector<CVec> ys;
  for (const auto& dir : samples.directions) ys.push_back(direction_vector(dir) + to_complex(dir.basis.row(0).transpose()));
  const double scale = std::max(samples.values.cwiseAbs().maxCoeff(), 1e-300);
  const Vec inv = Vec::Constant(m, 1.0 / scale);

  auto build = [&](const Vec& q, std::vector<Inclusion>& incs, CMat& cols) {
    incs.resize(static_cast<std::size_t>(model.count));
    cols.resize(m, model.count);
    for (int i = 0; i < model.count; ++i) {
      auto& inc = incs[static_cast<std::size_t>(i)];
      if (!unpack(model.kind, d, q.segment(i * per, per), inc)) return false;
      for (Eigen::Index j = 0; j < m; ++j) cols(j, i) = shape_moment(inc, ys[static_cast<std::size_t>(j)]);
    }
    return true;
  };
  ResidualFn f = [&](const Vec& q, Vec& r) {
    std::vector<Inclusion> incs;
    CMat cols;
    if (!build(q, incs, cols)) return false;
    Vec amp;
    r = project_amplitudes(cols, samples.values, inv, amp);
    return r.allFinite();
  };
  const LMResult lm = levenberg_marquardt(f, p, opts.max_iterations, opts.step_tol);

  RecoveryReport rep;
  rep.kind = model.kind;
  {
    CMat cols;
    Vec amp;
    build(lm.params, rep.inclusions, cols);
    project_amplitudes(cols, samples.values, inv, amp);
    for (int i = 0; i < model.count; ++i) rep.inclusions[static_cast<std::size_t>(i)].amplitude = amp[i];
  }
  rep.iterations = lm.iterations;
  rep.residual_norm = std::sqrt(lm.cost) * scale;
  rep.relative_residual = rep.residual_norm / samples.values.norm();
  const Vec& sv = lm.singular_values;
  rep.min_singular_value = sv.size() ? sv[sv.size() - 1] : 0.0;
  rep.identifiable = sv.size() && sv[0] > 0.0 && rep.min_singular_value > opts.rank_tol * sv[0];
  if (!rep.identifiable) rep.notes.push_back("warning: Jacobian is numerically rank deficient at the optimum");
  rep.notes.push_back("differences are relative to the declared reference configuration");
  return rep;
}

// ---------------------------------------------------------------------------
// Support functions and hulls

SupportEstimate support_function(const MomentSampler& W, const HalfLineProbe& probe, int retries) {
  probe.validate();
  SupportEstimate out;
  HalfLineProbe p = probe;
  for (int attempt = 0;; ++attempt) {
    const auto K = p.R_grid.size();
    Mat A(K, 3);
    Vec b(K);
    bool finite = true;
    for (Eigen::Index k = 0; k < K; ++k) {
      const double R = p.R_grid[k];
      A.row(k) << std::cosh(R), R, 1.0;
      const double a = std::abs(W(p.at(R)));
      b[k] = std::log(a);
      finite = finite && std::isfinite(b[k]);
    }
    if (finite) {
      const Vec c = lsq(A, b);
      const Vec fit = A * c;
      const double rms = std::sqrt((fit - b).squaredNorm() / static_cast<double>(K));
      // A clean vertex-dominated trace is fitted to well below one unit of log|W|.
      if (rms < 0.25 || attempt >= retries) {
        out.h = c[0];
        out.omega_tilde = p.omega_tilde();
        out.coefficients = c;
        out.rms = rms;
        out.retries = attempt;
        out.trace = ProbeTrace{p.R_grid, b, fit};
        return out;
      }
    } else if (attempt >= retries) {
      throw Error(ErrorKind::Genericity, "moment vanishes on the probe half-line");
    }
    p.theta = probe.theta + 1e-2 * (attempt + 1) * ((attempt % 2) ? -1.0 : 1.0);
  }
}

std::vector<Vec2> convex_hull(std::vector<Vec2> pts) {
  std::sort(pts.begin(), pts.end(), [](const Vec2& a, const Vec2& b) { return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y()); });
  pts.erase(std::unique(pts.begin(), pts.end(), [](const Vec2& a, const Vec2& b) { return (a - b).norm() == 0.0; }), pts.end());
  if (pts.size() < 3) return pts;
  double scale = 0.0;
  for (const auto& p : pts) scale = std::max(scale, (p - pts[0]).norm());
  const double tol = 1e-12 * scale * scale;
  std::vector<Vec2> h(2 * pts.size());
  std::size_t k = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    while (k >= 2 && cross2(h[k - 2], h[k - 1], pts[i]) <= tol) --k;
    h[k++] = pts[i];
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i-- > 0;) {
    while (k >= t && cross2(h[k - 2], h[k - 1], pts[i]) <= tol) --k;
    h[k++] = pts[i];
  }
  h.resize(k - 1);
  return h;
}

std::vector<Vec2> recover_hull(const std::vector<std::pair<Vec2, double>>& supports, double resolution) {
  if (supports.size() < 3) throw Error(ErrorKind::Geometry, "hull recovery needs at least 3 support directions");
  std::vector<double> ang;
  for (const auto& [w, h] : supports) ang.push_back(std::atan2(w.y(), w.x()));
  std::sort(ang.begin(), ang.end());
  double gap = ang.front() + 2.0 * kPi - ang.back();
  for (std::size_t i = 1; i < ang.size(); ++i) gap = std::max(gap, ang[i] - ang[i - 1]);
  if (gap >= kPi) throw Error(ErrorKind::Geometry, "support directions do not span the circle");

  double big = 1.0;
  for (const auto& [w, h] : supports) big = std::max(big, 10.0 * std::abs(h));
  std::vector<Vec2> poly{Vec2(-big, -big), Vec2(big, -big), Vec2(big, big), Vec2(-big, big)};
  for (const auto& [w, h] : supports) {
    const double n = w.norm();
    poly = clip(poly, w / n, h / n);
    if (poly.size() < 3) throw Error(ErrorKind::Geometry, "support half-planes have empty intersection");
  }
  if (!(poly_area(poly) > 0.0)) throw Error(ErrorKind::Geometry, "support half-planes have empty interior");

  // Merge coincident corners, then drop corners that turn by no more than the sampling gap.
  double diam = 0.0;
  for (const auto& a : poly)
    for (const auto& b : poly) diam = std::max(diam, (a - b).norm());
  std::vector<Vec2> merged;
  for (const auto& v : poly)
    if (merged.empty() || (v - merged.back()).norm() > 1e-9 * diam) merged.push_back(v);
  while (merged.size() > 1 && (merged.front() - merged.back()).norm() <= 1e-9 * diam) merged.pop_back();
  bool changed = true;
  while (changed && merged.size() > 3) {
    changed = false;
    for (std::size_t i = 0; i < merged.size(); ++i) {
      const Vec2& a = merged[(i + merged.size() - 1) % merged.size()];
      const Vec2& b = merged[i];
      const Vec2& c = merged[(i + 1) % merged.size()];
      const Vec2 u = (b - a).normalized(), v = (c - b).normalized();
      const double turn = std::atan2(u.x() * v.y() - u.y() * v.x(), u.dot(v));
      if (turn <= gap * (1.0 + 1e-9)) {
        merged.erase(merged.begin() + static_cast<std::ptrdiff_t>(i));
        changed = true;
        break;
      }
    }
  }
  if (resolution <= 0.0 || merged.size() <= 3) return merged;

  // Estimated supports round every corner into a fan of short edges. A run of corners
  // closer than the resolution becomes the meeting point of the two long edges around it.
  const double tol = resolution * diam;
  const std::size_t n = merged.size();
  std::size_t start = 0;
  while (start < n && (merged[start] - merged[(start + n - 1) % n]).norm() < tol) ++start;
  if (start == n) return merged;
  std::vector<Vec2> out;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && (merged[(start + j + 1) % n] - merged[(start + j) % n]).norm() < tol) ++j;
    const Vec2& first = merged[(start + i) % n];
    const Vec2& last = merged[(start + j) % n];
    if (j == i) {
      out.push_back(first);
    } else {
      const Vec2& before = merged[(start + i + n - 1) % n];
      const Vec2& after = merged[(start + j + 1) % n];
      const Vec2 u = first - before, v = after - last;
      const double det = cross2(Vec2::Zero(), u, v);
      if (std::abs(det) > 1e-12 * u.norm() * v.norm()) {
        out.push_back(first + u * (cross2(Vec2::Zero(), last - first, v) / det));
      } else {
        out.push_back(0.5 * (first + last));
      }
    }
    i = j + 1;
  }
  // Kinks along an edge within the resolution go as well.
  for (bool again = true; again && out.size() > 3;) {
    again = false;
    for (std::size_t i = 0; i < out.size(); ++i) {
      const Vec2& a = out[(i + out.size() - 1) % out.size()];
      const Vec2& c = out[(i + 1) % out.size()];
      if (segment_distance(out[i], a, c) < tol) {
        out.erase(out.begin() + static_cast<std::ptrdiff_t>(i));
        again = true;
        break;
      }
    }
  }
  return out.size() >= 3 ? out : merged;
}

Complex vertex_group_sum(const std::vector<std::pair<Mat, double>>& simplices, const Vec& omega_t, const Vec& omega_p) {
  if (std::abs(omega_t.dot(omega_p)) > 1e-10 || std::abs(omega_t.norm() - 1.0) > 1e-10 ||
      std::abs(omega_p.norm() - 1.0) > 1e-10)
    throw Error(ErrorKind::Contract, "directions must be orthonormal");
  const CVec z = to_complex(omega_t) + Complex(0.0, 1.0) * to_complex(omega_p);
  Complex sum = 0.0;
  for (const auto& [V, C] : simplices) {
    const CVec f = V.transpose().cast<Complex>() * z;
    const double scale = V.colwise().norm().maxCoeff();
    Complex prod = 1.0;
    for (Eigen::Index j = 0; j < f.size(); ++j) {
      if (std::abs(f[j]) <= 1e-12 * scale) throw Error(ErrorKind::Genericity, "vanishing factor in the vertex group sum");
      prod /= f[j];
    }
    sum += C * std::abs(V.determinant()) * prod;
  }
  return sum;
}

// ---------------------------------------------------------------------------
// Assumption checks

const char* to_string(CheckStatus s) {
  switch (s) {
    case CheckStatus::Pass: return "pass";
    case CheckStatus::Fail: return "fail";
    case CheckStatus::NotApplicable: return "not_applicable";
    case CheckStatus::Unsupported: return "unsupported";
  }
  return "?";
}

const CheckItem* AssumptionReport::find(const std::string& name) const {
  for (const auto& it : items)
    if (it.name == name) return &it;
  return nullptr;
}

namespace {

std::vector<Vec> sample_points(const OrderField& cfg) {
  std::vector<Vec> pts;
  const int d = cfg.dim;
  const Domain& dom = cfg.domain;
  Vec lo(d), hi(d);
  if (dom.is_disk()) {
    lo = dom.disk().center.array() - dom.disk().radius;
    hi = dom.disk().center.array() + dom.disk().radius;
  } else {
    lo = Vec::Constant(2, std::numeric_limits<double>::infinity());
    hi = -lo;
    for (const auto& v : dom.polygon().vertices) {
      lo = lo.cwiseMin(Vec(v));
      hi = hi.cwiseMax(Vec(v));
    }
  }
  const int n = d == 2 ? 200 : 40;
  std::vector<int> idx(static_cast<std::size_t>(d), 0);
  while (true) {
    Vec x(d);
    for (int k = 0; k < d; ++k) x[k] = lo[k] + (hi[k] - lo[k]) * (idx[static_cast<std::size_t>(k)] + 0.5) / n;
    if (dom.contains(x)) pts.push_back(x);
    int k = 0;
    while (k < d && ++idx[static_cast<std::size_t>(k)] == n) idx[static_cast<std::size_t>(k++)] = 0;
    if (k == d) break;
  }
  for (const auto& inc : cfg.inclusions) {
    if (const auto* b = std::get_if<Ball>(&inc.shape)) {
      pts.push_back(b->center);
      for (int k = 0; k < d; ++k)
        for (double s : {-0.99, 0.99}) pts.push_back(b->center + s * b->radius * Vec::Unit(d, k));
      continue;
    }
    const auto v = inc.vertices();
    Vec c = Vec::Zero(d);
    for (const auto& x : v) c += x / static_cast<double>(v.size());
    pts.push_back(c);
    for (const auto& x : v) pts.push_back(x + 1e-3 * (c - x));
  }
  return pts;
}

CheckItem order_bound(const OrderField& cfg, const std::string& label) {
  CheckItem it;
  it.name = "order-bound " + label;
  double sup = -std::numeric_limits<double>::infinity(), inf = std::numeric_limits<double>::infinity();
  Vec xs, xi;
  for (const auto& x : sample_points(cfg)) {
    const double a = cfg(x);
    if (a > sup) {
      sup = a;
      xs = x;
    }
    if (a < inf) {
      inf = a;
      xi = x;
    }
  }
  const bool range = inf > 0.0 && sup < 1.0;
  it.status = range && sup < 2.0 * inf ? CheckStatus::Pass : CheckStatus::Fail;
  it.detail = "sup " + fmt(sup) + ", inf " + fmt(inf) + ", margin 2 inf - sup = " + fmt(2.0 * inf - sup) +
              (range ? "" : "; values leave (0, 1)");
  it.witnesses.push_back("sup at " + fmt(xs));
  it.witnesses.push_back("inf at " + fmt(xi));
  return it;
}

bool all_of_kind(const OrderField& a, const OrderField& b, bool balls) {
  for (const auto* cfg : {&a, &b})
    for (const auto& inc : cfg->inclusions)
      if (std::holds_alternative<Ball>(inc.shape) != balls) return false;
  return true;
}

double difference_at(const OrderField& a, const OrderField& b, const Vec& x) {
  double s = 0.0;
  for (const auto& inc : a.inclusions)
    if (inc.contains(x)) s += inc.amplitude;
  for (const auto& inc : b.inclusions)
    if (inc.contains(x)) s -= inc.amplitude;
  return s;
}

void fan(const std::vector<Vec2>& p, double value, std::vector<std::pair<std::array<Vec2, 3>, double>>& out) {
  for (std::size_t i = 1; i + 1 < p.size(); ++i) out.push_back({{p[0], p[i], p[i + 1]}, value});
}

void polytopes_2d(const OrderField& cfg1, const OrderField& cfg2, AssumptionReport& rep) {
  std::vector<ConvexPiece> shapes;
  double scale = 0.0;
  for (const auto& inc : cfg1.inclusions) shapes.push_back({polygon_of(inc), inc.amplitude});
  for (const auto& inc : cfg2.inclusions) shapes.push_back({polygon_of(inc), -inc.amplitude});
  for (const auto& s : shapes)
    for (const auto& v : s.polygon) scale = std::max(scale, v.norm());
  scale = std::max(scale, 1e-300);
  const double tol = 1e-9 * scale;

  auto pieces = overlay(shapes, 1e-14 * scale * scale);
  pieces.erase(std::remove_if(pieces.begin(), pieces.end(), [](const ConvexPiece& p) { return std::abs(p.value) <= 1e-12; }),
               pieces.end());

  CheckItem hv;
  hv.name = "hull-vertex";
  CheckItem dv;
  dv.name = "disjoint-vertices";

  // Shared polygon vertices between the two configurations.
  std::vector<Vec2> v1, v2;
  for (const auto& inc : cfg1.inclusions)
    for (const auto& v : polygon_of(inc)) v1.push_back(v);
  for (const auto& inc : cfg2.inclusions)
    for (const auto& v : polygon_of(inc)) v2.push_back(v);
  for (const auto& a : v1)
    for (const auto& b : v2)
      if ((a - b).norm() <= tol) dv.witnesses.push_back("common vertex " + fmt(Vec(a)));

  if (pieces.empty()) {
    hv.status = CheckStatus::Pass;
    hv.detail = "the two orders coincide";
    dv.status = CheckStatus::Pass;
    dv.detail = "the two orders coincide";
    rep.items.push_back(hv);
    rep.items.push_back(dv);
    return;
  }
  dv.status = dv.witnesses.empty() ? CheckStatus::Pass : CheckStatus::Fail;
  dv.detail = dv.witnesses.empty() ? "no polygon vertex is shared" : "polygon vertices are shared";

  std::vector<Vec2> all;
  for (const auto& p : pieces) all.insert(all.end(), p.polygon.begin(), p.polygon.end());
  rep.hull = convex_hull(all);

  // Around each hull vertex: runs of the difference on a small circle.
  int witness = -1;
  double witness_value = 0.0;
  for (std::size_t h = 0; h < rep.hull.size() && witness < 0; ++h) {
    const Vec2 v = rep.hull[h];
    double near = std::numeric_limits<double>::infinity();
    for (const auto& q : all)
      if ((q - v).norm() > tol) near = std::min(near, (q - v).norm());
    const double r = 1e-4 * near;
    const int n = 720;
    std::vector<double> vals(n);
    for (int k = 0; k < n; ++k) {
      const double a = 2.0 * kPi * (k + 0.5) / n;
      vals[static_cast<std::size_t>(k)] = difference_at(cfg1, cfg2, Vec(v + r * Vec2(std::cos(a), std::sin(a))));
    }
    std::vector<double> runs;
    int start = 0;
    while (start < n && std::abs(vals[static_cast<std::size_t>(start)] - vals[static_cast<std::size_t>(n - 1)]) <= 1e-12) ++start;
    for (int k = 0; k < n; ++k) {
      const double cur = vals[static_cast<std::size_t>((start + k) % n)];
      if (runs.empty() || std::abs(runs.back() - cur) > 1e-12) runs.push_back(cur);
    }
    int nonzero = 0;
    for (double x : runs) nonzero += std::abs(x) > 1e-12;
    std::string desc = "hull vertex " + fmt(Vec(v)) + ": sector values";
    for (double x : runs) desc += " " + fmt(x);
    hv.witnesses.push_back(desc);
    if (nonzero == 1 && runs.size() == 2) {
      witness = static_cast<int>(h);
      for (double x : runs)
        if (std::abs(x) > 1e-12) witness_value = x;
    }
  }

  std::vector<ConvexPiece> cells = pieces;
  if (witness >= 0) {
    const Vec2 v = rep.hull[static_cast<std::size_t>(witness)];
    // Isolated-vertex decomposition: cut a small triangle at v off every cell touching it.
    std::vector<std::size_t> touching;
    double eps = std::numeric_limits<double>::infinity();
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    Vec2 e_lo, e_hi;
    // Sector bisector from the cells' edge directions, then the two extreme edges.
    Vec2 mid = Vec2::Zero();
    for (std::size_t i = 0; i < cells.size(); ++i) {
      const auto& P = cells[i].polygon;
      for (std::size_t k = 0; k < P.size(); ++k)
        if ((P[k] - v).norm() <= tol) {
          touching.push_back(i);
          mid += (P[(k + 1) % P.size()] - v).normalized() + (P[(k + P.size() - 1) % P.size()] - v).normalized();
          for (std::size_t e = 0; e < P.size(); ++e) {
            const Vec2& a = P[e];
            const Vec2& b = P[(e + 1) % P.size()];
            if ((a - v).norm() > tol && (b - v).norm() > tol) eps = std::min(eps, segment_distance(v, a, b));
          }
        }
    }
    mid.normalize();
    for (std::size_t i : touching) {
      const auto& P = cells[i].polygon;
      for (std::size_t k = 0; k < P.size(); ++k)
        if ((P[k] - v).norm() <= tol)
          for (const Vec2& w : {P[(k + 1) % P.size()], P[(k + P.size() - 1) % P.size()]}) {
            const Vec2 e = (w - v).normalized();
            const double ang = std::atan2(mid.x() * e.y() - mid.y() * e.x(), mid.dot(e));
            if (ang < lo) {
              lo = ang;
              e_lo = e;
            }
            if (ang > hi) {
              hi = ang;
              e_hi = e;
            }
          }
    }
    eps *= 0.5;
    const Vec2 a = v + eps * e_lo, b = v + eps * e_hi;
    Vec2 n(b.y() - a.y(), a.x() - b.x());
    if (n.dot(v - a) < 0.0) n = -n;  // n points towards v
    for (std::size_t i : touching) cells[i].polygon = clip(cells[i].polygon, n, n.dot(a));
    std::vector<Vec2> tri{v, a, b};
    if (poly_area(tri) < 0.0) std::swap(tri[1], tri[2]);
    cells.push_back({tri, witness_value});
    cells.erase(std::remove_if(cells.begin(), cells.end(), [&](const ConvexPiece& c) {
                  return c.polygon.size() < 3 || std::abs(poly_area(c.polygon)) <= 1e-14 * scale * scale;
                }),
                cells.end());
    hv.status = CheckStatus::Pass;
    hv.detail = "hull vertex " + fmt(Vec(v)) + " is a vertex of exactly one simplex (value " + fmt(witness_value) + ")";
  } else {
    hv.status = CheckStatus::Fail;
    hv.detail = "every hull vertex of the support meets more than one value of the difference";
  }
  rep.pieces = pieces;
  for (const auto& c : cells) fan(c.polygon, c.value, rep.triangles);
  rep.items.push_back(hv);
  rep.items.push_back(dv);
}

void simplices_3d(const OrderField& cfg1, const OrderField& cfg2, AssumptionReport& rep) {
  struct S {
    Vec base;
    Mat V;
    double C;
    std::vector<Vec> verts;
  };
  std::vector<S> list;
  auto add = [&](const Inclusion& inc, double sign) {
    const auto* s = std::get_if<Simplex>(&inc.shape);
    list.push_back({s->base, s->matrix, sign * inc.amplitude, inc.vertices()});
  };
  for (const auto& inc : cfg1.inclusions) add(inc, 1.0);
  for (const auto& inc : cfg2.inclusions) add(inc, -1.0);
  // Identical simplices with cancelling values drop out.
  for (std::size_t i = 0; i < list.size(); ++i)
    for (std::size_t j = i + 1; j < list.size(); ++j)
      if (list[i].C != 0.0 && list[j].C != 0.0 && (list[i].base - list[j].base).norm() < 1e-12 &&
          (list[i].V - list[j].V).norm() < 1e-12) {
        list[i].C += list[j].C;
        list[j].C = 0.0;
      }
  list.erase(std::remove_if(list.begin(), list.end(), [](const S& s) { return std::abs(s.C) <= 1e-12; }), list.end());

  CheckItem hv{"hull-vertex", CheckStatus::Fail, "", {}};
  CheckItem dv{"disjoint-vertices", CheckStatus::Pass, "no polytope vertex is shared", {}};
  CheckItem cs{"cone-or-sum", CheckStatus::Fail, "", {}};
  for (const auto& a : cfg1.inclusions)
    for (const auto& b : cfg2.inclusions)
      for (const auto& x : a.vertices())
        for (const auto& y : b.vertices())
          if ((x - y).norm() < 1e-12) dv.witnesses.push_back("common vertex " + fmt(x));
  if (list.empty()) {
    hv.status = dv.status = cs.status = CheckStatus::Pass;
    hv.detail = dv.detail = cs.detail = "the two orders coincide";
    rep.items.insert(rep.items.end(), {hv, dv, cs});
    return;
  }
  if (!dv.witnesses.empty()) {
    dv.status = CheckStatus::Fail;
    dv.detail = "polytope vertices are shared";
  }

  std::vector<Vec> pts;
  for (const auto& s : list)
    for (const auto& v : s.verts)
      if (std::none_of(pts.begin(), pts.end(), [&](const Vec& p) { return (p - v).norm() < 1e-12; })) pts.push_back(v);

  const int d = cfg1.dim;
  for (const auto& z : pts) {
    SeparatingDirection sep;
    try {
      sep = separating_direction(pts, z);
    } catch (const Error&) {
      continue;
    }
    std::vector<std::pair<Mat, double>> group;
    for (const auto& s : list) {
      int at = -1;
      for (std::size_t k = 0; k < s.verts.size(); ++k)
        if ((s.verts[k] - z).norm() < 1e-12) at = static_cast<int>(k);
      if (at < 0) continue;
      Mat V(d, d);
      int c = 0;
      for (std::size_t k = 0; k < s.verts.size(); ++k)
        if (static_cast<int>(k) != at) V.col(c++) = s.verts[k] - z;
      group.emplace_back(V, s.C);
    }
    hv.witnesses.push_back("hull vertex " + fmt(z) + " lies on " + std::to_string(group.size()) + " simplices");
    if (group.size() == 1 && hv.status != CheckStatus::Pass) {
      hv.status = CheckStatus::Pass;
      hv.detail = "hull vertex " + fmt(z) + " is a vertex of exactly one simplex";
    }
    // Cone condition around -ω_sep, else the vertex group sum for a few transverse directions.
    const Vec wt = -sep.omega.normalized();
    bool cone = true;
    for (const auto& [V, C] : group)
      for (Eigen::Index j = 0; j < d; ++j)
        cone = cone && V.col(j).dot(wt) < -V.col(j).norm() * std::cos(kPi / (2.0 * d));
    bool sum_ok = false;
    std::string sums;
    const Mat B = orthonormal_basis_with_first(wt);
    for (Eigen::Index r = 1; r < B.rows() && !sum_ok; ++r) {
      try {
        const Vec wp = B.row(r).transpose();
        double mag = 0.0;
        for (const auto& [V, C] : group) mag += std::abs(C) * std::abs(V.determinant()) / std::pow(V.colwise().norm().prod(), 1.0);
        const Complex s = vertex_group_sum(group, wt, wp);
        sums += " " + fmt(std::abs(s));
        sum_ok = std::abs(s) > 1e-10 * std::max(mag, 1e-300);
      } catch (const Error&) {
      }
    }
    if ((cone || sum_ok) && cs.status != CheckStatus::Pass) {
      cs.status = CheckStatus::Pass;
      cs.detail = "at hull vertex " + fmt(z) + (cone ? ": cone condition holds" : ": vertex group sum nonzero");
    }
    cs.witnesses.push_back("vertex " + fmt(z) + (cone ? " cone ok" : " cone fails") + ", |sum|" + sums);
  }
  if (hv.status != CheckStatus::Pass) hv.detail = "every hull vertex is shared by several simplices";
  if (cs.status != CheckStatus::Pass) cs.detail = "no hull vertex satisfies the cone condition or a nonzero group sum";
  for (const auto& s : list) {
    ConvexPiece p;
    p.value = s.C;
    rep.pieces.push_back(p);
  }
  rep.items.insert(rep.items.end(), {hv, dv, cs});
}

}  // namespace

AssumptionReport check_assumptions(const OrderField& cfg1, const OrderField& cfg2) {
  cfg1.validate();
  cfg2.validate();
  AssumptionReport rep;
  rep.note = "differences are taken relative to the declared reference (second configuration)";
  rep.items.push_back(order_bound(cfg1, "first"));
  rep.items.push_back(order_bound(cfg2, "second"));

  if (cfg1.dim != cfg2.dim || !(cfg1.domain == cfg2.domain)) {
    rep.items.push_back({"shared-background", CheckStatus::Fail, "dimensions or domains differ", {}});
    return rep;
  }
  const bool shared = cfg1.same_background(cfg2);
  rep.items.push_back({"shared-background", shared ? CheckStatus::Pass : CheckStatus::Fail,
                       shared ? "backgrounds coincide" : "backgrounds differ; the difference is not piecewise constant",
                       {}});

  const bool any = !cfg1.inclusions.empty() || !cfg2.inclusions.empty();
  CheckItem balls{"ball-closure", CheckStatus::NotApplicable, "no ball inclusions", {}};
  if (any && all_of_kind(cfg1, cfg2, true)) {
    balls.status = CheckStatus::Pass;
    balls.detail = "every closed ball lies inside the domain";
    for (const auto* cfg : {&cfg1, &cfg2})
      for (const auto& inc : cfg->inclusions) {
        const auto& b = std::get<Ball>(inc.shape);
        const double margin = cfg->domain.inner_distance(b.center) - b.radius;
        balls.witnesses.push_back("ball at " + fmt(b.center) + " r " + fmt(b.radius) + " margin " + fmt(margin));
        if (!(margin > 0.0)) {
          balls.status = CheckStatus::Fail;
          balls.detail = "a closed ball meets the boundary";
        }
      }
  } else if (any && !all_of_kind(cfg1, cfg2, false)) {
    balls.status = CheckStatus::Unsupported;
    balls.detail = "mixed ball and polytope inclusions";
  }
  rep.items.push_back(balls);

  if (any && all_of_kind(cfg1, cfg2, false) && shared) {
    if (cfg1.dim == 2) {
      polytopes_2d(cfg1, cfg2, rep);
      rep.items.push_back({"cone-or-sum", CheckStatus::NotApplicable, "only needed for d >= 3", {}});
    } else {
      bool simplices = true;
      for (const auto* cfg : {&cfg1, &cfg2})
        for (const auto& inc : cfg->inclusions) simplices = simplices && std::holds_alternative<Simplex>(inc.shape);
      if (simplices) simplices_3d(cfg1, cfg2, rep);
      else rep.items.push_back({"hull-vertex", CheckStatus::Unsupported, "boxes in d >= 3 are not decomposed", {}});
    }
  } else if (any && !all_of_kind(cfg1, cfg2, true)) {
    rep.items.push_back({"hull-vertex", CheckStatus::Unsupported,
                         shared ? "mixed ball and polytope inclusions" : "backgrounds differ", {}});
  }
  return rep;
}

}  // namespace vorder
