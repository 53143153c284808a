#pragma once

#include <array>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Sparse>

#include "vorder/geometry.hpp"

namespace vorder {

// ---------------------------------------------------------------------------
// Mesh
// ---------------------------------------------------------------------------

struct BoundaryEdge {
  int a = 0, b = 0;  // oriented so the domain lies to the left
  Vec2 normal;       // outward unit normal
  double length = 0.0;
};

struct Mesh {
  std::vector<Vec2> nodes;
  std::vector<std::array<int, 3>> triangles;  // counter-clockwise
  std::vector<BoundaryEdge> boundary_edges;
  std::vector<bool> on_boundary;

  int num_nodes() const { return static_cast<int>(nodes.size()); }
  int num_triangles() const { return static_cast<int>(triangles.size()); }
  double area(int t) const;
  double max_edge() const;
  double min_area() const;
  int num_edges() const;

  /// Triangle containing x (closed), or -1. Builds a bucket grid on first use.
  int locate(const Vec2& x) const;

 private:
  mutable std::vector<std::vector<int>> buckets_;
  mutable Vec2 bucket_lo_, bucket_size_;
  mutable int bucket_n_ = 0;
};

using MeshPtr = std::shared_ptr<const Mesh>;

/// Quasi-uniform triangulation with every edge no longer than h. Disks use concentric
/// rings with boundary nodes exactly on the circle; polygons are split into triangles and
/// refined uniformly. Deterministic for given inputs.
MeshPtr build_mesh(const Domain& domain, double h);

// ---------------------------------------------------------------------------
// Fields and boundary pairings
// ---------------------------------------------------------------------------

using ScalarField = std::function<Complex(const Vec2&)>;

/// Piecewise-linear field. `residual` holds A u - F for every node when the field came out
/// of a Galerkin solve; that vector is what boundary pairings are computed from.
struct FemField {
  MeshPtr mesh;
  CVec values;
  CVec residual;

  bool has_residual() const { return residual.size() == values.size() && residual.size() > 0; }
  Complex evaluate(const Vec2& x) const;
  double l2_error(const ScalarField& exact) const;
  double h1_norm() const;
};

FemField interpolate(MeshPtr mesh, const ScalarField& f);

/// A boundary test function: either a smooth function (any interior extension may be used)
/// or the nodal hat of a boundary node, scaled by `weight`.
struct BoundaryTest {
  std::string label;
  ScalarField psi;
  int node = -1;
  double weight = 1.0;
};

using TestPanel = std::vector<BoundaryTest>;

struct FluxTrace {
  std::vector<std::string> labels;
  CVec values;
};

/// z_ω = e^{x·ω} for `count` real directions ω at angles offset + 2πj/count.
TestPanel exponential_panel(int count, double offset = 0.0);

/// Hats at `count` boundary nodes spread along the boundary, normalised by ∫ψ ds so the
/// pairing approximates the pointwise normal derivative there.
TestPanel hat_panel(const Mesh& mesh, int count);

/// Consistent flux ⟨∂_ν u, ψ⟩ = Σ_i ψ̃(x_i) r_i with r the Galerkin residual record.
FluxTrace boundary_flux(const FemField& u, const TestPanel& tests);

/// Pairing against a specific interior extension ψ̃ (evaluated at every node).
Complex boundary_flux(const FemField& u, const ScalarField& extension);

// ---------------------------------------------------------------------------
// Solvers
// ---------------------------------------------------------------------------

/// Coefficient sampled at quadrature points. When `interface_distance` is set, elements
/// whose bounding circle meets its zero set are integrated with recursive subdivision.
struct Coefficient {
  ScalarField value;
  std::function<double(const Vec2&)> interface_distance;
};

struct SolverOptions {
  double tol = 1e-12;           // iterative solver tolerance
  double contract_tol = 1e-10;  // accepted relative residual
  int max_iterations = 20000;
  int subdivision_depth = 6;    // recursion depth for elements cut by an interface
};

/// Galerkin solution of -Δu + q u = f in Ω, u = g on ∂Ω, with g interpolated at boundary
/// nodes. `source` may be empty.
FemField solve_reaction_diffusion(MeshPtr mesh, const Coefficient& q, const Coefficient& source,
                                  const ScalarField& g, const SolverOptions& opts = {});

struct ExcitationSpec {
  int k = 2;
  Vec2 omega0 = Vec2(1.0, 0.0);
  bool allow_k0 = false;  // k = 0 is accepted only with this override

  void validate() const;
};

/// Precomputed pieces of the family -Δ + p^{α(x)} for one order field on one mesh.
class LaplaceFamily {
 public:
  LaplaceFamily(MeshPtr mesh, const OrderField& order, const SolverOptions& opts = {});

  const MeshPtr& mesh() const { return mesh_; }

  /// Full (all nodes) matrix K + M_{p^α}.
  Eigen::SparseMatrix<Complex> matrix(Complex p) const;
  /// Full matrix K + M_1 (the p = 1 operator).
  Eigen::SparseMatrix<Complex> unit_matrix() const;
  /// M_α applied to a nodal vector.
  CVec alpha_mass(const CVec& v) const;

  /// û(p, ·) for the excitation: boundary data k! p^{-k-1} e^{x·ω₀}.
  FemField solve(Complex p, const ExcitationSpec& exc) const;

  /// Dirichlet solve with an arbitrary full matrix, load and boundary values.
  FemField solve_with(const Eigen::SparseMatrix<Complex>& A, const CVec& load, const CVec& boundary_values) const;

 private:
  struct QuadPoint {
    int tri;
    double weight;
    std::array<double, 3> phi;
    double alpha;
  };
  MeshPtr mesh_;
  SolverOptions opts_;
  Eigen::SparseMatrix<double> stiffness_;
  std::vector<QuadPoint> points_;
};

/// û(p, ·) on the mesh; p must lie off (-∞, 0].
FemField laplace_domain_solution(Complex p, const OrderField& order, const ExcitationSpec& exc, MeshPtr mesh);

/// Flux panel G(p) of û(p, ·).
FluxTrace flux_panel(Complex p, const LaplaceFamily& family, const ExcitationSpec& exc, const TestPanel& tests);

struct Linearization {
  FemField v0;
  FemField v1;
  FluxTrace derivative;  // G'(1) = -(k+1)! ∂_ν v₀ - k! ∂_ν v₁ on the panel
};

/// v₀ solves -Δv₀ + v₀ = 0 with v₀ = e^{x·ω₀} on ∂Ω; v₁ solves -Δv₁ + v₁ = α v₀ with zero
/// boundary values, the source being the discrete v₀ weighted by α.
Linearization linearized_flux_derivative(const LaplaceFamily& family, const ExcitationSpec& exc,
                                         const TestPanel& tests);

struct IdentityReport {
  std::vector<Vec2> directions;
  CVec moment;    // analytic difference moment W(ω)
  CVec pairing;   // ⟨∂_ν(v₁¹ - v₁²), z_ω⟩ from the FEM
  Vec residual;   // |W + pairing|
  double max_residual = 0.0;
  double mean_residual = 0.0;
  double scale = 0.0;  // max |W| over the grid
};

IdentityReport identity_residual(const OrderField& cfg1, const OrderField& cfg2, const ExcitationSpec& exc,
                                 MeshPtr mesh, const std::vector<Vec2>& directions, const SolverOptions& opts = {});

// ---------------------------------------------------------------------------
// Time domain
// ---------------------------------------------------------------------------

struct ContourOptions {
  int nodes = 32;  // M: the two-sided sum uses 2M - 1 points
};

struct Inversion {
  CVec value;          // full two-sided sum; the real part is the inverse transform
  double imag_ratio;   // max |Im| / max |Re| over components
};

/// Inverse Laplace transform at t > 0 along the cotangent (Talbot) contour
/// p(θ) = rθ(cot θ + i), r = 2M / (5t), θ_j = jπ/M for |j| < M.
Inversion invert_laplace(const std::function<CVec(Complex)>& F, double t, const ContourOptions& opts = {});

struct TimeDomainFlux {
  Vec times;
  Mat values;      // rows: times, columns: panel entries
  Mat imaginary;   // residual imaginary parts of the inversion sums
  double max_imag_ratio = 0.0;  // max |Im| / max |Re| over everything
  std::vector<std::string> labels;
};

TimeDomainFlux time_domain_flux(const LaplaceFamily& family, const ExcitationSpec& exc, const TestPanel& tests,
                                const Vec& times, const ContourOptions& opts = {});

struct RoundTrip {
  Complex direct;       // flux pairing from the Laplace-domain solve at p
  Complex transformed;  // ∫_0^T e^{-pt} f(t) dt from inverted samples
  double tail = 0.0;        // estimate of ∫_T^∞
  double quadrature = 0.0;  // difference between two composite rules
  double inversion = 0.0;   // change when the contour uses M/2 nodes, propagated through the rule
  double budget() const { return tail + quadrature + inversion; }
  double discrepancy() const { return std::abs(direct - transformed); }
};

/// Forward Laplace transform of the time-domain flux (one panel entry) at real p, compared
/// with the direct solve. Composite Gauss-Legendre on panels graded towards t = 0.
RoundTrip laplace_round_trip(const LaplaceFamily& family, const ExcitationSpec& exc, const BoundaryTest& test,
                             double p, double T, const ContourOptions& opts = {});

/// Signed distance-like function whose zero set contains every inclusion boundary.
std::function<double(const Vec2&)> interface_distance(const OrderField& order);

}  // namespace vorder
