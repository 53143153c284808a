#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "vorder/moments.hpp"

namespace vorder {

// ---------------------------------------------------------------------------
// Half-line probes θ̃ - iR
// ---------------------------------------------------------------------------

struct HalfLineProbe {
  Mat basis;           // rows ê₁ = ω₀, ...
  double theta = 0.0;  // θ̃
  Vec phis;
  Vec R_grid;          // increasing, positive

  int dim() const { return static_cast<int>(basis.rows()); }
  SphereDirection at(double R) const;
  Vec omega_tilde() const;  // ω(θ̃, φ)
  Vec turn() const;         // ω(θ̃ + π/2, φ)

  /// Throws when |θ̃| ≥ π/2, the grid is not increasing and positive, or the exponent
  /// ½e^{R_max}(max_norm + 2) + max_radius·e^{R_max/2} exceeds 650.
  void validate(double max_norm = 1.0, double max_radius = 1.0) const;
};

HalfLineProbe make_probe(Mat basis, double theta, Vec phis, Vec R_grid);

/// Evenly spaced grid a, a + step, ..., b (inclusive up to rounding).
Vec range_grid(double a, double b, double step);

// ---------------------------------------------------------------------------
// Recovery reports
// ---------------------------------------------------------------------------

struct DirectionStage {
  Vec omega_tilde;
  Vec turn;
  double theta = 0.0;
  Vec projections;  // x·ω̃ in recovery order (dominant first)
  Vec offsets;      // x·turn
  Vec radii;
  Vec amplitudes;
  double relative_residual = 0.0;  // max_R |W - model| / |W|
  bool reached_floor = false;
  int retries = 0;
};

struct ProbeTrace {
  Vec R;
  Vec log_abs;
  Vec fitted;
};

struct RecoveryReport {
  std::string kind;  // "ball", "simplex", "box", "hull"
  std::vector<Inclusion> inclusions;
  double residual_norm = 0.0;      // absolute 2-norm over the fitted samples
  double relative_residual = 0.0;  // residual_norm / sample norm
  double min_singular_value = 0.0;
  bool identifiable = true;
  bool complete = true;
  int iterations = 0;
  std::vector<DirectionStage> stages;
  std::vector<ProbeTrace> traces;
  std::vector<std::string> notes;
};

struct PeelOptions {
  double floor = 1e-9;  // stop when max_R |residual| / |W| drops below
  int max_balls = 6;
  double max_norm = 1.0;    // bound on |x| for centres (domain radius)
  double max_radius = 1.0;
  int retries = 4;
  std::uint64_t seed = 1;
};

/// Layer-by-layer recovery of a ball configuration from its moment function. Direction 0 is
/// the probe itself; further directions are drawn from the seed. Per direction the dominant
/// ball is located from the growth of log|W|, refined jointly with the balls already found,
/// and subtracted exactly; centres are then triangulated across directions.
RecoveryReport peel_spherical(const MomentSampler& W, const HalfLineProbe& probe, int n_dirs,
                              const PeelOptions& opts = {});

/// Samples of W on real directions, with ω₀ = ê₁ of each direction's basis.
struct MomentTrace {
  std::vector<SphereDirection> directions;
  CVec values;
};

MomentTrace sample_trace(const MomentSampler& W, const Mat& basis, int count, double offset = 0.0);

/// Real directions on the circle (d = 2) or a spiral on the sphere (d = 3).
std::vector<SphereDirection> real_directions(const Mat& basis, int count, double offset = 0.0);

struct FitModel {
  std::string kind = "ball";  // ball, simplex or box
  int count = 1;
};

struct FitOptions {
  int max_iterations = 2000;
  double step_tol = 1e-15;
  double rank_tol = 1e-8;  // σ_min / σ_max below this flags non-identifiability
};

/// Levenberg-Marquardt on (amplitude, shape, position) of `count` inclusions.
RecoveryReport fit_inclusions(const MomentTrace& samples, const FitModel& model, const RecoveryReport* init,
                              const FitOptions& opts = {});

/// Model moment Σ C_i ∫_{D_i} e^{x·(ω+ω₀)} for the given inclusions.
Complex model_moment(const std::vector<Inclusion>& incs, const SphereDirection& dir);

// ---------------------------------------------------------------------------
// Polytopes
// ---------------------------------------------------------------------------

struct SupportEstimate {
  double h = 0.0;
  Vec omega_tilde;
  Vec coefficients;  // (cosh R, R, 1)
  double rms = 0.0;
  int retries = 0;
  ProbeTrace trace;
};

/// h(ω̃) from the growth of log|W(θ̃ - iR)|, fitted on {cosh R, R, 1}.
SupportEstimate support_function(const MomentSampler& W, const HalfLineProbe& probe, int retries = 3);

/// Vertices (counter-clockwise) of ∩{x·ω ≤ h}; vertices whose exterior angle is no larger
/// than the widest gap between sampled normals are pruned. With resolution > 0, runs of
/// vertices closer than resolution × diameter are merged into one corner.
std::vector<Vec2> recover_hull(const std::vector<std::pair<Vec2, double>>& supports, double resolution = 0.0);

/// Σ C_i |det V_i| Π_j (V_iᵀ(ω̃ + iω̃'))_j^{-1}.
Complex vertex_group_sum(const std::vector<std::pair<Mat, double>>& simplices, const Vec& omega_t,
                         const Vec& omega_p);

/// Convex hull (counter-clockwise, no collinear points) by the monotone chain.
std::vector<Vec2> convex_hull(std::vector<Vec2> points);

// ---------------------------------------------------------------------------
// Assumption checks
// ---------------------------------------------------------------------------

enum class CheckStatus { Pass, Fail, NotApplicable, Unsupported };

const char* to_string(CheckStatus s);

struct CheckItem {
  std::string name;
  CheckStatus status = CheckStatus::NotApplicable;
  std::string detail;
  std::vector<std::string> witnesses;
};

struct ConvexPiece {
  std::vector<Vec2> polygon;  // counter-clockwise
  double value = 0.0;
};

struct AssumptionReport {
  std::vector<CheckItem> items;
  std::vector<ConvexPiece> pieces;                        // supp(α¹ - α²) as convex cells
  std::vector<std::pair<std::array<Vec2, 3>, double>> triangles;  // simplicial decomposition
  std::vector<Vec2> hull;                                 // convex hull P
  std::string note;

  const CheckItem* find(const std::string& name) const;
};

AssumptionReport check_assumptions(const OrderField& cfg1, const OrderField& cfg2);

}  // namespace vorder
