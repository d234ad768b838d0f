#pragma once

#include <memory>
#include <vector>

#include "core/oracle.hpp"
#include "core/spectral.hpp"
#include "core/stratify.hpp"

namespace fibm {

// Per-node spectral data of the sampled fiber hamiltonian, computed once
// and shared by every stage that needs projectors or eigenvalues.
struct SpectralFieldData {
  GridPtr grid;
  double cluster_tol = kDefaultClusterTol;
  std::vector<SpectralDecomposition> decomp;

  const SpectralDecomposition& at(std::int64_t node) const {
    return decomp[static_cast<size_t>(node)];
  }
};
using SpectralFieldPtr = std::shared_ptr<const SpectralFieldData>;

SpectralFieldPtr build_spectral_field(const MatrixField& h, double cluster_tol);

// One patch of the base covering: an open ball (generic construction) or an
// axis slab carrying one of the built-in profile bumps (the closed-form
// construction of the two-band models, whose energy bands are unbounded).
struct Region {
  enum class Kind { Ball, Slab };
  Kind kind = Kind::Ball;

  // ball data
  Coord center{};
  double radius = 0.0;  // omega_m radius; bump support is bump_frac * radius

  // slab data: profile 0 = g0, 1 = g+, 2 = g- as functions of k[axis]
  int axis = 0;
  int profile = 0;

  std::vector<std::int64_t> valid_nodes;  // stencil-dilated omega_m
  std::vector<char> valid_mask;           // full-grid validity mask
};

// One cylinder omega_m x J_{m,n}. Interval windows select clusters by
// energy; branch windows (slab coverings) select by spectral order, which
// is how a band sheet is followed across the whole slab.
struct Window {
  int region = 0;
  int index_in_region = 0;
  bool branch_mode = false;
  Interval J{}, Jprime{};
  int branch_order = 0;  // cluster position from the bottom when branch_mode
  int rank = 0;
  int stratum_id = -1;
  std::int64_t anchor_node = -1;
};

struct Covering {
  GridPtr grid;
  Interval I{}, Itilde{};
  std::vector<Region> regions;
  std::vector<Window> windows;
  std::vector<std::vector<int>> region_windows;  // m -> window indices
  bool analytic = false;
  int model_id = 0;
  double bump_frac = 0.93;   // bump support radius / ball radius
  double cover_frac = 0.80;  // radius fraction counted as covered
  double cluster_tol = kDefaultClusterTol;

  int num_regions() const { return static_cast<int>(regions.size()); }
};

// Projector of one window at one node (already-decomposed fiber).
Matrix window_projector(const Covering& cov, const Window& w, const SpectralDecomposition& d);

// Window projector sampled over the region's valid nodes; mask marks nodes
// where the window structure is defined.
struct MaskedField {
  MatrixField field;
  std::vector<char> mask;
};
MaskedField window_projector_field(const Covering& cov, int window_index,
                                   const SpectralFieldData& spec);

// Node-local cache of every window's projector over its region's valid
// nodes. Ball coverings produce hundreds of small regions, so all
// downstream machinery works node lists instead of dense grid fields.
class WindowCache {
 public:
  WindowCache(const Covering& cov, const SpectralFieldData& spec);

  // nullptr when the node is outside the window's structural validity
  const Matrix* projector(int window_index, std::int64_t node) const;
  const std::vector<std::int64_t>& nodes(int window_index) const;
  const Covering& covering() const { return *cov_; }
  const SpectralFieldData& spectral() const { return *spec_; }

 private:
  struct Entry {
    std::vector<std::int64_t> nodes;  // sorted
    std::vector<Matrix> proj;
    std::vector<char> valid;
  };
  const Covering* cov_;
  const SpectralFieldData* spec_;
  std::vector<Entry> entries_;
};

struct CoveringOptions {
  double initial_radius = 0.0;     // 0: auto from the box size
  int max_halvings = 20;
  double boundary_margin = 0.0;    // 0: auto (4h); box grids only
  double escape_grad_floor = 0.1;
  double rank_tol = 1e-10;
  double frame_gap = 0.9;          // max allowed projector motion in a ball
};

// Greedy covering of the sampled energy shell p^-1(I) by balls with
// per-cluster energy windows; every check runs on grid nodes plus cell
// midpoints inside each candidate ball.
Covering build_covering(const MatrixPolynomialFamily& fam, GridPtr grid,
                        const SigmaSample& sample, const std::vector<Stratum>& strata,
                        const ThresholdSet& thresholds, const Interval& I, const Interval& Itilde,
                        const CoveringOptions& opts = {});

// The closed-form slab covering of the built-in models: a multiplicity-2
// slab around k1 = 0 and one branch slab per sign of k1.
Covering analytic_covering(int model_id, GridPtr grid, const Interval& I, const Interval& Itilde,
                           const SpectralFieldData& spec);

// Bump functions g_m and energy cutoffs chi_{m,n}. Values and gradients
// are closed-form; discrete differencing never touches the profiles.
class BumpSystem {
 public:
  BumpSystem(const Covering& cov, std::shared_ptr<const ClosedFormModel> model);

  double g(int m, const Coord& k) const;
  std::array<double, kMaxDim> grad_g(int m, const Coord& k) const;
  double chi(int window_index, double lambda) const;

  // smooth indicator >= bump support of region m, supported inside omega_m
  double support_indicator(int m, const Coord& k) const;

  const Covering& covering() const { return *cov_; }

 private:
  double raw_bump(int m, const Coord& k) const;
  double raw_bump_radial_deriv(int m, double t) const;
  const Covering* cov_;
  std::shared_ptr<const ClosedFormModel> model_;
};

// Verification results for the partition identities.
struct PartitionReport {
  double max_g_defect = 0.0;       // | sum g^2 - 1 | on the covered shell
  double max_sigma_defect = 0.0;   // | sum g^2 chi^2 - 1 | on Sigma samples
  double min_raw_sum = 1.0;        // min sum of unnormalized bump squares
};
PartitionReport verify_partition(const BumpSystem& bumps, const SigmaSample& sample,
                                 const Interval& I);

// Incidence classification of intersecting cylinders via rank absorption.
struct IncidencePair {
  int deeper = -1;    // window index with the higher rank
  int shallower = -1; // absorbed window
  bool same_stratum = false;
  double absorption_defect = 0.0;
};
struct IncidenceData {
  std::vector<IncidencePair> pairs;
  std::vector<std::vector<int>> orderings;  // deepest-first maximal families
};
IncidenceData classify_incidence(const WindowCache& cache, double tol = 1e-10);

// Square partition {Theta_alpha^2} over region m subordinate to the
// overlap pattern, for gluing the per-intersection connections.
struct ThetaFamily {
  std::vector<std::vector<int>> alphas;   // region index sets, each contains m
  std::vector<ScalarField> weights;       // Theta_alpha^2 over the grid
  double max_partition_defect = 0.0;
};
ThetaFamily build_theta_family(const Covering& cov, const BumpSystem& bumps, int m);

}  // namespace fibm
