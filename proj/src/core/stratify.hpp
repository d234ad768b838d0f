#pragma once

#include <string>
#include <vector>

#include "core/fields.hpp"
#include "core/spectral.hpp"

namespace fibm {

// One sampled point of the characteristic variety: an eigenvalue cluster
// of H0(k) at a grid node with its mean energy and multiplicity.
struct SigmaTriple {
  std::int64_t node = 0;
  double lambda = 0.0;
  int multiplicity = 1;
  int cluster_index = 0;  // index within the node's decomposition
};

struct SigmaSample {
  GridPtr grid;
  Interval window;     // the wide working interval
  double cluster_tol = kDefaultClusterTol;
  std::vector<SigmaTriple> triples;
};

struct Stratum {
  int id = 0;
  std::vector<int> members;  // indices into SigmaSample::triples
  int multiplicity = 1;
  int estimated_dim = 0;
  bool rank_zero = false;  // energy projection critical along the stratum
};

struct ThresholdSet {
  std::vector<double> values;
  std::vector<int> stratum_ids;
  std::vector<Coord> points;
};

// Lipschitz bound for eigenvalue motion per unit k, from the exact
// derivative families sampled over the grid.
double estimate_eigenvalue_lipschitz(const MatrixPolynomialFamily& fam, const Grid& grid);

SigmaSample sample_sigma(const MatrixPolynomialFamily& fam, GridPtr grid, const Interval& window,
                         double cluster_tol);

// Connected components of the sample under grid adjacency, merging triples
// with equal multiplicity whose energies differ by less than lip * h.
std::vector<Stratum> extract_strata(const SigmaSample& sample, double lip);

// Flags sample points where the energy projection is critical: full
// Hellmann-Feynman gradient on multiplicity-1 strata, tangential gradient
// of the cluster mean along locally fitted directions otherwise.
ThresholdSet detect_thresholds(const MatrixPolynomialFamily& fam, const SigmaSample& sample,
                               const std::vector<Stratum>& strata, double grad_tol, double lip);

void write_strata_csv(const std::string& path, const SigmaSample& sample,
                      const std::vector<Stratum>& strata);

}  // namespace fibm
