#include <doctest.h>

#include <cmath>
#include <random>

#include "core/oracle.hpp"
#include "core/spectral.hpp"

using namespace fibm;

namespace {

Matrix diag2(double a, double b) {
  Matrix m = Matrix::Zero(2, 2);
  m(0, 0) = a;
  m(1, 1) = b;
  return m;
}

// random rank-r orthogonal projector in dimension n
Matrix random_projector(std::mt19937& rng, int n, int r) {
  std::normal_distribution<double> gauss;
  Matrix a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = std::complex<double>(gauss(rng), gauss(rng));
  Eigen::HouseholderQR<Matrix> qr(a);
  Matrix q = qr.householderQ();
  Matrix p = Matrix::Zero(n, n);
  for (int c = 0; c < r; ++c) p += q.col(c) * q.col(c).adjoint();
  return p;
}

}  // namespace

TEST_CASE("eigen decomposition and clustering") {
  auto d = eigen_decompose(diag2(1.0, -1.0), 1e-6);
  REQUIRE(d.clusters.size() == 2);
  CHECK(d.eigenvalues[0] == doctest::Approx(-1.0));
  CHECK(d.eigenvalues[1] == doctest::Approx(1.0));
  CHECK(d.clusters[0].count == 1);

  auto scalar = eigen_decompose(0.3 * Matrix::Identity(2, 2), 1e-6);
  REQUIRE(scalar.clusters.size() == 1);
  CHECK(scalar.clusters[0].count == 2);
  CHECK(scalar.clusters[0].mean == doctest::Approx(0.3));
  CHECK(spectral_norm(scalar.projectors[0] - Matrix::Identity(2, 2)) < 1e-14);

  // second model at (0.5, 1): eigenvalues 1 +- 0.5 sqrt(2)
  ClosedFormModel cf(2);
  auto d2 = eigen_decompose(cf.hamiltonian({0.5, 1.0, 0.0}), 1e-8);
  CHECK(d2.eigenvalues[0] == doctest::Approx(1.0 - 0.5 * std::sqrt(2.0)));
  CHECK(d2.eigenvalues[1] == doctest::Approx(1.0 + 0.5 * std::sqrt(2.0)));

  Matrix nh(2, 2);
  nh << 0.0, 1.0, 0.0, 0.0;
  CHECK_THROWS_AS(eigen_decompose(nh), Error);
}

TEST_CASE("resolution of identity") {
  std::mt19937 rng(7);
  std::normal_distribution<double> gauss;
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 5);
    Matrix a(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) a(i, j) = std::complex<double>(gauss(rng), gauss(rng));
    Matrix h = 0.5 * (a + a.adjoint().eval());
    auto d = eigen_decompose(h, 1e-8);
    Matrix sum = Matrix::Zero(n, n);
    for (const auto& p : d.projectors) {
      CHECK(spectral_norm((p * p - p).eval()) < 1e-12);
      sum += p;
    }
    CHECK(spectral_norm(sum - Matrix::Identity(n, n)) < 1e-12);
  }
}

TEST_CASE("interval projector") {
  ClosedFormModel cf(2);
  auto d = eigen_decompose(cf.hamiltonian({1.0, 0.0, 0.0}), 1e-8);
  // J = (0.5, 1.5) picks the +1 eigenvalue at k = (1, 0)
  Matrix p = interval_projector(d, {0.5, 1.5});
  CHECK(spectral_norm(p - diag2(1.0, 0.0)) < 1e-13);

  CHECK(spectral_norm(interval_projector(d, {5.0, 6.0})) < 1e-14);
  CHECK(spectral_norm(interval_projector(d, {-2.0, 2.0}) - Matrix::Identity(2, 2)) < 1e-13);

  CHECK_THROWS_AS(interval_projector(d, {1.0 - 5e-10, 2.0}), Error);
}

TEST_CASE("contour quadrature agrees with the spectral projector") {
  ClosedFormModel cf(2);
  for (double k1 : {0.3, 0.8}) {
    const Matrix h = cf.hamiltonian({k1, -0.2, 0.0});
    auto d = eigen_decompose(h, 1e-8);
    const double lam = d.eigenvalues[1];
    const Interval J{lam - 0.3 * k1, lam + 0.3 * k1};
    const Matrix via_contour = contour_projector(h, J);
    const Matrix via_eigen = interval_projector(d, J);
    CHECK(spectral_norm(via_contour - via_eigen) < 1e-10);
  }
}

TEST_CASE("nagy unitary") {
  // equal projectors give the identity
  Matrix p = diag2(1.0, 0.0);
  CHECK(spectral_norm(nagy_unitary(p, p) - Matrix::Identity(2, 2)) < 1e-14);

  // rotated rank-1 projector: the intertwiner is the plane rotation
  const double t = 0.2;
  Matrix rot(2, 2);
  rot << std::cos(t), -std::sin(t), std::sin(t), std::cos(t);
  Matrix p2 = rot * p * rot.adjoint();
  Matrix w = nagy_unitary(p, p2);
  CHECK(spectral_norm(w - rot) < 1e-12);
  CHECK(spectral_norm((w * w.adjoint()).eval() - Matrix::Identity(2, 2)) < 1e-12);
  CHECK(spectral_norm((w * p * w.adjoint()).eval() - p2) < 1e-12);

  // orthogonal projectors are out of reach
  CHECK_THROWS_AS(nagy_unitary(diag2(1.0, 0.0), diag2(0.0, 1.0)), Error);
}

TEST_CASE("nagy conjugation on random pairs") {
  std::mt19937 rng(42);
  std::normal_distribution<double> gauss;
  int done = 0;
  while (done < 200) {
    const int n = 2 + static_cast<int>(rng() % 7);
    const int r = 1 + static_cast<int>(rng() % static_cast<unsigned>(n));
    Matrix p1 = random_projector(rng, n, r);
    // nearby projector: perturb and re-project spectrally
    Matrix s(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) s(i, j) = std::complex<double>(gauss(rng), gauss(rng));
    s = 0.5 * (s + s.adjoint().eval());
    auto d = eigen_decompose(p1 + 0.15 * s, 1e-12);
    Matrix p2 = Matrix::Zero(n, n);
    for (size_t c = 0; c < d.clusters.size(); ++c)
      if (d.clusters[c].mean > 0.5) p2 += d.projectors[c];
    if (std::lround(p2.trace().real()) != r) continue;
    if (spectral_norm(p2 - p1) > 0.9) continue;
    Matrix w = nagy_unitary(p1, p2);
    CHECK(spectral_norm((w * w.adjoint()).eval() - Matrix::Identity(n, n)) < 1e-11);
    CHECK(spectral_norm((w * p1 * w.adjoint()).eval() - p2) < 1e-11);
    ++done;
  }
}

TEST_CASE("local frames and reduced hamiltonians") {
  ClosedFormModel cf(2);
  auto grid = build_grid(DomainSpec::box({{{0.7, 1.3}}, {{-0.3, 0.3}}}), 9);
  MatrixField h = sample_matrix_function(grid, 2, [&](const Coord& k) { return cf.hamiltonian(k); });

  // constant projector field gives the constant frame
  {
    std::vector<std::int64_t> nodes{0, 1, 2};
    std::vector<Matrix> projs(3, diag2(1.0, 0.0));
    FrameField fr = local_frame(nodes, projs, 0);
    CHECK(fr.rank == 1);
    for (const auto& w : fr.isometries)
      CHECK(spectral_norm(w - fr.isometries[0]) < 1e-14);
  }

  // branch projector field on a ball away from the crossing
  std::vector<std::int64_t> nodes;
  std::vector<Matrix> projs;
  for (std::int64_t node = 0; node < grid->num_nodes(); ++node) {
    nodes.push_back(node);
    projs.push_back(cf.projector(+1, grid->coord(node)));
  }
  std::int64_t anchor = grid->ravel({4, 4, 0});
  FrameField fr = local_frame(nodes, projs, anchor);
  for (size_t i = 0; i < nodes.size(); ++i) {
    const Matrix& w = fr.isometries[i];
    CHECK(spectral_norm((w.adjoint() * w).eval() - Matrix::Identity(1, 1)) < 1e-12);
    // W conjugates the anchor projector into the local one
    CHECK(spectral_norm((w * w.adjoint()).eval() - projs[i]) < 1e-10);
  }

  ReducedHamiltonian red = reduce_hamiltonian(h, fr);
  for (size_t i = 0; i < red.nodes.size(); ++i) {
    const double expected = cf.lambda(+1, grid->coord(red.nodes[i]));
    CHECK(std::abs(red.values[i](0, 0).real() - expected) < 1e-10);
    CHECK(red.values[i].rows() == 1);
  }

  // multiplicity-2 window at the crossing: identity frame, reduced = full
  {
    std::vector<std::int64_t> mnodes{0, 1};
    std::vector<Matrix> mprojs(2, Matrix::Identity(2, 2));
    FrameField mf = local_frame(mnodes, mprojs, 0);
    CHECK(mf.rank == 2);
    ReducedHamiltonian mred = reduce_hamiltonian(h, mf);
    // spectrum of the reduced block equals the full spectrum
    auto d_full = eigen_decompose(h.at(1), 1e-10);
    auto d_red = eigen_decompose(mred.values[1], 1e-10);
    for (size_t e = 0; e < d_full.eigenvalues.size(); ++e)
      CHECK(d_red.eigenvalues[e] == doctest::Approx(d_full.eigenvalues[e]));
  }

  // frame failure reports the offending node
  {
    std::vector<std::int64_t> bad_nodes{0, 1};
    std::vector<Matrix> bad{diag2(1.0, 0.0), diag2(0.0, 1.0)};
    CHECK_THROWS_AS(local_frame(bad_nodes, bad, 0), Error);
  }
}

TEST_CASE("projector fields move at first order in h") {
  ClosedFormModel cf(2);
  auto jump_at = [&](int n) {
    auto grid = build_grid(DomainSpec::box({{{0.6, 1.4}}, {{-0.4, 0.4}}}), n);
    double worst = 0.0;
    for (std::int64_t node = 0; node < grid->num_nodes(); ++node) {
      const auto nb = grid->neighbor(node, 1, +1);
      if (!nb) continue;
      worst = std::max(worst, spectral_norm(cf.projector(+1, grid->coord(node)) -
                                            cf.projector(+1, grid->coord(*nb))));
    }
    return worst;
  };
  const double j1 = jump_at(17), j2 = jump_at(33);
  const double ratio = j1 / j2;
  CHECK(ratio > 1.8);
  CHECK(ratio < 2.2);
}
