// Operator algebra, model builders, integrator and time evolution.

#include <gtest/gtest.h>

#include <numbers>

#include "oracles.hpp"
#include "shortmeas/shortmeas.hpp"

using namespace shortmeas;
using oracle::kron;

namespace {

constexpr double kPi = std::numbers::pi;

struct QuietWarnings : ::testing::Test {
  std::vector<std::string> warnings;
  ScopedWarningHandler guard{[this](std::string_view m) { warnings.emplace_back(m); }};
};

QState random_mixed(const SpaceLayout& layout, std::mt19937_64& rng, int rank = 0) {
  return QState::mixed(layout, oracle::random_density(layout.total_dim(), rng, rank));
}

}  // namespace

// ---------------------------------------------------------------------------
// hilbert

TEST(Annihilation, LowersFockStates) {
  const auto a = annihilation(5);
  const Vector out = a.matrix() * fock_state(1, 5).vector();
  EXPECT_LT((out - fock_state(0, 5).vector()).norm(), 1e-15);
  const auto n = a.adjoint() * a;
  const Vector three = fock_state(3, 5).vector();
  EXPECT_LT((n.matrix() * three - 3.0 * three).norm(), 1e-14);
  EXPECT_LT(oracle::max_abs(a.matrix() - oracle::lowering(5)), 1e-15);
}

TEST(Annihilation, CanonicalCommutatorBelowTruncationEdge) {
  const auto a = annihilation(40);
  const Matrix c = commutator(a, a.adjoint()).matrix();
  for (int n = 0; n <= 38; ++n) EXPECT_NEAR(c(n, n).real(), 1.0, 1e-12) << "n = " << n;
}

TEST(Annihilation, RejectsTinyCutoff) {
  EXPECT_THROW(annihilation(1), InvalidArgument);
  EXPECT_THROW(thermal_state(1.0, 1), InvalidArgument);
}

TEST(QubitOperators, PauliAlgebra) {
  const auto q = qubit_operators(Slot::probe);
  const Vector g = qubit_state(1.0, 0.0, Slot::probe).vector();
  const Vector e = qubit_state(0.0, 1.0, Slot::probe).vector();
  EXPECT_LT((q.raise.matrix() * g - e).norm(), 1e-15);
  const QState plus = QState::normalized(SpaceLayout::single(Slot::probe, 2), Vector::Ones(2));
  EXPECT_NEAR(std::abs(expectation(plus, q.z)), 0.0, 1e-15);
  EXPECT_LT(oracle::max_abs(commutator(q.raise, q.lower).matrix() - q.z.matrix()), 1e-15);
  EXPECT_LT(oracle::max_abs((q.raise * q.lower).matrix() - q.excited.matrix()), 1e-15);
  EXPECT_LT(oracle::max_abs(q.z.matrix() - (q.excited - q.ground).matrix()), 1e-15);
  EXPECT_LT(oracle::max_abs(q.raise.matrix() - oracle::sigma_plus()), 1e-15);
}

TEST(Embed, IdentityAndDisjointSlotsCommute) {
  const auto layout = SpaceLayout::tripartite(6);
  const auto id = embed(Operator::identity(SpaceLayout::single(Slot::mediator, 6)), Slot::mediator, layout);
  EXPECT_LT(oracle::max_abs(id.matrix() - Matrix::Identity(24, 24)), 1e-15);
  const auto zp = embed(qubit_operators(Slot::probe).z, Slot::probe, layout);
  const auto n = embed(number_operator(6), Slot::mediator, layout);
  EXPECT_LT(oracle::max_abs(commutator(zp, n).matrix()), 1e-15);
}

TEST(Embed, IndexConventionProbeMediatorSystem) {
  const int cutoff = 6;
  const auto layout = SpaceLayout::tripartite(cutoff);
  const auto zp = embed(qubit_operators(Slot::probe).z, Slot::probe, layout);
  // |e, n = 0, 1>: probe index 1, mediator 0, system index 0
  const int idx = ((1 * cutoff) + 0) * 2 + 0;
  EXPECT_NEAR(zp.matrix()(idx, idx).real(), 1.0, 1e-15);
  const Matrix ref = kron(kron(oracle::sigma_z(), Matrix::Identity(cutoff, cutoff)), Matrix::Identity(2, 2));
  EXPECT_LT(oracle::max_abs(zp.matrix() - ref), 1e-15);
  const auto a = embed(annihilation(cutoff), Slot::mediator, layout);
  EXPECT_LT(oracle::max_abs(a.matrix() - kron(kron(Matrix::Identity(2, 2), oracle::lowering(cutoff)),
                                              Matrix::Identity(2, 2))),
            1e-15);
}

TEST(Embed, RejectsDimensionMismatch) {
  EXPECT_THROW(embed(annihilation(5), Slot::mediator, SpaceLayout::tripartite(6)), InvalidArgument);
  EXPECT_THROW(embed(annihilation(5), Slot::mediator, SpaceLayout::qubit_pair()), InvalidArgument);
}

TEST(Embed, IsAHomomorphism) {
  std::mt19937_64 rng(7);
  const auto layout = SpaceLayout::tripartite(4);
  for (Slot s : {Slot::probe, Slot::mediator, Slot::system}) {
    const int d = layout.dim(s);
    const Operator a(SpaceLayout::single(s, d), oracle::random_hermitian(d, rng));
    const Operator b(SpaceLayout::single(s, d), oracle::random_hermitian(d, rng) * cplx(0.3, 1.1));
    const Matrix lhs = embed(a * b, s, layout).matrix();
    const Matrix rhs = (embed(a, s, layout) * embed(b, s, layout)).matrix();
    EXPECT_LT(oracle::max_abs(lhs - rhs), 1e-12);
  }
}

TEST(Operator, DoubleAdjointIsIdentityMap) {
  const auto h = tripartite_hamiltonian(ModelParams{});
  const auto a = embed(annihilation(30), Slot::mediator, h.layout());
  for (const Operator& op : {h, a, a * h, quadrature(30, 0.4)})
    EXPECT_EQ(op.adjoint().adjoint().matrix(), op.matrix());
}

TEST(ThermalState, ZeroTemperatureIsVacuum) {
  const auto rho = thermal_state(0.0, 10).density();
  Matrix ref = Matrix::Zero(10, 10);
  ref(0, 0) = 1.0;
  EXPECT_LT(oracle::max_abs(rho - ref), 1e-15);
}

TEST(ThermalState, MeanOccupationAndRatio) {
  const auto s = thermal_state(1.0, 40);
  EXPECT_NEAR(expectation(s, number_operator(40)).real(), 1.0, 1e-6);
  const Matrix rho = s.density();
  EXPECT_NEAR(rho(1, 1).real() / rho(0, 0).real(), 0.5, 1e-9);
  const auto ref = oracle::thermal_weights(1.0, 40);
  for (int n = 0; n < 40; ++n) EXPECT_NEAR(rho(n, n).real(), ref[n], 1e-15);
}

TEST(ThermalState, TraceExactlyOneAndNonnegative) {
  for (double nbar : {0.0, 0.3, 1.0, 2.5}) {
    const int cutoff = minimum_thermal_cutoff(nbar) + 3;
    const Matrix rho = thermal_state(nbar, cutoff).density();
    EXPECT_NEAR(rho.trace().real(), 1.0, 1e-15);
    EXPECT_GE(rho.diagonal().real().minCoeff(), 0.0);
  }
}

TEST(ThermalState, RejectsHeavyTail) {
  EXPECT_THROW(thermal_state(1.0, 10), CutoffTooSmall);
  EXPECT_NO_THROW(thermal_state(1.0, minimum_thermal_cutoff(1.0)));
  EXPECT_THROW(thermal_state(1.0, minimum_thermal_cutoff(1.0) - 1), CutoffTooSmall);
}

TEST(Expectation, BasicValues) {
  const auto e = qubit_state(0.0, 1.0, Slot::probe);
  EXPECT_NEAR(expectation(e, qubit_operators(Slot::probe).excited).real(), 1.0, 1e-15);
  const auto th = thermal_state(1.0, 40);
  for (double phi : {0.0, 0.3, kPi / 2, 2.0, kPi}) EXPECT_NEAR(std::abs(expectation(th, quadrature(40, phi))), 0.0, 1e-15);
  const auto plus = qubit_state(std::sqrt(0.5), std::sqrt(0.5), Slot::probe);
  const cplx sp = expectation(plus, qubit_operators(Slot::probe).raise);
  EXPECT_NEAR(sp.real(), 0.5, 1e-15);
  EXPECT_NEAR(sp.imag(), 0.0, 1e-15);
}

TEST(Expectation, RejectsLayoutMismatch) {
  EXPECT_THROW(expectation(thermal_state(0.0, 5), number_operator(6)), InvalidArgument);
  EXPECT_THROW(expectation(qubit_state(1.0, 0.0, Slot::system), qubit_operators(Slot::probe).z), InvalidArgument);
}

TEST(Expectation, IdentityIsOneOnRandomStates) {
  std::mt19937_64 rng(11);
  const auto layout = SpaceLayout::tripartite(5);
  for (int k = 0; k < 20; ++k) {
    const auto rho = random_mixed(layout, rng, 1 + k % 7);
    const cplx v = expectation(rho, Operator::identity(layout));
    EXPECT_NEAR(v.real(), 1.0, 1e-12);
    EXPECT_NEAR(v.imag(), 0.0, 1e-12);
  }
}

TEST(Quadrature, HermitianAndZeroOnDiagonalStates) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 20; ++k) {
    const double phi = 2 * kPi * u(rng);
    const auto x = quadrature(12, phi);
    EXPECT_TRUE(x.is_hermitian());
    Matrix rho = Matrix::Zero(12, 12);
    double sum = 0.0;
    for (int n = 0; n < 12; ++n) sum += (rho(n, n) = u(rng)).real();
    rho /= sum;
    EXPECT_NEAR(std::abs(expectation(QState::mixed(x.layout(), rho), x)), 0.0, 1e-15);
  }
}

TEST(PartialTrace, ProductStateFactorizes) {
  std::mt19937_64 rng(5);
  const Matrix rp = oracle::random_density(2, rng), ra = oracle::random_density(4, rng), rs = oracle::random_density(2, rng);
  const auto state = QState::mixed(SpaceLayout::tripartite(4), kron(kron(rp, ra), rs));
  EXPECT_LT(oracle::max_abs(partial_trace(state, {Slot::system}).density() - rs), 1e-14);
  EXPECT_LT(oracle::max_abs(partial_trace(state, {Slot::probe}).density() - rp), 1e-14);
  EXPECT_LT(oracle::max_abs(partial_trace(state, {Slot::mediator}).density() - ra), 1e-14);
  EXPECT_LT(oracle::max_abs(partial_trace(state, {Slot::probe, Slot::system}).density() - kron(rp, rs)), 1e-14);
}

TEST(PartialTrace, PreservesTraceOfRandomStates) {
  std::mt19937_64 rng(9);
  const auto layout = SpaceLayout::tripartite(3);
  for (int k = 0; k < 10; ++k) {
    const auto rho = random_mixed(layout, rng);
    const std::vector<std::vector<Slot>> keeps{{Slot::probe}, {Slot::mediator}, {Slot::mediator, Slot::system}};
    for (const auto& keep : keeps) EXPECT_NEAR(partial_trace(rho, keep).density().trace().real(), 1.0, 1e-10);
  }
}

TEST(PartialTrace, BellStateReducesToMaximallyMixed) {
  Vector psi = Vector::Zero(4);
  psi(1) = psi(2) = std::sqrt(0.5);  // (|g e> + |e g>)/sqrt(2)
  const auto bell = QState::pure(SpaceLayout::qubit_pair(), psi);
  EXPECT_LT(oracle::max_abs(partial_trace(bell, {Slot::probe}).density() - 0.5 * Matrix::Identity(2, 2)), 1e-15);
}

TEST(PartialTrace, RejectsEmptyKeep) {
  EXPECT_THROW(partial_trace(thermal_state(0.0, 3), std::span<const Slot>{}), InvalidArgument);
}

TEST(QStateInvariants, RejectsInvalidStates) {
  EXPECT_THROW(QState::pure(SpaceLayout::single(Slot::probe, 2), Vector::Ones(2)), InvalidArgument);
  Matrix m = Matrix::Identity(2, 2);
  EXPECT_THROW(QState::mixed(SpaceLayout::single(Slot::probe, 2), m), InvalidArgument);  // trace 2
  m *= 0.5;
  m(0, 1) = 0.2;
  EXPECT_THROW(QState::mixed(SpaceLayout::single(Slot::probe, 2), m), InvalidArgument);  // not Hermitian
  Matrix neg = Matrix::Zero(2, 2);
  neg(0, 0) = 1.2;
  neg(1, 1) = -0.2;
  EXPECT_THROW(QState::mixed(SpaceLayout::single(Slot::probe, 2), neg), InvalidArgument);
}

TEST(Tensor, MatchesKroneckerOrder) {
  const auto s = tensor({qubit_state(0.6, 0.8, Slot::probe), fock_state(2, 4), qubit_state(kI * 0.8, 0.6, Slot::system)});
  Vector qp(2), qs(2);
  qp << 0.6, 0.8;
  qs << kI * 0.8, 0.6;
  const Vector ref = kron(kron(qp, oracle::basis(4, 2)), qs);
  EXPECT_EQ(s.layout(), SpaceLayout::tripartite(4));
  EXPECT_LT((s.vector() - ref).norm(), 1e-15);
}

// ---------------------------------------------------------------------------
// models

TEST(Tripartite, MatchesKroneckerReference) {
  ModelParams p;
  p.omega_p = 10.0;
  p.omega_s = 9.0;
  p.omega_a = 8.5;
  p.g_s = 0.7;
  p.cutoff = 6;
  const Matrix ref = oracle::tripartite(10.0, 8.5, 9.0, 1.0, 0.7, 6);
  EXPECT_LT(oracle::max_abs(tripartite_hamiltonian(p).matrix() - ref), 1e-13);
}

TEST(Tripartite, HermitianAndConservesExcitations) {
  ModelParams p;
  p.cutoff = 12;
  p.set_detuning(3.0);
  const auto h = tripartite_hamiltonian(p);
  EXPECT_LT(oracle::max_abs(h.matrix() - h.matrix().adjoint()), 1e-12);
  EXPECT_LT(oracle::max_abs(commutator(h, excitation_number(12)).matrix()), 1e-12);
}

TEST(Tripartite, VacuumRabiOscillation) {
  ModelParams p;
  p.g_s = 0.0;
  p.cutoff = 4;
  const auto rho0 = tensor({qubit_state(0.0, 1.0, Slot::probe), fock_state(0, 4), qubit_state(0.6, 0.8, Slot::system)});
  const auto grid = uniform_grid(3.0, 61, TimeUnit::resonant(1.0));
  const std::array<Operator, 1> obs{probe_excited_projector(rho0.layout())};
  EvolutionOptions o;
  o.integrator.tolerance = 1e-12;
  const auto rec =
      evolve_recording(Hamiltonian(tripartite_hamiltonian(p)), nullptr, rho0, grid, obs, TimeUnit::resonant(1.0), o);
  const auto& s = rec.series[0];
  for (std::size_t i = 0; i < s.size(); ++i) EXPECT_NEAR(s.values[i], std::pow(std::cos(s.times[i]), 2), 1e-8);
}

TEST_F(QuietWarnings, DispersiveHamiltonianStructure) {
  ModelParams p;
  p.set_detuning(30.0);
  p.cutoff = 6;
  const auto h = dispersive_hamiltonian(p);
  EXPECT_LT(oracle::max_abs(h.matrix() - h.matrix().adjoint()), 1e-12);
  EXPECT_LT(oracle::max_abs(commutator(h, embed(number_operator(6), Slot::mediator, h.layout())).matrix()), 1e-15);
  // |e, 1, 1>: (sz_p + sz_s) n = (1 - 1) * 1, exchange diagonal = 1 (probe excited)
  const int e11 = ((1 * 6) + 1) * 2 + 0;
  EXPECT_NEAR(h.matrix()(e11, e11).real(), 1.0 / 30.0, 1e-15);
  // |e, 1, 2>: (1 + 1) * 1 + 2
  const int e12 = ((1 * 6) + 1) * 2 + 1;
  EXPECT_NEAR(h.matrix()(e12, e12).real(), 4.0 / 30.0, 1e-15);
  EXPECT_TRUE(warnings.empty());
}

TEST_F(QuietWarnings, DispersiveHamiltonianRequiresIdenticalQubits) {
  ModelParams p;
  p.set_detuning(30.0);
  p.cutoff = 4;
  p.g_s = 0.9;
  EXPECT_THROW(dispersive_hamiltonian(p), InvalidArgument);
  p.g_s = 1.0;
  p.omega_s = 99.0;
  EXPECT_THROW(dispersive_hamiltonian(p), InvalidArgument);
  p.omega_s = 100.0;
  p.set_detuning(5.0);
  p.mediator_nbar = 1.0;
  dispersive_hamiltonian(p);
  ASSERT_EQ(warnings.size(), 1u);
  EXPECT_NE(warnings[0].find("dispersive"), std::string::npos);
}

TEST_F(QuietWarnings, DispersiveGapMatchesTripartiteAtSecondOrder) {
  // one-excitation manifold with the mediator empty: bright/dark splitting 2 g^2 / delta
  ModelParams p;
  p.set_detuning(30.0);
  p.cutoff = 4;
  const Eigen::VectorXd full = Eigen::SelfAdjointEigenSolver<Matrix>(tripartite_hamiltonian(p).matrix()).eigenvalues();
  const Eigen::VectorXd eff = Eigen::SelfAdjointEigenSolver<Matrix>(dispersive_hamiltonian(p).matrix()).eigenvalues();
  // qubit-like one-excitation levels of H sit near 0 (|e,0,1> and |g,0,2>); the photon-like one near -30
  std::vector<double> near_zero;
  for (double e : full)
    if (std::abs(e) < 1.0) near_zero.push_back(e);
  ASSERT_EQ(near_zero.size(), 2u);
  const double gap_full = std::abs(near_zero[1] - near_zero[0]);
  const double gap_eff = 2.0 / 30.0;
  // dispersive levels in the same manifold: {0, 2 g^2/delta}
  int found = 0;
  for (double e : eff) found += std::abs(e - gap_eff) < 1e-12;
  EXPECT_GE(found, 1);
  const double g_over_delta = 1.0 / 30.0;
  EXPECT_LT(std::abs(gap_full - gap_eff), 5.0 * std::pow(g_over_delta, 3));
}

TEST(ThermalBath, ZeroRateIsZeroMap) {
  ModelParams p;
  p.cutoff = 5;
  p.bath_nbar = 2.0;
  std::mt19937_64 rng(1);
  const auto gen = thermal_bath_generator(p);
  EXPECT_LT(oracle::max_abs(gen.apply(oracle::random_density(20, rng))), 1e-15);
}

TEST(ThermalBath, JumpOperatorsAndRates) {
  ModelParams p;
  p.cutoff = 5;
  p.bath_rate = 0.2;
  p.bath_nbar = 1.5;
  const auto gen = thermal_bath_generator(p);
  ASSERT_EQ(gen.jumps().size(), 2u);
  const Matrix a = embed(annihilation(5), Slot::mediator, gen.layout()).matrix();
  EXPECT_LT(oracle::max_abs(gen.jumps()[0].op.matrix() - a.adjoint()), 1e-15);
  EXPECT_NEAR(gen.jumps()[0].rate, 0.3, 1e-15);
  EXPECT_LT(oracle::max_abs(gen.jumps()[1].op.matrix() - a), 1e-15);
  EXPECT_NEAR(gen.jumps()[1].rate, 0.5, 1e-15);
}

TEST(ThermalBath, DetailedBalanceFixedPoint) {
  ModelParams p;
  p.bath_rate = 0.3;
  p.bath_nbar = p.mediator_nbar = 1.2;
  const int cutoff = minimum_thermal_cutoff(1.2, 1e-15);
  const auto layout = SpaceLayout::single(Slot::mediator, cutoff);
  const auto gen = thermal_bath_generator(p, layout);
  const Matrix drho = gen.apply(thermal_state(1.2, cutoff).density());
  EXPECT_LT(oracle::max_abs(drho), 1e-12);
}

TEST(ThermalBath, DampingRateOfMeanOccupation) {
  ModelParams p;
  p.bath_rate = 0.1;
  p.bath_nbar = 0.0;
  const int cutoff = minimum_thermal_cutoff(2.0) + 5;
  const auto layout = SpaceLayout::single(Slot::mediator, cutoff);
  const auto gen = thermal_bath_generator(p, layout);
  const auto rho0 = thermal_state(2.0, cutoff);
  const Operator n = number_operator(cutoff);
  const double rate = (gen.apply(rho0.density()) * n.matrix()).trace().real();
  EXPECT_NEAR(rate, -0.2, 1e-6);
  // the same rate from the integrator, by a central difference around a short step
  const double h = 1e-3;
  const std::vector<double> grid{0.0, h, 2 * h};
  const std::array<Operator, 1> obs{n};
  const auto s = evolve_recording(Hamiltonian::zero(layout), &gen, rho0, grid, obs, TimeUnit::lab()).series[0];
  EXPECT_NEAR((-3 * s.values[0] + 4 * s.values[1] - s.values[2]) / (2 * h), -0.2, 1e-5);
}

TEST(CollectiveDecay, DarkAndSuperradiantStates) {
  ModelParams p;
  p.collective_rate = 0.7;
  const auto model = collective_decay_generator(p);
  const auto& gen = model.generator;
  ASSERT_EQ(gen.jumps().size(), 1u);
  EXPECT_NEAR(gen.jumps()[0].rate, 0.7, 1e-15);
  const Vector gg = oracle::basis(4, 0);
  EXPECT_LT(oracle::max_abs(gen.apply(gg * gg.adjoint())), 1e-15);
  Vector singlet = Vector::Zero(4);
  singlet(1) = std::sqrt(0.5);   // |g e>
  singlet(2) = -std::sqrt(0.5);  // |e g>
  EXPECT_LT(oracle::max_abs(gen.apply(singlet * singlet.adjoint())), 1e-15);
  const Vector ee = oracle::basis(4, 3);
  const Matrix pee = ee * ee.adjoint();
  EXPECT_NEAR((gen.apply(pee) * pee).trace().real(), -2.0 * 0.7, 1e-14);
  // free Hamiltonian (w/2)(sz_s + sz_p)
  const Matrix h0 = 50.0 * (kron(oracle::sigma_z(), Matrix::Identity(2, 2)) + kron(Matrix::Identity(2, 2), oracle::sigma_z()));
  EXPECT_LT(oracle::max_abs(model.free_hamiltonian.matrix() - h0), 1e-13);
}

TEST(LindbladGenerators, PreserveTraceAndHermiticity) {
  std::mt19937_64 rng(21);
  ModelParams p;
  p.cutoff = 5;
  p.bath_rate = 0.2;
  p.bath_nbar = 3.0;
  p.collective_rate = 0.4;
  const auto bath = thermal_bath_generator(p);
  const auto collective = collective_decay_generator(p).generator;
  for (int k = 0; k < 100; ++k) {
    for (const LindbladGenerator* gen : {&bath, &collective}) {
      const int d = gen->layout().total_dim();
      const Matrix out = gen->apply(oracle::random_density(d, rng, 1 + k % d));
      EXPECT_NEAR(std::abs(out.trace()), 0.0, 1e-10);
      EXPECT_LT(oracle::max_abs(out - out.adjoint()), 1e-10);
    }
  }
}

TEST(LindbladGenerators, AdjointIsDualOfApply) {
  std::mt19937_64 rng(4);
  ModelParams p;
  p.cutoff = 4;
  p.bath_rate = 0.3;
  p.bath_nbar = 0.7;
  const auto gen = thermal_bath_generator(p);
  for (int k = 0; k < 10; ++k) {
    const Matrix rho = oracle::random_density(16, rng);
    const Matrix x = oracle::random_hermitian(16, rng);
    EXPECT_NEAR(std::abs((gen.apply(rho) * x).trace() - (rho * gen.apply_adjoint(x)).trace()), 0.0, 1e-12);
  }
}

TEST(IonLaser, HermitianAndCarrierLimit) {
  IonParams ip;
  ip.cutoff = 8;
  ip.laser_phase = 0.3;
  const IonLaserHamiltonian h(ip);
  const Matrix m = h.matrix_at(0.37 / ip.trap_frequency);
  EXPECT_LT(oracle::max_abs(m - m.adjoint()), 1e-12);

  ip.lamb_dicke = 1e-12;
  const double t = 1.7;
  const Matrix carrier_local = [&] {
    Matrix c = Matrix::Zero(2, 2);
    c(1, 0) = 0.5 * ip.rabi * std::polar(1.0, ip.laser_phase - ip.laser_detuning * t);
    return Matrix(c + c.adjoint());
  }();
  const Matrix ref = kron(carrier_local, Matrix::Identity(8, 8));
  EXPECT_LT(oracle::max_abs(IonLaserHamiltonian(ip).matrix_at(t) - ref), 1e-12);
}

TEST(IonLaser, DisplacementIsUnitaryAndMatchesSeries) {
  IonParams ip;
  ip.cutoff = 12;
  ip.lamb_dicke = 0.05;
  const IonLaserHamiltonian h(ip);
  const Matrix d = h.displacement(0.8);
  EXPECT_LT(oracle::max_abs(d * d.adjoint() - Matrix::Identity(12, 12)), 1e-12);
  // exp(i eta X) to second order, checked on low Fock levels away from the truncation edge
  const Matrix a = oracle::lowering(12);
  const Matrix x = a * std::polar(1.0, -0.8) + a.adjoint() * std::polar(1.0, 0.8);
  const double eta = 0.05;
  const Matrix series = Matrix::Identity(12, 12) + kI * eta * x - 0.5 * eta * eta * x * x -
                        kI * (eta * eta * eta / 6.0) * x * x * x;
  EXPECT_LT(oracle::max_abs(d.topLeftCorner(4, 4) - series.topLeftCorner(4, 4)), 5e-5);
}

TEST(RedSideband, HermitianConservingAndEquivalentToJaynesCummings) {
  IonParams ip;
  ip.cutoff = 8;
  const auto h = red_sideband_hamiltonian(ip);
  EXPECT_LT(oracle::max_abs(h.matrix() - h.matrix().adjoint()), 1e-12);
  const auto layout = h.layout();
  const auto conserved = embed(qubit_operators(Slot::probe).excited, Slot::probe, layout) +
                         embed(number_operator(8), Slot::mediator, layout);
  EXPECT_LT(oracle::max_abs(commutator(h, conserved).matrix()), 1e-15);
  // V^dag H V = g (s+ a + s- a^dag) with g = eta Omega / 2
  const Matrix v = red_sideband_frame_rotation(8).matrix();
  const Matrix jc = kron(oracle::sigma_plus(), oracle::lowering(8));
  const double g = 0.5 * ip.lamb_dicke * ip.rabi;
  EXPECT_LT(oracle::max_abs(v.adjoint() * h.matrix() * v - g * (jc + jc.adjoint())), 1e-15);
}

TEST(RedSideband, VacuumRabiFromExcitedIon) {
  IonParams ip;
  ip.cutoff = 4;
  ip.rabi = 0.2;
  const double g = 0.5 * ip.lamb_dicke * ip.rabi;
  const auto rho0 = tensor({qubit_state(0.0, 1.0, Slot::probe), fock_state(0, 4)});
  const auto grid = uniform_grid(2 * kPi / g, 101);
  const std::array<Operator, 1> obs{probe_excited_projector(rho0.layout())};
  const auto s = evolve_recording(Hamiltonian(red_sideband_hamiltonian(ip)), nullptr, rho0, grid, obs, TimeUnit::lab()).series[0];
  for (std::size_t i = 0; i < s.size(); ++i) EXPECT_NEAR(s.values[i], std::pow(std::cos(g * s.times[i]), 2), 1e-8);
}

TEST(IonParams, Validation) {
  IonParams ip;
  ip.lamb_dicke = 0.0;
  EXPECT_THROW(ip.validate(), InvalidArgument);
  ip.lamb_dicke = 0.05;
  ip.trap_frequency = -1.0;
  EXPECT_THROW(ip.validate(), InvalidArgument);
  ip.trap_frequency = 1.0;
  EXPECT_TRUE(ip.lamb_dicke_regime(1.0));
  ip.lamb_dicke = 0.25;
  EXPECT_FALSE(ip.lamb_dicke_regime(1.0));  // 0.25 sqrt(2) > 0.3
  EXPECT_NEAR(IonParams{}.sideband_coupling(), 0.05 * 0.002 / 2, 1e-18);
}

TEST(ModelParams, ValidationAndDetuning) {
  ModelParams p;
  p.set_detuning(12.5);
  EXPECT_NEAR(p.omega_p - p.omega_a, 12.5, 1e-12);
  EXPECT_NEAR(p.detuning(), 12.5, 1e-12);
  for (auto bad : {&ModelParams::g_p, &ModelParams::bath_rate, &ModelParams::collective_rate, &ModelParams::mediator_nbar,
                   &ModelParams::bath_nbar}) {
    ModelParams q;
    q.*bad = -0.1;
    EXPECT_THROW(q.validate(), InvalidArgument);
  }
}

// ---------------------------------------------------------------------------
// integrator and dynamics

TEST(Integrator, ExponentialDecayToTolerance) {
  const std::vector<double> grid{0.0, 0.5, 1.0, 2.0};
  std::vector<double> seen;
  Eigen::VectorXd y0(1);
  y0(0) = 1.0;
  const auto stats = integrate(
      [](double, const Eigen::VectorXd& y, Eigen::VectorXd& dy) { dy = -1.3 * y; }, y0, grid, 1.3,
      IntegratorOptions{Method::dormand_prince, 1e-12}, [&](std::size_t, double, const Eigen::VectorXd& y) { seen.push_back(y(0)); });
  ASSERT_EQ(seen.size(), grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) EXPECT_NEAR(seen[i], std::exp(-1.3 * grid[i]), 1e-10);
  EXPECT_GT(stats.accepted, 0);
}

TEST(Integrator, FixedStepRk4) {
  const std::vector<double> grid{0.0, 1.0, 3.0};
  std::vector<double> seen;
  Eigen::VectorXd y0(2);
  y0 << 1.0, 0.0;
  integrate([](double, const Eigen::VectorXd& y, Eigen::VectorXd& dy) { dy = Eigen::Vector2d(y(1), -y(0)); }, y0, grid,
            1.0, IntegratorOptions{Method::rk4_fixed, 0.0, 0.01}, [&](std::size_t, double, const Eigen::VectorXd& y) { seen.push_back(y(0)); });
  for (std::size_t i = 0; i < grid.size(); ++i) EXPECT_NEAR(seen[i], std::cos(grid[i]), 1e-6);
}

TEST(Integrator, StepUnderflowIsReported) {
  Eigen::VectorXd y0(1);
  y0(0) = 1.0;
  const std::vector<double> grid{0.0, 2.0};
  try {
    IntegratorOptions opt;
    opt.max_steps = 1'000'000;
    integrate([](double, const Eigen::VectorXd& y, Eigen::VectorXd& dy) { dy = y.cwiseProduct(y); }, y0, grid, 1.0, opt,
              [](std::size_t, double, const Eigen::VectorXd&) {});
    FAIL() << "blow-up at t = 1 was not detected";
  } catch (const IntegratorFailure& e) {
    EXPECT_NE(std::string(e.what()).find("t = "), std::string::npos);
  }
}

TEST(Integrator, RejectsBadGrids) {
  Eigen::VectorXd y0 = Eigen::VectorXd::Ones(1);
  auto rhs = [](double, const Eigen::VectorXd& y, Eigen::VectorXd& dy) { dy = y; };
  auto obs = [](std::size_t, double, const Eigen::VectorXd&) {};
  EXPECT_THROW(integrate(rhs, y0, std::vector<double>{}, 1.0, {}, obs), InvalidArgument);
  EXPECT_THROW(integrate(rhs, y0, std::vector<double>{0.1, 0.2}, 1.0, {}, obs), InvalidArgument);
  EXPECT_THROW(integrate(rhs, y0, std::vector<double>{0.0, 0.2, 0.2}, 1.0, {}, obs), InvalidArgument);
}

TEST(Evolve, ZeroHamiltonianIsConstant) {
  std::mt19937_64 rng(2);
  const auto layout = SpaceLayout::tripartite(3);
  const auto grid = uniform_grid(2.0, 11);
  for (const QState& rho0 : {random_mixed(layout, rng), QState::pure(layout, oracle::random_vector(12, rng))}) {
    const auto traj = evolve(Hamiltonian::zero(layout), nullptr, rho0, grid);
    ASSERT_EQ(traj.states.size(), grid.size());
    for (const auto& s : traj.states) EXPECT_LT(oracle::max_abs(s.density() - rho0.density()), 1e-14);
  }
}

TEST(Evolve, DampedOscillatorRelaxation) {
  ModelParams p;
  p.bath_rate = 0.2;
  p.bath_nbar = 0.5;
  const int cutoff = minimum_thermal_cutoff(2.0, 1e-12);
  const auto layout = SpaceLayout::single(Slot::mediator, cutoff);
  const auto gen = thermal_bath_generator(p, layout);
  const Operator h = 3.0 * number_operator(cutoff);
  const auto grid = uniform_grid(10.0, 21);
  const std::array<Operator, 1> obs{number_operator(cutoff)};
  const auto rec = evolve_recording(Hamiltonian(h), &gen, thermal_state(2.0, cutoff), grid, obs, TimeUnit::lab());
  const auto& s = rec.series[0];
  for (std::size_t i = 0; i < s.size(); ++i) EXPECT_NEAR(s.values[i], 0.5 + 1.5 * std::exp(-0.2 * s.times[i]), 1e-7);
  EXPECT_TRUE(rec.physicality.ok());
}

TEST(Evolve, TimeDependentDrive) {
  // H(t) = f(t) sx with f = 1 + 0.5 sin t: P_e = sin^2(int f)
  const auto layout = SpaceLayout::single(Slot::probe, 2);
  Matrix sx = Matrix::Zero(2, 2);
  sx(0, 1) = sx(1, 0) = 1.0;
  const Hamiltonian h(layout, [sx](double t) -> Matrix { return (1.0 + 0.5 * std::sin(t)) * sx; });
  const auto grid = uniform_grid(4.0, 41);
  const std::array<Operator, 1> obs{qubit_operators(Slot::probe).excited};
  const auto s = evolve_recording(h, nullptr, qubit_state(1.0, 0.0, Slot::probe), grid, obs, TimeUnit::lab()).series[0];
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double t = s.times[i];
    EXPECT_NEAR(s.values[i], std::pow(std::sin(t + 0.5 * (1.0 - std::cos(t))), 2), 1e-8);
  }
}

TEST(Evolve, LayoutMismatchAndBadGrid) {
  const auto h = Hamiltonian::zero(SpaceLayout::tripartite(3));
  EXPECT_THROW(evolve(h, nullptr, thermal_state(0.0, 3), uniform_grid(1.0, 3)), InvalidArgument);
  const auto rho0 = tensor({qubit_state(1, 0, Slot::probe), fock_state(0, 3), qubit_state(1, 0, Slot::system)});
  EXPECT_THROW(evolve(h, nullptr, rho0, std::vector<double>{0.5, 1.0}), InvalidArgument);
}

TEST(Record, BasicObservables) {
  ModelParams p;
  p.cutoff = minimum_thermal_cutoff(1.0);
  const auto rho0 = tripartite_state(ProbeState::plus(0.3), thermal_state(1.0, p.cutoff), QubitDensity::from_pure(0.6, 0.8));
  const auto traj = evolve(Hamiltonian(rotating_frame_hamiltonian(p, p.omega_a)), nullptr, rho0, uniform_grid(0.5, 6));
  const auto ones = record(traj, Operator::identity(rho0.layout()), TimeUnit::resonant(1.0));
  for (double v : ones.values) EXPECT_NEAR(v, 1.0, 1e-9);
  EXPECT_NEAR(record(traj, probe_excited_projector(rho0.layout()), TimeUnit::resonant(1.0)).values[0], 0.5, 1e-14);
  const auto x0 = embed(quadrature(p.cutoff, 0.0), Slot::mediator, rho0.layout());
  EXPECT_NEAR(record(traj, x0, TimeUnit::resonant(1.0)).values[0], 0.0, 1e-14);
  const auto a = embed(annihilation(p.cutoff), Slot::mediator, rho0.layout());
  EXPECT_THROW(record(traj, a, TimeUnit::resonant(1.0)), InvalidArgument);
}

TEST(Record, UnitsAreNeverMixed) {
  TimeSeries a{{0.0, 1.0}, {0.5, 0.4}, {}, TimeUnit::resonant(1.0)};
  TimeSeries b{{0.0, 1.0}, {0.5, 0.3}, {}, TimeUnit::dispersive(1.0, 30.0)};
  EXPECT_THROW(difference(a, b), InvalidArgument);
  TimeSeries c{{0.0, 2.0}, {0.5, 0.3}, {}, TimeUnit::resonant(1.0)};
  EXPECT_THROW(difference(a, c), InvalidArgument);
  EXPECT_NEAR(difference(a, TimeSeries{{0.0, 1.0}, {0.5, 0.1}, {}, TimeUnit::resonant(1.0)}).values[1], 0.3, 1e-15);
}

TEST(Record, ProbabilityRange) {
  TimeSeries s{{0.0}, {1.0 + 5e-10}, {}, TimeUnit::lab()};
  EXPECT_NO_THROW(s.validate_probability());
  s.values[0] = 1.0 + 2e-9;
  EXPECT_THROW(s.validate_probability(), InvalidArgument);
  s.shots = {100};
  s.values[0] = 1.0 + 5e-10;
  EXPECT_THROW(s.validate_probability(), InvalidArgument);
}

TEST(Physicality, RandomLindbladModelsStayPhysical) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto layout = SpaceLayout::qubit_oscillator(4);
  for (int k = 0; k < 6; ++k) {
    const Operator h(layout, oracle::random_hermitian(8, rng));
    LindbladGenerator gen(layout);
    for (int j = 0; j < 3; ++j) {
      Matrix jump = oracle::random_hermitian(8, rng) + kI * oracle::random_hermitian(8, rng);
      gen.add(Operator(layout, jump), 0.3 * u(rng));
    }
    const auto rho0 = random_mixed(layout, rng, 1 + k);
    const auto traj = evolve(Hamiltonian(h), &gen, rho0, uniform_grid(3.0, 31));
    EXPECT_TRUE(traj.physicality.ok()) << "trace " << traj.physicality.max_trace_deviation << " eig "
                                       << traj.physicality.min_eigenvalue;
    for (const auto& s : traj.states) {
      const Matrix r = s.density();
      EXPECT_LT(oracle::max_abs(r - r.adjoint()), 1e-10);
    }
  }
}

TEST(Physicality, UnitaryEvolutionPreservesPurity) {
  std::mt19937_64 rng(8);
  ModelParams p;
  p.cutoff = 6;
  p.set_detuning(2.0);
  const auto layout = SpaceLayout::tripartite(6);
  EvolutionOptions o;
  o.integrator.tolerance = 1e-12;
  const auto traj = evolve(Hamiltonian(tripartite_hamiltonian(p)), nullptr, QState::pure(layout, oracle::random_vector(24, rng)),
                           uniform_grid(5.0, 11), o);
  for (const auto& s : traj.states) {
    const Matrix r = s.density();
    EXPECT_NEAR((r * r).trace().real(), 1.0, 1e-8);
  }
  EXPECT_LT(traj.physicality.max_trace_deviation, 1e-8);
}

TEST(Physicality, MixedUnitaryEnsemblePath) {
  std::mt19937_64 rng(12);
  ModelParams p;
  p.cutoff = 5;
  const auto layout = SpaceLayout::tripartite(5);
  const auto rho0 = random_mixed(layout, rng, 3);
  const Matrix h = tripartite_hamiltonian(p).matrix();
  const auto traj = evolve(Hamiltonian(tripartite_hamiltonian(p)), nullptr, rho0, std::vector<double>{0.0, 0.7});
  // reference: U rho U^dag from the eigen-decomposition of H
  Eigen::SelfAdjointEigenSolver<Matrix> es(h);
  const Matrix u = es.eigenvectors() * (-kI * 0.7 * es.eigenvalues().cast<cplx>()).array().exp().matrix().asDiagonal() *
                   es.eigenvectors().adjoint();
  EXPECT_LT(oracle::max_abs(traj.states.back().density() - u * rho0.density() * u.adjoint()), 1e-8);
  EXPECT_GT(traj.physicality.min_eigenvalue, -1e-7);
}

TEST(Convergence, HalvingToleranceChangesLittle) {
  ModelParams p;
  p.cutoff = minimum_thermal_cutoff(0.5);
  p.mediator_nbar = 0.5;
  p.set_detuning(3.0);
  const auto rho0 = tripartite_state(ProbeState::plus(0.0), thermal_state(0.5, p.cutoff), QubitDensity::from_pure(0.6, 0.8));
  const std::array<Operator, 1> obs{probe_excited_projector(rho0.layout())};
  const auto grid = uniform_grid(2.0, 21);
  auto run = [&](double tol) {
    EvolutionOptions o;
    o.integrator.tolerance = tol;
    return evolve_recording(Hamiltonian(rotating_frame_hamiltonian(p, p.omega_a)), nullptr, rho0, grid, obs,
                            TimeUnit::lab(), o)
        .series[0]
        .values;
  };
  const double tol = 1e-9;
  EXPECT_LT(max_abs_difference(run(tol), run(tol / 2)), 10 * tol);
}

TEST(RotatingFrame, LeavesProbePopulationUnchanged) {
  ModelParams p;
  p.cutoff = 5;
  p.set_detuning(2.0);
  p.omega_s = 97.0;
  const auto rho0 = tripartite_state(ProbeState::plus(0.4), fock_state(1, 5), QubitDensity::from_pure(0.6, kI * 0.8));
  const std::array<Operator, 1> obs{probe_excited_projector(rho0.layout())};
  const auto grid = uniform_grid(1.5, 16);
  EvolutionOptions o;
  o.integrator.tolerance = 1e-12;
  const auto lab = evolve_recording(Hamiltonian(tripartite_hamiltonian(p)), nullptr, rho0, grid, obs, TimeUnit::lab(), o);
  const auto rot =
      evolve_recording(Hamiltonian(rotating_frame_hamiltonian(p, p.omega_a)), nullptr, rho0, grid, obs, TimeUnit::lab(), o);
  EXPECT_LT(max_abs_difference(lab.series[0].values, rot.series[0].values), 1e-9);
}
