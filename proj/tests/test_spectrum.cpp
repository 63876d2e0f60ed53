#include <doctest.h>

#include <cmath>
#include <limits>
#include <numbers>

#include "ccphot/errors.hpp"
#include "ccphot/spectrum.hpp"
#include "ccphot/synth.hpp"
#include "composite_util.hpp"
#include "test_util.hpp"

using namespace ccphot;
using namespace ccphot::spectrum;

namespace {

const synth::Noise kPoisson{synth::NoiseKind::poisson, 0.0, false};

Spectrum lines_spectrum(std::vector<synth::ZplTruth> zpls, synth::Grid grid, synth::Noise noise = {},
                        std::uint64_t seed = 1) {
  synth::SpectrumTruth t;
  t.zpls = std::move(zpls);
  synth::GeneratorSpec spec;
  spec.seed = seed;
  spec.kind = synth::Kind::spectrum;
  spec.truth = t;
  spec.noise = noise;
  spec.sampling = grid;
  return synth::gen_spectrum(spec);
}

double alpha2_of(double alpha3_nm, double splitting_meV) {
  return energy_to_wavelength({kHcEvNm / alpha3_nm - splitting_meV * 1e-3, EnergyUnit::eV});
}

double series_sum(int j_max) {
  double s = 0.0;
  for (int j = 1; j <= j_max; ++j) s += 1.0 / std::sqrt(static_cast<double>(j));
  return s;
}

}  // namespace

// ---------------------------------------------------------------------------
// ZPLs

TEST_CASE("three Gaussian lines are recovered") {
  const auto s = lines_spectrum({{"alpha3", Emitter::alpha, 1278.6, 0.5, 4000.0},
                                 {"alpha2", Emitter::alpha, 1280.2, 0.5, 2000.0},
                                 {"beta", Emitter::beta, 1334.0, 0.6, 1000.0}},
                                {1270.0, 0.05, 1401, {}}, kPoisson, 5);
  const std::vector<ExpectedLine> ex{{"alpha3", 1278.5, 0.7}, {"alpha2", 1280.3, 0.7}, {"beta", 1334.1, 1.2}};
  const auto z = find_zpls(s, ex);
  REQUIRE(z.lines.size() == 3);
  CHECK(std::abs(z.find("alpha3")->center_nm - 1278.6) < 0.05);
  CHECK(std::abs(z.find("alpha2")->center_nm - 1280.2) < 0.05);
  CHECK(std::abs(z.find("beta")->center_nm - 1334.0) < 0.05);
  CHECK(std::abs(z.find("beta")->area - 1000.0) < 3.0 * z.find("beta")->area_sigma + 1.0);
  const double expect = 1e3 * (kHcEvNm / 1278.6 - kHcEvNm / 1280.2);
  CHECK(*z.doublet_splitting_meV == doctest::Approx(expect).epsilon(0.03));
}

TEST_CASE("flat spectrum has no line in any window") {
  std::vector<double> wl(401), y(401, 100.0);
  for (std::size_t i = 0; i < wl.size(); ++i) wl[i] = 1270.0 + 0.2 * static_cast<double>(i);
  const Spectrum s(wl, y, 4.0);
  for (const auto& e : testutil::composite_lines()) {
    const std::vector<ExpectedLine> one{e};
    CHECK_THROWS_AS(find_zpls(s, one), LineNotFoundError);
  }
}

TEST_CASE("doublet splitting of 1.47 meV") {
  const double a2 = alpha2_of(1278.6, 1.47);
  const auto s = lines_spectrum({{"alpha3", Emitter::alpha, 1278.6, 0.5, 7000.0},
                                 {"alpha2", Emitter::alpha, a2, 0.5, 3000.0}},
                                {1274.0, 0.05, 201, {}}, kPoisson, 9);
  const std::vector<ExpectedLine> ex{{"alpha3", 1278.6, 0.9}, {"alpha2", a2, 0.9}};
  const auto z = find_zpls(s, ex);
  REQUIRE(z.doublet_splitting_meV);
  CHECK(std::abs(*z.doublet_splitting_meV - 1.47) < 0.05);
  CHECK(z.splitting_consistent);
}

TEST_CASE("zpl window errors") {
  const auto s = lines_spectrum({{"beta", Emitter::beta, 1334.0, 0.6, 1000.0}}, {1330.0, 0.1, 81, {}});
  const std::vector<ExpectedLine> outside{{"beta", 1300.0, 1.0}};
  CHECK_THROWS_AS(find_zpls(s, outside), PreconditionError);
  const std::vector<ExpectedLine> unknown{{"gamma", 1334.0, 1.0}};
  CHECK_THROWS_AS(find_zpls(s, unknown), ValidationError);
}

TEST_CASE("unresolved line reports an upper bound on its width") {
  const auto s = lines_spectrum({{"beta", Emitter::beta, 1334.0, 0.3, 1000.0}}, {1330.0, 0.1, 81, {}});
  const std::vector<ExpectedLine> ex{{"beta", 1334.0, 1.0}};
  const auto z = find_zpls(s, ex, 0.5);
  CHECK(z.lines[0].fwhm_upper_bound);
  CHECK(z.lines[0].fwhm_nm == doctest::Approx(0.3).epsilon(1e-6));
}

// ---------------------------------------------------------------------------
// Doublet thermometry

TEST_CASE("doublet share of 70 percent at 4 K is recovered") {
  synth::DoubletSeriesTruth truth;
  truth.t0_K = 20.0;
  truth.r0 = 1.0 + (7.0 / 3.0 - 1.0) * std::exp(4.0 / truth.t0_K);
  const std::vector<double> temps{4, 10, 20, 30, 45, 60, 80, 100, 150};
  const auto series = synth::gen_doublet_series(42, truth, temps, kPoisson);
  const std::vector<ExpectedLine> lines{{"alpha3", truth.alpha3_nm, 0.9},
                                        {"alpha2", alpha2_of(truth.alpha3_nm, truth.splitting_meV), 0.9}};
  const auto m = doublet_ratio_vs_T(series, lines);
  CHECK(std::abs(m.dominant_share(4.0) - 0.70) <= 0.02);
  CHECK(m.share_consistent());
  CHECK(std::abs(m.ratio(100.0) - 1.0) < 0.1);
}

TEST_CASE("flat doublet ratio is degenerate") {
  std::vector<RatioPoint> pts;
  for (double t : {4.0, 10.0, 20.0, 40.0, 80.0}) pts.push_back({t, 1.0, 0.01});
  CHECK_THROWS_AS(fit_doublet_ratio(pts), DegenerateFitError);
}

TEST_CASE("doublet ratio needs three cold points") {
  const std::vector<RatioPoint> pts{{4.0, 2.0, 0.1}, {50.0, 1.5, 0.1}, {120.0, 1.0, 0.1}};
  CHECK_THROWS_AS(fit_doublet_ratio(pts), InsufficientDataError);
}

TEST_CASE("ratio tends to one at high temperature") {
  for (double r0 : {0.2, 1.5, 4.0, 30.0}) {
    for (double t0 : {1.0, 20.0, 300.0}) {
      DoubletRatioModel m;
      m.r0 = r0;
      m.t0_K = t0;
      CHECK(std::abs(m.ratio(1e7) - 1.0) < 1e-9);
      CHECK(m.ratio(0.0) == doctest::Approx(r0));
    }
  }
}

// ---------------------------------------------------------------------------
// Power and polarization

TEST_CASE("power law exponents") {
  std::vector<std::pair<double, double>> lin, quad;
  for (double p : {0.5, 1.0, 2.0, 3.5}) {
    lin.emplace_back(p, 40.0 * p);
    quad.emplace_back(p, 3.0 * p * p);
  }
  const auto a = power_law_check(lin);
  CHECK(a.exponent == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(a.consistent_with_linear);
  const auto b = power_law_check(quad);
  CHECK(b.exponent == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(b.prefactor == doctest::Approx(3.0).epsilon(1e-9));
  CHECK_FALSE(b.consistent_with_linear);
}

TEST_CASE("power law with five percent noise") {
  std::vector<std::pair<double, double>> pts;
  std::uint64_t i = 0;
  for (double p : {0.5, 1.0, 2.0, 3.5}) {
    synth::PointStream r(11, i++);
    pts.emplace_back(p, 1000.0 * p * (1.0 + 0.05 * r.normal()));
  }
  const auto fit = power_law_check(pts);
  CHECK(std::abs(fit.exponent - 1.0) <= fit.exponent_sigma3);
}

TEST_CASE("power law rejects bad input") {
  const std::vector<std::pair<double, double>> neg{{1.0, 1.0}, {2.0, -1.0}, {3.0, 3.0}};
  CHECK_THROWS_AS(power_law_check(neg), DomainError);
  const std::vector<std::pair<double, double>> two{{1.0, 1.0}, {2.0, 2.0}};
  CHECK_THROWS(power_law_check(two));
}

TEST_CASE("polarization examples") {
  std::vector<std::pair<double, double>> cos2, flat, ellip;
  std::uint64_t i = 0;
  for (double th = 0.0; th < 180.0; th += 10.0) {
    const double c = std::cos(th * std::numbers::pi / 180.0);
    cos2.emplace_back(th, c * c);
    flat.emplace_back(th, 1.0);
    synth::PointStream r(3, i++);
    ellip.emplace_back(th, (1.0 + c * c) * (1.0 + 0.01 * r.normal()));
  }
  const auto a = polarization_fit(cos2);
  CHECK(a.visibility == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(std::abs(a.theta0_deg) < 1e-4);
  CHECK(a.theta_defined);

  const auto b = polarization_fit(flat);
  CHECK(b.visibility == doctest::Approx(0.0));
  CHECK_FALSE(b.theta_defined);

  const auto c = polarization_fit(ellip);
  CHECK(std::abs(c.visibility - 1.0 / 3.0) <= c.visibility_sigma3);
}

TEST_CASE("polarization needs four angles over 90 degrees") {
  const std::vector<std::pair<double, double>> narrow{{0.0, 1.0}, {20.0, 0.9}, {40.0, 0.6}, {60.0, 0.3}};
  CHECK_THROWS(polarization_fit(narrow));
}

// ---------------------------------------------------------------------------
// Sideband series

TEST_CASE("psb_eval examples") {
  PsbModel m{0.0, 12.0, 62.0, 10, std::nullopt, Emitter::alpha};
  for (double d : {-10.0, 0.0, 62.0, 150.0}) CHECK(psb_eval(m, d) == 0.0);

  m.i0 = 3.0;
  const double expect = m.i0 * series_sum(10) / (m.sigma_meV * std::sqrt(std::numbers::pi));
  CHECK(psb_eval(m, m.delta0_meV) == doctest::Approx(expect).epsilon(1e-12));
  CHECK(series_sum(10) == doctest::Approx(5.0211).epsilon(2e-5));

  m.j_max = 1;
  for (double d : {40.0, 62.0, 70.0}) {
    const double u = (d - m.delta0_meV) / m.sigma_meV;
    CHECK(psb_eval(m, d) == doctest::Approx(m.i0 * std::exp(-u * u) / (std::sqrt(std::numbers::pi) * m.sigma_meV)));
  }
}

TEST_CASE("psb_eval is linear in I0") {
  for (std::uint64_t k = 0; k < 20; ++k) {
    synth::PointStream r(21, k);
    PsbModel m{1.0 + 100.0 * r.uniform(), 2.0 + 20.0 * r.uniform(), 100.0 * r.uniform(), 1 + static_cast<int>(k % 10),
               std::nullopt, Emitter::alpha};
    if (k % 2) m.doublet = Doublet{1.47, 0.1 + 0.9 * r.uniform()};
    PsbModel twice = m;
    twice.i0 = 2.0 * m.i0;
    for (double d = -20.0; d < 220.0; d += 3.7) {
      // Doubling is exact for normal numbers; subnormal tails lose bits.
      if (psb_eval(m, d) < std::numeric_limits<double>::min()) continue;
      CHECK(psb_eval(twice, d) == 2.0 * psb_eval(m, d));
    }
  }
}

TEST_CASE("doublet replication preserves area") {
  for (double ratio : {0.2, 3.0 / 7.0, 1.0}) {
    PsbModel off{5.0, 9.0, 50.0, 10, std::nullopt, Emitter::alpha};
    PsbModel on = off;
    on.doublet = Doublet{1.47, ratio};
    std::vector<double> d;
    for (double x = -300.0; x <= 600.0; x += 0.05) d.push_back(x);
    const auto a = psb_eval(off, d);
    const auto b = psb_eval(on, d);
    CHECK(testutil::close_rel(trapezoid(d, a), trapezoid(d, b), 1e-8));
  }
}

TEST_CASE("psb model validation") {
  PsbModel m{-1.0, 1.0, 0.0, 10, std::nullopt, Emitter::alpha};
  CHECK_THROWS_AS(m.validate(), ValidationError);
  m = {1.0, 0.0, 0.0, 10, std::nullopt, Emitter::alpha};
  CHECK_THROWS_AS(m.validate(), ValidationError);
  m = {1.0, 1.0, 0.0, 0, std::nullopt, Emitter::alpha};
  CHECK_THROWS_AS(m.validate(), ValidationError);
  m = {1.0, 1.0, 0.0, 10, Doublet{1.47, 1.5}, Emitter::alpha};
  CHECK_THROWS_AS(m.validate(), ValidationError);
}

// ---------------------------------------------------------------------------
// Sideband fit and partition

TEST_CASE("sideband fit round trip on the composite") {
  const auto spec = synth::reference_composite(42, kPoisson);
  const auto s = synth::gen_spectrum(spec);
  const auto lines = testutil::composite_lines();
  const auto z = find_zpls(s, lines);
  const auto f = fit_psb(s, z);
  const auto& truth = std::get<synth::SpectrumTruth>(spec.truth).sidebands.front().model;
  CHECK(std::abs(f.alpha.i0 - truth.i0) <= f.i0_sigma3);
  CHECK(std::abs(f.alpha.sigma_meV - truth.sigma_meV) <= f.sigma_sigma3);
  CHECK(std::abs(f.alpha.delta0_meV - truth.delta0_meV) <= f.delta0_sigma3);
  REQUIRE(f.alpha.doublet);
  CHECK(std::abs(f.alpha.doublet->ratio - 3.0 / 7.0) < 0.02);
}

TEST_CASE("noiseless composite closes on its constructed values") {
  const auto spec = synth::reference_composite(1, {});
  const auto s = synth::gen_spectrum(spec);
  const auto z = find_zpls(s, testutil::composite_lines());
  const auto f = fit_psb(s, z);
  CHECK(f.dw_alpha == doctest::Approx(0.39).epsilon(1e-3));
  CHECK(f.dw_beta == doctest::Approx(0.22).epsilon(1e-3));
  const auto p = partition_dw(s, z, testutil::composite_partition_meV(z), &f);
  CHECK(std::abs(p.dw_mean - 0.34) < 0.02);
  CHECK(*p.dw_alpha_refined > 0.31);
  CHECK(*p.dw_alpha_refined < 0.60);
  CHECK(*p.dw_beta_refined > 0.10);
  CHECK(p.ordered());
  CHECK_FALSE(p.truncation_corrected);
}

TEST_CASE("partition reproduces the generator within one point") {
  const auto spec = synth::reference_composite(42, kPoisson);
  const auto s = synth::gen_spectrum(spec);
  const auto z = find_zpls(s, testutil::composite_lines());
  const auto f = fit_psb(s, z);
  const auto p = partition_dw(s, z, testutil::composite_partition_meV(z), &f);
  const auto truth = synth::composite_areas(spec);
  CHECK(std::abs(p.dw_mean - truth.dw_mean()) < 0.01);
  CHECK(std::abs(*p.dw_alpha_refined - truth.alpha.dw()) < 0.02);
  CHECK(std::abs(*p.dw_beta_refined - truth.beta.dw()) < 0.02);
}

TEST_CASE("spectrum without sideband gives I0 consistent with zero") {
  auto spec = synth::reference_composite(7, kPoisson);
  auto& t = std::get<synth::SpectrumTruth>(spec.truth);
  for (auto& sb : t.sidebands) sb.model.i0 = 0.0;
  const auto s = synth::gen_spectrum(spec);
  const auto z = find_zpls(s, testutil::composite_lines());
  const auto f = fit_psb(s, z);
  CHECK(f.alpha.i0 <= std::max(f.i0_sigma3, 1e-6));
}

TEST_CASE("pure ZPL spectrum partitions to one") {
  auto spec = synth::reference_composite(1, {});
  std::get<synth::SpectrumTruth>(spec.truth).sidebands.clear();
  const auto s = synth::gen_spectrum(spec);
  const auto z = find_zpls(s, testutil::composite_lines());
  const auto p = partition_dw(s, z, testutil::composite_partition_meV(z));
  CHECK(p.dw_mean == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(p.dw_alpha_low == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(p.dw_alpha_high == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(p.dw_beta_low == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("zero ZPL areas give zero DW") {
  auto spec = synth::reference_composite(1, {});
  std::get<synth::SpectrumTruth>(spec.truth).zpls.clear();
  const auto s = synth::gen_spectrum(spec);
  ZplSet z;
  for (const auto& e : testutil::composite_lines()) {
    ZplLine l;
    l.label = e.label;
    l.center_nm = e.center_nm;
    l.fwhm_nm = 0.5;
    z.lines.push_back(l);
  }
  const auto p = partition_dw(s, z, testutil::composite_partition_meV(z));
  CHECK(p.dw_mean == 0.0);
  CHECK(p.dw_alpha_low == 0.0);
  CHECK(p.dw_alpha_high == 0.0);
  CHECK(p.dw_beta_low == 0.0);
}

TEST_CASE("partition errors and truncation") {
  const auto full = synth::gen_spectrum(synth::reference_composite(1, {}));
  const auto z = find_zpls(full, testutil::composite_lines());
  ZplSet empty_z;
  for (const auto& l : z.lines) {
    ZplLine e = l;
    e.area = 0.0;
    e.amplitude = 0.0;
    empty_z.lines.push_back(e);
  }
  std::vector<double> wl(full.wavelength_nm().begin(), full.wavelength_nm().end());
  const Spectrum zero(wl, std::vector<double>(wl.size(), 0.0), 4.0);
  CHECK_THROWS_AS(partition_dw(zero, empty_z, 60.0), DomainError);

  // Cut the record at 1450 nm, well short of 200 meV below alpha.
  std::vector<double> w2, y2;
  for (std::size_t i = 0; i < wl.size() && wl[i] <= 1450.0; ++i) {
    w2.push_back(wl[i]);
    y2.push_back(full.intensity()[i]);
  }
  const Spectrum cut(w2, y2, 4.0);
  const auto p = partition_dw(cut, z, 60.0);
  CHECK(p.truncation_corrected);
  CHECK(p.truncation_factor == doctest::Approx(2.0 / 3.0));
  CHECK(p.ordered());
  CHECK_THROWS_AS(fit_psb(cut, z), PreconditionError);
}

TEST_CASE("bounds bracket refined values on randomized spectra") {
  for (std::uint64_t k = 0; k < 40; ++k) {
    const auto spec = testutil::random_composite(101, k);
    const auto s = synth::gen_spectrum(spec);
    const auto z = find_zpls(s, testutil::composite_lines());
    const auto f = fit_psb(s, z);
    const auto p = partition_dw(s, z, testutil::composite_partition_meV(z), &f);
    CHECK(p.ordered());
    // Alpha ZPL plus fitted sideband never exceed the recorded emission.
    const double total = trapezoid(s.wavelength_nm(), s.intensity());
    CHECK((f.alpha_zpl_area + f.alpha_psb_area) / total <= 1.0 + 1e-6);
  }
}
