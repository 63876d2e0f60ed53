#include <doctest.h>

#include <cmath>
#include <random>

#include "ccphot/core.hpp"
#include "ccphot/errors.hpp"
#include "test_util.hpp"

using namespace ccphot;

TEST_CASE("wavelength to energy") {
  CHECK(wavelength_to_energy(1239.84198).eV() == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(wavelength_to_energy(1279.0).eV() == doctest::Approx(0.969384).epsilon(1e-6));
  const double e1334 = wavelength_to_energy(1334.0).eV();
  CHECK(e1334 == doctest::Approx(0.929417).epsilon(1e-6));
  CHECK(wavelength_to_energy(1279.0).eV() - e1334 == doctest::Approx(0.0400).epsilon(0.005));
  CHECK(wavelength_to_energy(1279.0).meV() == doctest::Approx(969.384).epsilon(1e-6));
  CHECK_THROWS_AS(wavelength_to_energy(0.0), DomainError);
  CHECK_THROWS_AS(wavelength_to_energy(-5.0), DomainError);
  CHECK_THROWS_AS(energy_to_wavelength({0.0, EnergyUnit::eV}), DomainError);
}

TEST_CASE("energy round trip is identity") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> d(100.0, 5000.0);
  for (int i = 0; i < 1000; ++i) {
    const double nm = d(rng);
    CHECK(testutil::close_rel(energy_to_wavelength(wavelength_to_energy(nm)), nm, 1e-9));
    const EnergyValue e{d(rng), EnergyUnit::meV};
    CHECK(testutil::close_rel(wavelength_to_energy(energy_to_wavelength(e)).meV(), e.value, 1e-9));
  }
}

TEST_CASE("load_spectrum") {
  const auto dir = testutil::scratch("core_spectrum");
  SUBCASE("minimal file") {
    testutil::write(dir / "a.csv", "# header\n1279.0,100.0\n1280.0,90.0\n");
    const auto s = load_spectrum(dir / "a.csv", {});
    CHECK(s.size() == 2);
    CHECK(s.intensity()[1] == 90.0);
    CHECK(s.temperature_K() == 4.0);
  }
  SUBCASE("rows out of order are sorted") {
    testutil::write(dir / "b.txt", "1280.0\t90\n1279.0\t100\n");
    const auto s = load_spectrum(dir / "b.txt", {{"temperature_K", "20"}});
    CHECK(s.wavelength_nm()[0] == 1279.0);
    CHECK(s.intensity()[0] == 100.0);
    CHECK(s.temperature_K() == 20.0);
  }
  SUBCASE("text in second column names the line") {
    testutil::write(dir / "c.csv", "1279,1\n1280,abc\n");
    try {
      load_spectrum(dir / "c.csv", {});
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.line() == 2);
    }
  }
  SUBCASE("duplicate wavelengths") {
    testutil::write(dir / "d.csv", "1279,1\n1279,2\n1280,3\n");
    CHECK_THROWS_AS(load_spectrum(dir / "d.csv", {}), ValidationError);
  }
  SUBCASE("whitespace delimited") {
    testutil::write(dir / "e.dat", "  1279   5\n1280 6  \n\n");
    CHECK(load_spectrum(dir / "e.dat", {}).size() == 2);
  }
}

TEST_CASE("load_trace") {
  const auto dir = testutil::scratch("core_trace");
  SUBCASE("uniform zeros") {
    std::string text;
    for (int i = 0; i < 20; ++i) text += std::to_string(i) + ",0\n";
    testutil::write(dir / "t.csv", text);
    const auto t = load_trace(dir / "t.csv", {{"pulse_time_ns", "12"}});
    CHECK(t.size() == 20);
    CHECK(t.bin_width_ns() == doctest::Approx(1.0));
    CHECK(t.pre_pulse_bins() == 12);
  }
  SUBCASE("non-uniform bins") {
    testutil::write(dir / "u.csv", "0,1\n1,1\n2.5,1\n");
    CHECK_THROWS_AS(load_trace(dir / "u.csv", {}), ValidationError);
  }
  SUBCASE("negative counts") {
    testutil::write(dir / "n.csv", "0,3\n1,-1\n");
    CHECK_THROWS_AS(load_trace(dir / "n.csv", {}), ValidationError);
  }
}

TEST_CASE("serialize round trip is bit exact") {
  const auto dir = testutil::scratch("core_roundtrip");
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> digits(1, 999999999);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<double> wl, in;
    double w = 1200.0;
    for (int i = 0; i < 50; ++i) {
      w += 0.001 * (1 + digits(rng) % 1000);
      wl.push_back(std::stod(std::to_string(w).substr(0, 10)));
      in.push_back(std::stod("0." + std::to_string(digits(rng))) * 1e4);
    }
    std::sort(wl.begin(), wl.end());
    wl.erase(std::unique(wl.begin(), wl.end()), wl.end());
    in.resize(wl.size());
    const Spectrum s(wl, in, 10.0);
    save_spectrum(dir / "s.txt", s);
    const auto back = load_spectrum(dir / "s.txt", {{"temperature_K", "10"}});
    REQUIRE(back.size() == s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
      CHECK(back.wavelength_nm()[i] == s.wavelength_nm()[i]);
      CHECK(back.intensity()[i] == s.intensity()[i]);
    }
    std::vector<double> t(40), c(40);
    for (std::size_t i = 0; i < 40; ++i) {
      t[i] = 0.25 * static_cast<double>(i);
      c[i] = digits(rng) % 5000;
    }
    const DecayTrace tr(t, c, 3.0);
    save_trace(dir / "t.txt", tr);
    const auto tb = load_trace(dir / "t.txt", {{"pulse_time_ns", "3"}});
    for (std::size_t i = 0; i < 40; ++i) {
      CHECK(tb.time_ns()[i] == t[i]);
      CHECK(tb.counts()[i] == c[i]);
    }
  }
}

TEST_CASE("constructors reject corrupted input") {
  std::mt19937_64 rng(3);
  const std::vector<double> wl = {1, 2, 3, 4, 5, 6, 7, 8};
  const std::vector<double> in = {1, 2, 3, 4, 5, 6, 7, 8};
  CHECK_NOTHROW(Spectrum(wl, in, 4.0));
  for (int rep = 0; rep < 200; ++rep) {
    auto w = wl;
    auto y = in;
    double temp = 4.0;
    const std::size_t i = rng() % wl.size();
    switch (rng() % 5) {
      case 0: y[i] = -1.0 - static_cast<double>(rng() % 100); break;
      case 1: y[i] = std::nan(""); break;
      case 2: w[i] = i > 0 ? w[i - 1] : w[1]; break;
      case 3: temp = -static_cast<double>(rng() % 10); break;
      default: y.pop_back(); break;
    }
    CHECK_THROWS_AS(Spectrum(w, y, temp), ValidationError);
  }
  const std::vector<double> t = {0, 1, 2, 3, 4};
  CHECK_THROWS_AS(DecayTrace(t, {1, 2, 3, -4, 5}, 0.0), ValidationError);
  CHECK_THROWS_AS(DecayTrace(t, {1, 2, 3, 4}, 0.0), ValidationError);
  CHECK_THROWS_AS(DecayTrace({0, 1, 2, 4, 5}, {1, 2, 3, 4, 5}, 0.0), ValidationError);
  CHECK_THROWS_AS(DecayTrace({0}, {1}, 0.0), ValidationError);
}

TEST_CASE("site assignments") {
  const auto k = alpha_site_assignment();
  CHECK(k.site == Site::k_cubic);
  CHECK_NOTHROW(k.validate());
  CHECK(beta_site_assignment().site == Site::h_hexagonal);
  CHECK(to_string(Site::k_cubic) == "k");
  SiteAssignment bad = k;
  bad.zpl_lines.push_back(bad.zpl_lines.front());
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  SiteAssignment far = k;
  far.zpl_lines = {{"x", 1500.0}};
  CHECK_THROWS_AS(far.validate(), ValidationError);
}

TEST_CASE("metadata sidecar") {
  const auto dir = testutil::scratch("core_meta");
  testutil::write(dir / "m.json", R"({"temperature_K": 50, "label": "run 1"})");
  const auto m = load_metadata(dir / "m.json");
  CHECK(metadata_number(m, "temperature_K").value() == 50.0);
  CHECK(m.at("label") == "run 1");
  testutil::write(dir / "bad.json", R"({"colour": 1})");
  CHECK_THROWS_AS(load_metadata(dir / "bad.json"), ValidationError);
  CHECK(sidecar_path("a/b.csv").string() == "a/b.csv.meta.json");
}

TEST_CASE("trapezoid weights") {
  const std::vector<double> x = {0.0, 1.0, 3.0, 3.5};
  const std::vector<double> y = {1.0, 2.0, -1.0, 4.0};
  const auto w = trapezoid_weights(x);
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += w[i] * y[i];
  CHECK(s == doctest::Approx(trapezoid(x, y)).epsilon(1e-15));
  CHECK(trapezoid(x, y) == doctest::Approx(1.5 + 1.0 + 0.75));
}
