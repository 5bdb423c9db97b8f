#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "treetomo/config.hpp"
#include "treetomo/detector.hpp"

using Catch::Matchers::WithinAbs;
using namespace treetomo;

namespace {

DetectorParams ideal_detector() {
  DetectorParams det;
  det.eta = {1.0, 1.0, 1.0, 1.0};
  det.dark = {0.0, 0.0, 0.0, 0.0};
  return det;
}

}  // namespace

TEST_CASE("noclick probability closed form") {
  DetectorParams det = ideal_detector();
  CHECK(noclick_prob(det, Branch::a, 1) == 0.0);  // perfect detector always clicks

  det.eta = {0.3, 0.3, 0.3, 0.3};
  CHECK(noclick_prob(det, Branch::b, 0) == 1.0);  // no photons, no dark counts

  DetectorParams cal = default_detector();
  // (1 - 0.1270)^3 (1 - 1.20e-4), frozen from an independent high-precision
  // evaluation
  CHECK_THAT(noclick_prob(cal, Branch::a, 3), WithinAbs(0.66525877636596, 1e-12));

  SECTION("non-increasing in the photon count") {
    double prev = 1.0;
    for (int k = 0; k <= 100; ++k) {
      const double v = noclick_prob(cal, Branch::d, k);
      CHECK(v <= prev + 1e-15);
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
      prev = v;
    }
  }
}

TEST_CASE("click probability complements noclick") {
  DetectorParams cal = default_detector();
  CHECK_THAT(click_prob(cal, Branch::a, 0), WithinAbs(1.20e-4, 1e-15));  // reduces to p_dark
  CHECK(click_prob(ideal_detector(), Branch::c, 2) == 1.0);
  // 1 - (1 - 0.1410)(1 - 1.13e-4), frozen independent evaluation
  CHECK_THAT(click_prob(cal, Branch::c, 1), WithinAbs(0.1410970670, 1e-12));

  for (int k = 0; k <= 40; ++k)
    CHECK_THAT(click_prob(cal, Branch::b, k) + noclick_prob(cal, Branch::b, k),
               WithinAbs(1.0, 1e-15));
}

TEST_CASE("branch and photon-count validation") {
  const DetectorParams cal = default_detector();
  CHECK_THROWS_AS(noclick_prob(cal, static_cast<Branch>(7), 1), std::invalid_argument);
  CHECK_THROWS_AS(noclick_prob(cal, Branch::a, -1), std::invalid_argument);
  CHECK_THROWS_AS(click_prob(cal, static_cast<Branch>(-1), 1), std::invalid_argument);

  DetectorParams bad = cal;
  bad.eta[2] = 1.5;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cal;
  bad.split = {0.5, 0.5, 0.25, 0.25};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("pattern probabilities: exact small cases") {
  const DetectorParams det = ideal_detector();
  CHECK(pattern_prob(det, 0u, 0) == 1.0);  // nothing arrives, nothing clicks

  // two photons, exactly branch a clicks: both photons routed to a
  CHECK_THAT(pattern_prob(det, 0b0001u, 2), WithinAbs(1.0 / 16.0, 1e-15));

  CHECK_THROWS_AS(pattern_prob(det, 16u, 1), std::invalid_argument);
  CHECK_THROWS_AS(pattern_prob(det, 0u, -2), std::invalid_argument);
  CHECK_THROWS_AS(pattern_prob(det, 0u, 171), std::invalid_argument);  // enumeration limit
  CHECK_NOTHROW(pattern_prob(det, 0u, 170));
}

TEST_CASE("degenerate routing and blind branches") {
  SECTION("all photons forced onto two branches") {
    DetectorParams det = ideal_detector();
    det.split = {0.5, 0.5, 0.0, 0.0};
    // three photons: c and d never click, a-and-b-both needs a 2/1 split
    CHECK(pattern_prob(det, 0b0100u, 3) == 0.0);
    CHECK_THAT(pattern_prob(det, 0b0001u, 3), WithinAbs(0.125, 1e-15));  // all three on a
    CHECK_THAT(pattern_prob(det, 0b0011u, 3), WithinAbs(0.75, 1e-15));
    const auto probs = click_pattern_probs(det, 3);
    double total = 0.0;
    for (double p : probs) total += p;
    CHECK_THAT(total, WithinAbs(1.0, 1e-14));
  }

  SECTION("a blind branch only fires on dark counts") {
    DetectorParams det = default_detector();
    det.eta[2] = 0.0;
    const PovmMatrix povm = theoretical_povm(det, 12);
    CHECK_NOTHROW(povm.validate(1e-12));
    for (int m : {0, 4, 12}) {
      const auto xi = oracles::outcome_column_closed_form(det, m);
      for (int n = 0; n < kOutcomeCount; ++n)
        CHECK_THAT(povm.at(n, m), WithinAbs(xi[n], 1e-12));
    }
    // with the dark count removed as well the branch is fully inert
    det.dark[2] = 0.0;
    const PovmMatrix blind = theoretical_povm(det, 8);
    for (int m = 0; m <= 8; ++m) CHECK(blind.at(4, m) == 0.0);
  }
}

TEST_CASE("pattern probabilities sum to one") {
  const DetectorParams cal = default_detector();
  for (int m : {0, 1, 2, 5, 10, 20, 40, 60}) {
    const auto probs = click_pattern_probs(cal, m);
    double total = 0.0;
    for (double p : probs) total += p;
    CHECK_THAT(total, WithinAbs(1.0, 1e-12));
  }
}

TEST_CASE("pattern probabilities match per-photon enumeration") {
  std::mt19937_64 rng(91);
  for (int trial = 0; trial < 25; ++trial) {
    const DetectorParams det = oracles::random_params(rng);
    const int m = static_cast<int>(rng() % 6);
    for (unsigned mask = 0; mask < 16; ++mask) {
      const double expected = oracles::pattern_prob_per_photon(det, mask, m);
      CHECK_THAT(pattern_prob(det, mask, m), WithinAbs(expected, 1e-12));
    }
  }
}

TEST_CASE("pattern probabilities match the inclusion-exclusion form") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 15; ++trial) {
    const DetectorParams det = oracles::random_params(rng);
    for (int m : {0, 3, 8, 17, 33}) {
      for (unsigned mask = 0; mask < 16; ++mask) {
        const double expected = oracles::pattern_prob_closed_form(det, mask, m);
        CHECK_THAT(pattern_prob(det, mask, m), WithinAbs(expected, 1e-11));
      }
    }
  }
}

TEST_CASE("pattern probability against Monte Carlo routing") {
  // calibrated device, branches a and b click on a five-photon pulse
  const DetectorParams cal = default_detector();
  const long long samples = 10000000;
  const double p = pattern_prob(cal, 0b0011u, 5);
  const double estimate = oracles::pattern_prob_monte_carlo(cal, 0b0011u, 5, samples, 20250810);
  const double stderr_mc = std::sqrt(p * (1.0 - p) / static_cast<double>(samples));
  CHECK_THAT(estimate, WithinAbs(p, 4.0 * stderr_mc));
}

TEST_CASE("theoretical response matrix: exact cases") {
  const DetectorParams det = ideal_detector();

  SECTION("one photon is always counted") {
    const PovmMatrix povm = theoretical_povm(det, 4);
    CHECK(povm.at(1, 1) == 1.0);
    for (int n : {0, 2, 3, 4}) CHECK(povm.at(n, 1) == 0.0);
  }

  SECTION("two photons collide with probability 1/4") {
    const PovmMatrix povm = theoretical_povm(det, 2);
    CHECK_THAT(povm.at(1, 2), WithinAbs(0.25, 1e-15));
    CHECK_THAT(povm.at(2, 2), WithinAbs(0.75, 1e-15));
  }

  SECTION("vacuum column is pure dark counts") {
    const PovmMatrix povm = theoretical_povm(default_detector(), 0);
    // product of the four dark-click complements
    CHECK_THAT(povm.at(0, 0), WithinAbs(0.999390132888549, 1e-12));
  }
}

TEST_CASE("theoretical response matrix: completeness and structure") {
  const DetectorParams cal = default_detector();
  const PovmMatrix povm = theoretical_povm(cal, 60);
  CHECK_NOTHROW(povm.validate(1e-12));

  SECTION("matches the closed-form columns") {
    for (int m : {0, 1, 2, 7, 23, 45, 60}) {
      const auto xi = oracles::outcome_column_closed_form(cal, m);
      for (int n = 0; n < kOutcomeCount; ++n)
        CHECK_THAT(povm.at(n, m), WithinAbs(xi[n], 1e-12));
    }
  }

  SECTION("no dark counts: cannot count more photons than arrived") {
    DetectorParams det = cal;
    det.dark = {0.0, 0.0, 0.0, 0.0};
    const PovmMatrix p = theoretical_povm(det, 10);
    for (int m = 0; m <= 10; ++m)
      for (int n = m + 1; n < kOutcomeCount; ++n) CHECK(p.at(n, m) == 0.0);
  }

  SECTION("vacuum outcome decays with the photon number") {
    DetectorParams det = cal;
    det.dark = {0.0, 0.0, 0.0, 0.0};
    const PovmMatrix p = theoretical_povm(det, 40);
    for (int m = 1; m <= 40; ++m) CHECK(p.at(0, m) <= p.at(0, m - 1) + 1e-15);
  }

  SECTION("random parameters keep columns normalized") {
    std::mt19937_64 rng(4242);
    for (int trial = 0; trial < 8; ++trial) {
      const DetectorParams det = oracles::random_params(rng);
      CHECK_NOTHROW(theoretical_povm(det, 25).validate(1e-12));
    }
  }
}

TEST_CASE("theoretical response matrix against Monte Carlo routing") {
  const DetectorParams cal = default_detector();
  const PovmMatrix povm = theoretical_povm(cal, 10);
  const long long samples = 200000;
  for (int m : {2, 5, 10}) {
    const auto freq = oracles::outcome_column_monte_carlo(cal, m, samples, 777 + m);
    for (int n = 0; n < kOutcomeCount; ++n) {
      const double p = povm.at(n, m);
      const double stderr_mc = std::sqrt(p * (1.0 - p) / static_cast<double>(samples));
      CHECK_THAT(freq[n], WithinAbs(p, 4.0 * stderr_mc + 1e-9));
    }
  }
}

TEST_CASE("response matrix CSV round trip is exact") {
  const PovmMatrix povm = theoretical_povm(default_detector(), 35);
  std::ostringstream out;
  povm.write_csv(out, {"roundtrip check"});
  std::istringstream in(out.str());
  const PovmMatrix back = PovmMatrix::read_csv(in);
  REQUIRE(back.truncation() == povm.truncation());
  for (int n = 0; n < kOutcomeCount; ++n)
    for (int m = 0; m <= povm.truncation(); ++m) CHECK(back.at(n, m) == povm.at(n, m));
}

TEST_CASE("response matrix CSV rejects malformed input") {
  std::istringstream missing("m,xi0,xi1\n0,1,0\n");
  CHECK_THROWS_AS(PovmMatrix::read_csv(missing), IoError);
  std::istringstream gap("m,xi0,xi1,xi2,xi3,xi4\n1,0,1,0,0,0\n");
  CHECK_THROWS_AS(PovmMatrix::read_csv(gap), IoError);
  std::istringstream empty("");
  CHECK_THROWS_AS(PovmMatrix::read_csv(empty), IoError);
}
