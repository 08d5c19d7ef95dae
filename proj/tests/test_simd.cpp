#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "pp/dehaze.hpp"
#include "pp/error.hpp"
#include "pp/simd.hpp"
#include "test_util.hpp"

using namespace pp;

namespace {

struct IsaGuard {
  simd::Isa saved = simd::active_isa();
  ~IsaGuard() { simd::set_active_isa(saved); }
};

std::vector<double> random_vec(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-2.0, 2.0);
  return v;
}

// Bound on the rounding difference between two summation orders.
double reassociation_bound(const std::vector<double>& terms) {
  double mag = 0.0;
  for (double t : terms) mag += std::abs(t);
  return 2.0 * static_cast<double>(terms.size() + 1) * std::numeric_limits<double>::epsilon() * mag;
}

}  // namespace

TEST_CASE("isa names and availability") {
  CHECK(simd::parse_isa("scalar") == simd::Isa::scalar);
  CHECK(simd::parse_isa("avx2") == simd::Isa::avx2);
  CHECK_THROWS_AS(simd::parse_isa("neon"), DomainError);
  CHECK(simd::isa_available(simd::Isa::scalar));
  CHECK(simd::isa_available(simd::best_isa()));
  CHECK(simd::table_for(simd::Isa::scalar).isa == simd::Isa::scalar);
}

TEST_CASE("switching the active table") {
  IsaGuard guard;
  simd::set_active_isa(simd::Isa::scalar);
  CHECK(simd::active_isa() == simd::Isa::scalar);
  if (simd::isa_available(simd::Isa::avx2)) {
    simd::set_active_isa(simd::Isa::avx2);
    CHECK(simd::active_isa() == simd::Isa::avx2);
  } else {
    CHECK_THROWS_AS(simd::set_active_isa(simd::Isa::avx2), DomainError);
  }
}

TEST_CASE("avx2 kernels agree with the scalar reference") {
  if (!simd::isa_available(simd::Isa::avx2)) {
    MESSAGE("avx2 not available; only the scalar kernels are exercised");
    return;
  }
  const auto& ref = simd::table_for(simd::Isa::scalar);
  const auto& vec = simd::table_for(simd::Isa::avx2);
  Rng rng(99);
  for (std::size_t n = 0; n <= 67; ++n) {
    for (std::size_t offset = 0; offset < 3; ++offset) {
      CAPTURE(n);
      CAPTURE(offset);
      const auto xs = random_vec(rng, n + offset);
      const auto ys = random_vec(rng, n + offset);
      const double a = rng.uniform(-3.0, 3.0);
      const double* x = xs.data() + offset;
      const double* y = ys.data() + offset;

      std::vector<double> y_ref(ys), y_vec(ys);
      ref.axpy(n, a, x, y_ref.data() + offset);
      vec.axpy(n, a, x, y_vec.data() + offset);
      CHECK(y_ref == y_vec);

      std::vector<double> m_ref(n + 1, 7.0), m_vec(n + 1, 7.0);
      ref.mul(n, x, y, m_ref.data());
      vec.mul(n, x, y, m_vec.data());
      CHECK(m_ref == m_vec);

      std::vector<double> products(n), values(x, x + n);
      for (std::size_t i = 0; i < n; ++i) products[i] = x[i] * y[i];
      CHECK(std::abs(ref.dot(n, x, y) - vec.dot(n, x, y)) <= reassociation_bound(products));
      CHECK(std::abs(ref.sum(n, x) - vec.sum(n, x)) <= reassociation_bound(values));
    }
  }
}

TEST_CASE("scalar kernels match their definitions") {
  const auto& k = simd::table_for(simd::Isa::scalar);
  const std::vector<double> x{1, 2, 3, 4, 5};
  const std::vector<double> y{0.5, -1, 2, 0, 1};
  CHECK(k.dot(5, x.data(), y.data()) == 0.5 - 2 + 6 + 0 + 5);
  CHECK(k.sum(5, x.data()) == 15.0);
  std::vector<double> acc(y);
  k.axpy(5, 2.0, x.data(), acc.data());
  CHECK(acc == std::vector<double>{2.5, 3, 8, 8, 11});
  std::vector<double> out(5);
  k.mul(5, x.data(), y.data(), out.data());
  CHECK(out == std::vector<double>{0.5, -2, 6, 0, 5});
}

TEST_CASE("network outputs agree across kernel variants") {
  if (!simd::isa_available(simd::Isa::avx2)) return;
  IsaGuard guard;
  Rng rng(3);
  const Image img = test::random_image(rng, 20, 23, 3);
  const RoiMask roi{test::random_image(rng, 20, 23, 1)};
  const DehazerParams p = init_dehazer(12);
  const TrainingSample sample{img, test::random_image(rng, 20, 23, 3), roi};
  const LossOptions opts{true, 0.3, 0.5};

  simd::set_active_isa(simd::Isa::scalar);
  const Image a = forward_aodx(p, img, roi, 0.3);
  DehazerParams ga;
  const double la = training_loss(p, sample, opts, &ga);
  simd::set_active_isa(simd::Isa::avx2);
  const Image b = forward_aodx(p, img, roi, 0.3);
  DehazerParams gb;
  const double lb = training_loss(p, sample, opts, &gb);

  // Forward convolutions only use axpy, so the outputs match exactly.
  CHECK(a == b);
  CHECK(la == doctest::Approx(lb).epsilon(1e-12));
  for (std::size_t i = 0; i < ga.k_weights.size(); ++i) {
    for (std::size_t j = 0; j < ga.k_weights[i].values.size(); ++j) {
      CHECK(ga.k_weights[i].values[j] == doctest::Approx(gb.k_weights[i].values[j]).epsilon(1e-9).scale(1e-12));
    }
  }
}
