#include <doctest.h>

#include <cmath>

#include "neounet/error.hpp"
#include "neounet/schedule.hpp"

using neounet::lr_at;

TEST_CASE("warmup is linear up to base_lr") {
  CHECK(lr_at(2.0, 0.001, 5, 105) == doctest::Approx(0.0004).epsilon(1e-12));
  CHECK(lr_at(2.5, 0.001, 5, 105) == doctest::Approx(0.0005).epsilon(1e-12));
  CHECK(lr_at(0.0, 0.001, 5, 105) == 0.0);
}

TEST_CASE("cosine phase hits base at t_w, half at midpoint, zero at the end") {
  CHECK(lr_at(5.0, 0.001, 5, 105) == doctest::Approx(0.001).epsilon(1e-12));
  CHECK(lr_at(55.0, 0.001, 5, 105) == doctest::Approx(0.0005).epsilon(1e-12));
  CHECK(lr_at(105.0, 0.001, 5, 105) == 0.0);
}

TEST_CASE("continuous at the warmup boundary and non-increasing after it") {
  const double eps = 1e-9;
  const double left = lr_at(5.0 - eps, 0.001, 5, 105);
  const double right = lr_at(5.0 + eps, 0.001, 5, 105);
  CHECK(std::abs(left - right) < 1e-11);

  double prev = lr_at(5.0, 0.001, 5, 105);
  for (double e = 5.0; e <= 105.0; e += 0.25) {
    const double lr = lr_at(e, 0.001, 5, 105);
    CHECK(lr <= prev + 1e-15);
    prev = lr;
  }
}

TEST_CASE("no-warmup schedule starts at base_lr") {
  CHECK(lr_at(0.0, 0.01, 0, 30) == doctest::Approx(0.01).epsilon(1e-12));
}

TEST_CASE("domain errors") {
  CHECK_THROWS_AS(lr_at(-0.1, 0.001, 5, 105), neounet::DomainError);
  CHECK_THROWS_AS(lr_at(106.0, 0.001, 5, 105), neounet::DomainError);
  CHECK_THROWS_AS(lr_at(1.0, 0.001, 105, 105), neounet::DomainError);
  CHECK_THROWS_AS(lr_at(1.0, 0.0, 5, 105), neounet::DomainError);
}
