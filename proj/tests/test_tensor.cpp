// Copyright (c) 2026 The streamkv Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <limits>
#include <vector>

#include "streamkv/rng.hpp"
#include "streamkv/tensor.hpp"
#include "support/test_util.hpp"

using namespace streamkv;

namespace {

Mat mat_from(std::initializer_list<std::initializer_list<float>> rows) {
  Mat m(rows.size(), rows.begin()->size());
  std::size_t i = 0;
  for (const auto& r : rows) {
    std::size_t j = 0;
    for (float v : r) m.at(i, j++) = v;
    ++i;
  }
  return m;
}

Mat random_mat(std::uint64_t seed, std::size_t rows, std::size_t cols) {
  SplitMix64 rng(seed);
  Mat m(rows, cols);
  for (auto& v : m.data) v = static_cast<float>(rng.next_in(-1.0, 1.0));
  return m;
}

double dnorm(std::span<const float> x) {
  double s = 0.0;
  for (float v : x) s += static_cast<double>(v) * v;
  return std::sqrt(s);
}

} // namespace

TEST_CASE("matmul matches hand-computed product") {
  const Mat a = mat_from({{1, 2}, {3, 4}});
  const Mat b = mat_from({{1}, {1}});
  const Mat c = matmul(a, b);
  REQUIRE(c.rows == 2);
  REQUIRE(c.cols == 1);
  CHECK(c.at(0, 0) == 3.0f);
  CHECK(c.at(1, 0) == 7.0f);
}

TEST_CASE("matmul matches naive float64 triple loop on random inputs") {
  const Mat a = random_mat(11, 7, 5);
  const Mat b = random_mat(12, 5, 9);
  const Mat c = matmul(a, b);
  for (std::size_t i = 0; i < a.rows; ++i) {
    for (std::size_t j = 0; j < b.cols; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols; ++k)
        acc += static_cast<double>(a.at(i, k)) * static_cast<double>(b.at(k, j));
      CHECK(static_cast<double>(c.at(i, j)) == doctest::Approx(acc).epsilon(1e-6));
    }
  }
}

TEST_CASE("matmul identity is exact") {
  const Mat a = random_mat(3, 6, 6);
  const Mat c = matmul(a, Mat::identity(6));
  CHECK(c.data == a.data);
}

TEST_CASE("matmul rejects inner-dimension mismatch") {
  const Mat a(2, 3);
  const Mat b(4, 2);
  testutil::expect_error(ErrorKind::Shape, [&] { (void)matmul(a, b); });
}

TEST_CASE("matmul counts output cells") {
  reset_kernel_stats();
  (void)matmul(random_mat(1, 4, 5), random_mat(2, 5, 3));
  CHECK(kernel_stats().matmul_cells == 4u * 3u);
}

TEST_CASE("softmax of [1,2,3] matches precomputed value") {
  const std::vector<float> x = {1.0f, 2.0f, 3.0f};
  const Vec p = softmax_row(x);
  REQUIRE(p.size() == 3);
  CHECK(static_cast<double>(p[0]) == doctest::Approx(0.09003057317038046).epsilon(1e-7));
  CHECK(static_cast<double>(p[1]) == doctest::Approx(0.24472847105479764).epsilon(1e-7));
  CHECK(static_cast<double>(p[2]) == doctest::Approx(0.6652409557748219).epsilon(1e-7));
}

TEST_CASE("softmax is shift invariant and sums to one") {
  const std::vector<float> x = {0.3f, -1.7f, 2.2f, 0.0f};
  std::vector<float> shifted = x;
  for (auto& v : shifted) v += 1000.0f;
  const Vec p = softmax_row(x);
  const Vec q = softmax_row(shifted);
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    CHECK(p[i] > 0.0f);
    CHECK(static_cast<double>(p[i]) == doctest::Approx(static_cast<double>(q[i])).epsilon(1e-4));
    sum += static_cast<double>(p[i]);
  }
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-7));
}

TEST_CASE("softmax survives large magnitudes without overflow") {
  const std::vector<float> x = {10000.0f, 10001.0f};
  const Vec p = softmax_row(x);
  CHECK(std::isfinite(p[0]));
  CHECK(std::isfinite(p[1]));
  CHECK(p[1] > p[0]);
}

TEST_CASE("softmax rejects empty and non-finite input") {
  testutil::expect_error(ErrorKind::Shape, [] { (void)softmax_row(std::vector<float>{}); });
  const std::vector<float> bad = {1.0f, std::numeric_limits<float>::quiet_NaN()};
  testutil::expect_error(ErrorKind::Shape, [&] { (void)softmax_row(bad); });
  const std::vector<float> inf = {1.0f, std::numeric_limits<float>::infinity()};
  testutil::expect_error(ErrorKind::Shape, [&] { (void)softmax_row(inf); });
}

TEST_CASE("cosine similarity matches precomputed value") {
  const std::vector<float> u = {1.0f, 2.0f, 3.0f};
  const std::vector<float> v = {4.0f, 5.0f, 6.0f};
  CHECK(static_cast<double>(cosine_sim(u, v, 1.0f)) ==
        doctest::Approx(0.9746318461970762).epsilon(1e-7));
}

TEST_CASE("cosine similarity temperature divides the score") {
  const std::vector<float> u = {1.0f, 0.0f};
  const std::vector<float> v = {1.0f, 1.0f};
  const float s1 = cosine_sim(u, v, 1.0f);
  const float s2 = cosine_sim(u, v, 2.0f);
  CHECK(static_cast<double>(s2) == doctest::Approx(static_cast<double>(s1) / 2.0).epsilon(1e-6));
}

TEST_CASE("cosine similarity properties") {
  SplitMix64 rng(99);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<float> u(8), v(8);
    for (auto& x : u) x = static_cast<float>(rng.next_in(-1.0, 1.0));
    for (auto& x : v) x = static_cast<float>(rng.next_in(-1.0, 1.0));
    const float s = cosine_sim(u, v, 1.0f);
    CHECK(s >= -1.0f - 1e-6f);
    CHECK(s <= 1.0f + 1e-6f);
    CHECK(cosine_sim(v, u, 1.0f) == s); // symmetric
    std::vector<float> u3 = u;
    for (auto& x : u3) x *= 3.0f;
    CHECK(static_cast<double>(cosine_sim(u3, v, 1.0f)) ==
          doctest::Approx(static_cast<double>(s)).epsilon(1e-5)); // scale invariant
  }
  const std::vector<float> u = {1.0f, 2.0f};
  CHECK(cosine_sim(u, u, 1.0f) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("cosine similarity error kinds") {
  const std::vector<float> u = {1.0f, 2.0f};
  const std::vector<float> w = {1.0f, 2.0f, 3.0f};
  const std::vector<float> z = {0.0f, 0.0f};
  testutil::expect_error(ErrorKind::Shape, [&] { (void)cosine_sim(u, w, 1.0f); });
  testutil::expect_error(ErrorKind::Config, [&] { (void)cosine_sim(u, u, 0.0f); });
  testutil::expect_error(ErrorKind::Config, [&] { (void)cosine_sim(u, u, -1.0f); });
  testutil::expect_error(ErrorKind::DegenerateInput, [&] { (void)cosine_sim(z, u, 1.0f); });
  testutil::expect_error(ErrorKind::DegenerateInput, [&] { (void)cosine_sim(u, z, 1.0f); });
}

TEST_CASE("rotation matches the plain 2x2 rotation for head_dim 2") {
  // With head_dim 2 there is a single pair and the angle is exactly the
  // position, so the result is an ordinary rotation by p radians.
  const std::vector<float> x = {0.8f, -0.4f};
  for (std::int64_t p : {0, 1, 2, 7, -3}) {
    const Vec y = rope_apply(x, p, 2, 10000.0f);
    const double c = std::cos(static_cast<double>(p));
    const double s = std::sin(static_cast<double>(p));
    CHECK(static_cast<double>(y[0]) ==
          doctest::Approx(0.8 * c - (-0.4) * s).epsilon(1e-5));
    CHECK(static_cast<double>(y[1]) ==
          doctest::Approx(0.8 * s + (-0.4) * c).epsilon(1e-5));
  }
}

TEST_CASE("rotation matches independent float64 implementation") {
  SplitMix64 rng(7);
  std::vector<float> x(32);
  for (auto& v : x) v = static_cast<float>(rng.next_in(-1.0, 1.0));
  const std::size_t head_dim = 16;
  const double base = 10000.0;
  const Vec got = rope_apply(x, 37, head_dim, static_cast<float>(base));
  // Own pow-based rotation, written independently of the library kernel.
  std::vector<double> want(x.size());
  for (std::size_t h0 = 0; h0 < x.size(); h0 += head_dim) {
    for (std::size_t i = 0; i < head_dim / 2; ++i) {
      const double angle =
          37.0 * std::pow(base, -2.0 * static_cast<double>(i) / static_cast<double>(head_dim));
      const double a = x[h0 + 2 * i], b = x[h0 + 2 * i + 1];
      want[h0 + 2 * i] = a * std::cos(angle) - b * std::sin(angle);
      want[h0 + 2 * i + 1] = a * std::sin(angle) + b * std::cos(angle);
    }
  }
  for (std::size_t i = 0; i < x.size(); ++i)
    CHECK(static_cast<double>(got[i]) == doctest::Approx(want[i]).epsilon(1e-5));
}

TEST_CASE("rotation preserves norm and is undone by the negated position") {
  SplitMix64 rng(21);
  std::vector<float> x(64);
  for (auto& v : x) v = static_cast<float>(rng.next_in(-1.0, 1.0));
  for (std::int64_t p : {1, 5, 511, 100000}) {
    const Vec y = rope_apply(x, p, 16, 10000.0f);
    CHECK(dnorm(y) == doctest::Approx(dnorm(x)).epsilon(1e-5));
    const Vec back = rope_apply(y, -p, 16, 10000.0f);
    for (std::size_t i = 0; i < x.size(); ++i)
      CHECK(static_cast<double>(back[i]) ==
            doctest::Approx(static_cast<double>(x[i])).epsilon(1e-4));
  }
}

TEST_CASE("rotation composes additively in position") {
  SplitMix64 rng(22);
  std::vector<float> x(16);
  for (auto& v : x) v = static_cast<float>(rng.next_in(-1.0, 1.0));
  const Vec direct = rope_apply(x, 12, 8, 10000.0f);
  const Vec two_step = rope_apply(rope_apply(x, 9, 8, 10000.0f), 3, 8, 10000.0f);
  for (std::size_t i = 0; i < x.size(); ++i)
    CHECK(static_cast<double>(two_step[i]) ==
          doctest::Approx(static_cast<double>(direct[i])).epsilon(1e-4));
}

TEST_CASE("rotation at position zero is the identity, bit for bit") {
  std::vector<float> x = {0.1f, -0.2f, 0.3f, 0.4f};
  const Vec y = rope_apply(x, 0, 4, 10000.0f);
  CHECK(std::equal(x.begin(), x.end(), y.begin()));
}

TEST_CASE("in-place rotation matches rope_apply bit for bit") {
  SplitMix64 rng(23);
  std::vector<float> x(32);
  for (auto& v : x) v = static_cast<float>(rng.next_in(-1.0, 1.0));
  const Vec want = rope_apply(x, 91, 16, 10000.0f);
  std::vector<float> inplace = x;
  rope_rotate_inplace(inplace.data(), inplace.size(), 91, 16, 10000.0f);
  CHECK(inplace == std::vector<float>(want.begin(), want.end()));
}

TEST_CASE("rotation error kinds") {
  const std::vector<float> x = {1.0f, 2.0f, 3.0f, 4.0f};
  testutil::expect_error(ErrorKind::Config, [&] { (void)rope_apply(x, 1, 3, 10000.0f); });
  testutil::expect_error(ErrorKind::Config, [&] { (void)rope_apply(x, 1, 0, 10000.0f); });
  const std::vector<float> odd = {1.0f, 2.0f, 3.0f};
  testutil::expect_error(ErrorKind::Shape, [&] { (void)rope_apply(odd, 1, 2, 10000.0f); });
  testutil::expect_error(ErrorKind::Shape,
                         [&] { (void)rope_apply(std::vector<float>{}, 1, 2, 10000.0f); });
}

TEST_CASE("attention matches naive float64 reference") {
  const std::size_t n = 6, d = 4;
  const Mat q = random_mat(31, n, d);
  const Mat k = random_mat(32, n, d);
  const Mat v = random_mat(33, n, d);
  std::vector<KeyRange> mask(n);
  for (std::size_t i = 0; i < n; ++i) mask[i] = {0, i + 1}; // causal
  const Mat out = scaled_dot_attention(q, k, v, mask);

  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> scores(i + 1);
    double mx = -1e300;
    for (std::size_t j = 0; j <= i; ++j) {
      double dot = 0.0;
      for (std::size_t c = 0; c < d; ++c)
        dot += static_cast<double>(q.at(i, c)) * static_cast<double>(k.at(j, c));
      scores[j] = dot / std::sqrt(static_cast<double>(d));
      mx = std::max(mx, scores[j]);
    }
    double sum = 0.0;
    for (auto& s : scores) {
      s = std::exp(s - mx);
      sum += s;
    }
    for (std::size_t c = 0; c < d; ++c) {
      double acc = 0.0;
      for (std::size_t j = 0; j <= i; ++j)
        acc += scores[j] / sum * static_cast<double>(v.at(j, c));
      CHECK(static_cast<double>(out.at(i, c)) == doctest::Approx(acc).epsilon(1e-5));
    }
  }
}

TEST_CASE("attention output stays in the convex hull of allowed values") {
  const Mat q = random_mat(41, 5, 8);
  const Mat k = random_mat(42, 9, 8);
  const Mat v = random_mat(43, 9, 8);
  std::vector<KeyRange> mask = {{0, 1}, {0, 4}, {2, 7}, {0, 9}, {8, 9}};
  const Mat out = scaled_dot_attention(q, k, v, mask);
  for (std::size_t i = 0; i < out.rows; ++i) {
    for (std::size_t c = 0; c < out.cols; ++c) {
      float lo = std::numeric_limits<float>::max(), hi = std::numeric_limits<float>::lowest();
      for (std::size_t j = mask[i].begin; j < mask[i].end; ++j) {
        lo = std::min(lo, v.at(j, c));
        hi = std::max(hi, v.at(j, c));
      }
      CHECK(out.at(i, c) >= lo - 1e-5f);
      CHECK(out.at(i, c) <= hi + 1e-5f);
    }
  }
}

TEST_CASE("attention with a single allowed key copies that value row") {
  const Mat q = random_mat(51, 3, 4);
  const Mat k = random_mat(52, 5, 4);
  const Mat v = random_mat(53, 5, 4);
  std::vector<KeyRange> mask = {{2, 3}, {0, 1}, {4, 5}};
  const Mat out = scaled_dot_attention(q, k, v, mask);
  const std::size_t picks[] = {2, 0, 4};
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t c = 0; c < 4; ++c)
      CHECK(out.at(i, c) == doctest::Approx(v.at(picks[i], c)).epsilon(1e-6));
}

TEST_CASE("attention is deterministic across repeated calls") {
  const Mat q = random_mat(61, 4, 8);
  const Mat k = random_mat(62, 6, 8);
  const Mat v = random_mat(63, 6, 8);
  std::vector<KeyRange> mask = {{0, 2}, {0, 6}, {3, 5}, {1, 4}};
  const Mat a = scaled_dot_attention(q, k, v, mask);
  const Mat b = scaled_dot_attention(q, k, v, mask);
  CHECK(a.data == b.data);
}

TEST_CASE("attention counts one score and one value op per visited pair") {
  const Mat q = random_mat(71, 3, 4);
  const Mat k = random_mat(72, 8, 4);
  const Mat v = random_mat(73, 8, 4);
  std::vector<KeyRange> mask = {{0, 3}, {2, 8}, {7, 8}};
  reset_kernel_stats();
  (void)scaled_dot_attention(q, k, v, mask);
  CHECK(kernel_stats().attn_score_ops == 3u + 6u + 1u);
  CHECK(kernel_stats().attn_value_ops == 3u + 6u + 1u);
}

TEST_CASE("attention error kinds") {
  const Mat q = random_mat(81, 2, 4);
  const Mat k = random_mat(82, 5, 4);
  const Mat v = random_mat(83, 5, 4);
  SUBCASE("mask count must equal query rows") {
    std::vector<KeyRange> mask = {{0, 1}};
    testutil::expect_error(ErrorKind::Shape,
                           [&] { (void)scaled_dot_attention(q, k, v, mask); });
  }
  SUBCASE("empty range") {
    std::vector<KeyRange> mask = {{0, 1}, {3, 3}};
    testutil::expect_error(ErrorKind::Masking,
                           [&] { (void)scaled_dot_attention(q, k, v, mask); });
  }
  SUBCASE("range past the last key") {
    std::vector<KeyRange> mask = {{0, 1}, {2, 6}};
    testutil::expect_error(ErrorKind::Masking,
                           [&] { (void)scaled_dot_attention(q, k, v, mask); });
  }
  SUBCASE("key/value row mismatch") {
    const Mat v_short = random_mat(84, 4, 4);
    std::vector<KeyRange> mask = {{0, 1}, {0, 2}};
    testutil::expect_error(ErrorKind::Shape,
                           [&] { (void)scaled_dot_attention(q, k, v_short, mask); });
  }
}

TEST_CASE("splitmix64 sequence is stable and uniform-ish") {
  SplitMix64 a(42), b(42);
  for (int i = 0; i < 16; ++i) CHECK(a.next() == b.next());
  SplitMix64 c(42);
  double mean = 0.0;
  const int n = 4096;
  for (int i = 0; i < n; ++i) {
    const double u = c.next_double();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    mean += u;
  }
  mean /= n;
  CHECK(mean == doctest::Approx(0.5).epsilon(0.05));
  SplitMix64 d(7);
  for (int i = 0; i < 256; ++i) {
    const auto x = d.next_below(10);
    CHECK(x < 10u);
  }
  CHECK(mix_seed(1, 2) != mix_seed(1, 3));
  CHECK(mix_seed(1, 2) != mix_seed(2, 2));
  CHECK(mix_seed(1, 2) == mix_seed(1, 2));
}

TEST_CASE("Mat append keeps row-major layout") {
  Mat m(0, 3);
  const std::vector<float> r0 = {1, 2, 3};
  const std::vector<float> r1 = {4, 5, 6};
  m.append_row(r0);
  m.append_row(r1);
  REQUIRE(m.rows == 2);
  CHECK(m.at(1, 0) == 4.0f);
  Mat other(1, 3);
  other.at(0, 2) = 9.0f;
  m.append_rows(other);
  REQUIRE(m.rows == 3);
  CHECK(m.at(2, 2) == 9.0f);
}

TEST_CASE("error kind names are distinct and stable") {
  CHECK(std::string(error_kind_name(ErrorKind::Shape)) == "shape error");
  CHECK(std::string(error_kind_name(ErrorKind::Masking)) == "masking error");
  CHECK(std::string(error_kind_name(ErrorKind::Corruption)) == "corruption");
  const Error e = Error::storage("disk full");
  CHECK(std::string(e.what()) == "storage error: disk full");
}
