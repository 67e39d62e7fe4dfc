#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "slicevlp/diffmath/grad_check.hpp"
#include "slicevlp/error.hpp"
#include "slicevlp/slice_pool/slice_pool.hpp"

using namespace slicevlp;
using namespace slicevlp::pool;
using diff::Rng;

namespace {

Tensor random_matrix(std::size_t r, std::size_t c, Rng& rng) {
  Tensor t({r, c});
  for (double& v : t.data()) v = rng.uniform(-1, 1);
  return t;
}

SliceStack permute_rows(const SliceStack& s, const std::vector<std::size_t>& perm) {
  Tensor out(s.mat.shape());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    auto src = s.mat.row(perm[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return SliceStack{out};
}

std::vector<std::size_t> non_identity_perm(std::size_t n, Rng& rng) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  do {
    rng.shuffle(perm);
  } while (std::is_sorted(perm.begin(), perm.end()));
  return perm;
}

// wq = wk = wv = identity columns of each head, wo = identity, PE = 0.
AdapterParams identity_adapter(std::size_t d_model, std::size_t heads, std::size_t s_max) {
  AdapterParams p = init_adapter({s_max, d_model, heads, 0.0}, 0);
  p.pe_table.value.fill(0.0);
  const std::size_t dh = d_model / heads;
  for (std::size_t h = 0; h < heads; ++h) {
    for (Param* w : {&p.wq[h], &p.wk[h], &p.wv[h]}) {
      w->value.fill(0.0);
      for (std::size_t j = 0; j < dh; ++j) w->value.at(h * dh + j, j) = 1.0;
    }
  }
  p.wo.value = Tensor::identity(d_model);
  return p;
}

}  // namespace

TEST_CASE("attention_pool identity configuration") {
  AdapterParams p = identity_adapter(4, 2, 8);
  Tensor row = Tensor::matrix({{0.3, -1.2, 2.0, 0.5}});
  auto one = attention_pool(SliceStack{row}, p);
  for (std::size_t j = 0; j < 4; ++j) CHECK(one.vec[j] == doctest::Approx(row[j]).epsilon(1e-15));

  Tensor same({5, 4});
  for (std::size_t i = 0; i < 5; ++i) std::copy(row.data().begin(), row.data().end(), same.row(i).begin());
  auto five = attention_pool(SliceStack{same}, p);
  for (std::size_t j = 0; j < 4; ++j) CHECK(std::abs(five.vec[j] - row[j]) < 1e-14);
}

TEST_CASE("attention_pool with zero PE is permutation invariant") {
  Rng rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    AdapterParams p = init_adapter({64, 16, 4, 0.5}, 100 + trial);
    for (Param* w : p.params()) {
      for (double& v : w->value.data()) v = rng.uniform(-1, 1);
    }
    p.pe_table.value.fill(0.0);
    SliceStack s{random_matrix(7, 16, rng)};
    auto perm = non_identity_perm(7, rng);
    auto a = attention_pool(s, p);
    auto b = attention_pool(permute_rows(s, perm), p);
    CHECK(diff::max_abs_diff(a.vec, b.vec) < 1e-9);
  }
}

TEST_CASE("attention_pool with random PE is order sensitive") {
  Rng rng(8);
  AdapterParams p = init_adapter({64, 64, 4, 0.5}, 5);
  SliceStack s{random_matrix(8, 64, rng)};
  auto perm = non_identity_perm(8, rng);
  auto a = attention_pool(s, p);
  auto b = attention_pool(permute_rows(s, perm), p);
  CHECK(diff::max_abs_diff(a.vec, b.vec) > 1e-6);
}

TEST_CASE("attention rows sum to one") {
  Rng rng(2);
  AdapterParams p = init_adapter({64, 32, 4, 0.5}, 7);
  for (Param* w : p.params())
    for (double& v : w->value.data()) v = rng.uniform(-2, 2);
  AttentionMaps maps;
  attention_pool(SliceStack{random_matrix(9, 32, rng)}, p, &maps);
  CHECK(maps.size() == 4);
  for (const Tensor& m : maps) {
    CHECK(m.shape() == diff::Shape{9, 9});
    for (std::size_t i = 0; i < 9; ++i) {
      double s = 0.0;
      for (double v : m.row(i)) s += v;
      CHECK(std::abs(s - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("attention_pool capacity and empty errors") {
  AdapterParams p = init_adapter({4, 8, 2, 0.5}, 1);
  Rng rng(1);
  try {
    attention_pool(SliceStack{random_matrix(5, 8, rng)}, p);
    FAIL("expected CapacityError");
  } catch (const CapacityError& e) {
    std::string msg = e.what();
    CHECK(msg.find('5') != std::string::npos);
    CHECK(msg.find('4') != std::string::npos);
  }
  CHECK_THROWS_AS(attention_pool(SliceStack{Tensor({0, 8})}, p), InputError);
}

TEST_CASE("gap_pool") {
  auto g = gap_pool(SliceStack{Tensor::matrix({{1, 1}, {3, 3}})});
  CHECK(g.vec == Tensor::vector({2, 2}));
  Tensor row = Tensor::matrix({{0.1, 0.7, -3.0}});
  CHECK(gap_pool(SliceStack{row}).vec == row.reshaped({3}));
  CHECK_THROWS_AS(gap_pool(SliceStack{Tensor({0, 3})}), InputError);

  Rng rng(12);
  for (int trial = 0; trial < 25; ++trial) {
    SliceStack s{random_matrix(8, 16, rng)};
    auto perm = non_identity_perm(8, rng);
    auto a = gap_pool(s);
    CHECK(diff::bitwise_equal(a.vec, gap_pool(permute_rows(s, perm)).vec));
    CHECK(diff::bitwise_equal(a.vec, diff::mean_rows(s.mat)));
  }
}

TEST_CASE("init_adapter") {
  AdapterConfig cfg;
  auto a = init_adapter(cfg, 3);
  auto b = init_adapter(cfg, 3);
  auto c = init_adapter(cfg, 4);
  for (std::size_t i = 0; i < a.params().size(); ++i) {
    CHECK(diff::bitwise_equal(a.params()[i]->value, b.params()[i]->value));
  }
  CHECK_FALSE(a.pe_table.value == c.pe_table.value);
  CHECK(a.heads == 4);
  CHECK(a.d_head == 16);
  CHECK(a.pe_table.value.shape() == diff::Shape{64, 64});

  const double sigma = 0.02;
  const double count = static_cast<double>(a.pe_table.value.size());
  double mean = 0.0;
  for (double v : a.pe_table.value.data()) mean += v;
  mean /= count;
  CHECK(std::abs(mean) <= 3.0 * sigma / std::sqrt(count));

  CHECK_THROWS_AS(init_adapter({64, 64, 5, 0.5}, 1), ConfigError);
  CHECK_THROWS_AS(init_adapter({64, 64, 4, 1.0}, 1), ConfigError);
}

TEST_CASE("adapter gradient passes grad_check") {
  AdapterParams p = init_adapter({12, 16, 4, 0.5}, 21);
  Rng rng(4);
  Tensor stack = random_matrix(6, 16, rng);
  Tensor probe({1, 16});
  for (double& v : probe.data()) v = rng.uniform(-1, 1);
  for (bool train : {false, true}) {
    CAPTURE(train);
    diff::ScalarFn f = [&](Tape& t) {
      Rng drop(3);
      Var out = attention_pool(bind(t, p), t.constant_ref(stack), train, &drop);
      return diff::sum_all(diff::mul(out, t.constant(probe)));
    };
    auto ps = p.params();
    auto report = diff::grad_check(f, ps, 1e-5, 1e-4);
    INFO(diff::to_string(report));
    CHECK(report.passed);
  }
}

TEST_CASE("pool mode parsing") {
  CHECK(parse_pool_mode("gap") == PoolMode::kGap);
  CHECK(parse_pool_mode("attn") == PoolMode::kAttention);
  CHECK(parse_pool_mode("attention") == PoolMode::kAttention);
  CHECK_THROWS_AS(parse_pool_mode("max"), ConfigError);
}
