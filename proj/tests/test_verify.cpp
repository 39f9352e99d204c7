#include <doctest.h>

#include <algorithm>

#include "swinfree/verify.hpp"

using namespace swinfree;

TEST_CASE("connectivity components") {
  CHECK(connectivity_graph({{7, false}}, 14, 14).components() == 4);
  CHECK(connectivity_graph({{7, false}, {14, false}}, 14, 14).components() == 1);
  CHECK(connectivity_graph({{7, false}, {7, true}}, 14, 14).components() == 1);
  CHECK(connectivity_graph({{7, false}, {7, false}}, 14, 14).components() == 4);
  CHECK(connectivity_graph({{7, true}}, 14, 14).components() > 4);
  CHECK(connectivity_graph({}, 4, 4).components() == 16);

  const auto g = connectivity_graph({{7, false}}, 14, 14);
  CHECK(g.linked(0, 6));
  CHECK_FALSE(g.linked(0, 7));
  CHECK(g.linked(5, 5));
  CHECK(g.linked(20, 3) == g.linked(3, 20));
}

TEST_CASE("per-stage components match the window counts") {
  const auto free_b = preset("swin-free-B");
  const Index want_free[] = {64, 4, 1, 1};
  for (int s = 0; s < 4; ++s) CHECK(stage_connectivity(free_b, s).components() == want_free[s]);
  // Shifted stages mix every window; the single-window stage is trivially connected.
  const auto swin_b = preset("swin-B");
  for (int s = 0; s < 4; ++s) CHECK(stage_connectivity(swin_b, s).components() == 1);
  const auto no_shift = preset("swin-B-shift0000");
  const Index want_plain[] = {64, 16, 4, 1};
  for (int s = 0; s < 4; ++s) CHECK(stage_connectivity(no_shift, s).components() == want_plain[s]);
}

TEST_CASE("global oracle degenerate cases") {
  Rng rng(1);
  SUBCASE("one token gives proj(v)") {
    const auto p = random_attention(4, 2, 1, rng);
    RowMatrix<double> x = RowMatrix<double>::Random(1, 4);
    const auto out = global_attention_oracle(x, p);
    RowMatrix<double> v = x * p.qkv_weight.rightCols(4);
    v.row(0) += p.qkv_bias.tail(4).transpose();
    const RowMatrix<double> want = (v * p.proj_weight).rowwise() + p.proj_bias.transpose();
    CHECK((out - want).cwiseAbs().maxCoeff() < 1e-14);
  }
  SUBCASE("uniform queries and keys give uniform weights") {
    auto p = random_attention(4, 2, 3, rng);
    p.qkv_weight.leftCols(8).setZero();
    p.qkv_bias.head(8).setZero();
    p.bias_table.setZero();
    std::vector<RowMatrix<double>> w;
    global_attention_oracle(RowMatrix<double>::Random(9, 4), p, &w);
    REQUIRE(w.size() == 2u);
    for (const auto& m : w) CHECK((m.array() - 1.0 / 9.0).abs().maxCoeff() < 1e-15);
  }
}

TEST_CASE("group oracle agrees with the masked path") {
  Rng rng(2);
  const auto p = random_attention(6, 3, 7, rng);
  const FeatureGrid<double> g(random_uniform<double>(Shape{1, 14, 14, 6}, rng));

  const auto mask = build_shift_mask<double>(14, 14, 7, 3);
  auto ws = window_attention_forward(window_partition(cyclic_shift(g, 3, 3), 7), p, &mask);
  const auto masked = cyclic_shift(window_reverse(ws, 14, 14), -3, -3);
  const auto oracle = masked_group_oracle(g, 7, 3, p);
  CHECK(max_abs_diff(masked.values.values(), oracle.values.values()) < 1e-10);

  // Shift 0 is plain per-window attention.
  const auto plain = window_reverse(window_attention_forward(window_partition(g, 7), p), 14, 14);
  CHECK(max_abs_diff(plain.values.values(), masked_group_oracle(g, 7, 0, p).values.values()) < 1e-10);
}

TEST_CASE("error metrics") {
  const std::vector<double> a{1.0, 2.0, 3.0}, b{1.0, 2.5, 2.0};
  CHECK(max_abs_diff(a, b) == 1.0);
  CHECK(max_rel_error(a, b) == doctest::Approx(1.0 / 2.5));
  const std::vector<double> z{0.0, 0.0};
  CHECK(max_rel_error(z, z) == 0.0);
}

TEST_CASE("property suite") {
  SUBCASE("passes on a correct build") {
    const auto r = run_property_suite();
    for (const auto& p : r.results) {
      INFO(p.name << ": " << p.detail);
      CHECK(p.passed);
    }
    CHECK(r.all_passed());
    CHECK(r.failures().empty());
  }
  SUBCASE("full scope adds the geometry trace") {
    SuiteOptions o;
    o.scope = SuiteScope::full;
    o.seeds = 3;
    o.roundtrip_cases = 50;
    const auto r = run_property_suite(o);
    CHECK(r.all_passed());
    CHECK(r.results.back().name == "stage_geometry_trace");
  }
  SUBCASE("an injected softmax fault is caught") {
    SuiteOptions o;
    o.inject_softmax_fault = true;
    o.seeds = 3;
    const auto r = run_property_suite(o);
    CHECK_FALSE(r.all_passed());
    const auto f = r.failures();
    CHECK(std::find(f.begin(), f.end(), "softmax_rows_sum_to_one") != f.end());
    CHECK(r.text().find("FAIL softmax_rows_sum_to_one") != std::string::npos);
    CHECK(r.json().find("\"passed\": false") != std::string::npos);
  }
  SUBCASE("same seed gives the same report") {
    SuiteOptions o;
    o.seed = 77;
    o.seeds = 4;
    o.roundtrip_cases = 100;
    CHECK(run_property_suite(o).json() == run_property_suite(o).json());
  }
}
