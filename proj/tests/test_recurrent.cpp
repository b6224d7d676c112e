#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "stacktag/recurrent.hpp"

#include "oracles.hpp"

#include <cmath>

using namespace stacktag;

namespace {

void randomize(Mat& m, Rng& rng, Scalar scale = 0.4) {
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) m(i, j) = scale * rng.gaussian();
}

LayerParams random_layer(Index m, Index n, bool gated, bool gate_bias, Rng& rng) {
  LayerParams p = make_layer_params(m, n, gated, gate_bias);
  randomize(p.W, rng);
  randomize(p.b, rng, 0.2);
  if (gated) {
    randomize(p.Wg, rng);
    randomize(p.Ug, rng);
    if (gate_bias) randomize(p.bg, rng, 0.2);
  }
  return p;
}

Vec random_vec(Index n, Rng& rng, Scalar scale = 0.8) {
  Vec v(n);
  for (Index i = 0; i < n; ++i) v(i) = scale * rng.gaussian();
  return v;
}

Seq random_seq(Index n, std::size_t T, Rng& rng) {
  Seq s(T);
  for (auto& v : s) v = random_vec(n, rng);
  return s;
}

// strips gate weights so a gated layer's W,b can run as NoSkip
LayerParams without_gates(const LayerParams& p) {
  LayerParams q = make_layer_params(p.input_width(), p.hidden(), false, false);
  q.W = p.W;
  q.b = p.b;
  return q;
}

constexpr Scalar kClosedGateBias = -1e9;  // sigm saturates to exactly 0

Scalar max_abs_diff(const Vec& a, const Vec& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

}  // namespace

TEST_CASE("variant names round-trip and gating classification") {
  for (SkipVariant v : all_skip_variants())
    CHECK(parse_skip_variant(to_string(v)) == v);
  CHECK_THROWS_AS(parse_skip_variant("ToNowhere"), ConfigError);
  CHECK(!is_gated(SkipVariant::NoSkip));
  CHECK(!is_gated(SkipVariant::ToGates));
  CHECK(!is_gated(SkipVariant::ToInternal));
  CHECK(!is_gated(SkipVariant::ToOutput));
  CHECK(is_gated(SkipVariant::ToInternalGated));
  CHECK(is_gated(SkipVariant::ToOutputGated));
  CHECK(is_gated(SkipVariant::ToOutputGatedSigmoidMap));
  CHECK(parse_gate_inputs("prev_and_skip") == GateInputs::PrevAndSkip);
  CHECK(parse_gate_inputs("below_and_prev") == GateInputs::BelowAndPrev);
  CHECK_THROWS_AS(parse_gate_inputs("nope"), ConfigError);
}

TEST_CASE("zero network maps any input to zero state") {
  const LayerParams p = make_layer_params(5, 3, false, false);
  Rng rng(1);
  const Vec x = random_vec(5, rng);
  const Vec h0 = Vec::Zero(3), c0 = Vec::Zero(3);
  const CellOut out = cell_forward(x, h0, c0, nullptr, p, SkipVariant::NoSkip,
                                   GateInputs::PrevAndSkip);
  CHECK(out.h.cwiseAbs().maxCoeff() == 0.0);
  CHECK(out.c.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("closed gate reproduces NoSkip exactly") {
  Rng rng(2);
  const Index n = 4;
  for (SkipVariant v : {SkipVariant::ToOutputGated, SkipVariant::ToInternalGated,
                        SkipVariant::ToOutputGatedSigmoidMap}) {
    LayerParams gated = random_layer(n, n, true, true, rng);
    gated.Wg.setZero();
    gated.Ug.setZero();
    gated.bg.setConstant(kClosedGateBias);
    const LayerParams plain = without_gates(gated);

    const Vec x = random_vec(n, rng), h = random_vec(n, rng), c = random_vec(n, rng),
              skip = random_vec(n, rng);
    const CellOut a = cell_forward(x, h, c, &skip, gated, v, GateInputs::PrevAndSkip);
    const CellOut b = cell_forward(x, h, c, nullptr, plain, SkipVariant::NoSkip,
                                   GateInputs::PrevAndSkip);
    CHECK(max_abs_diff(a.h, b.h) <= 1e-15);
    CHECK(max_abs_diff(a.c, b.c) <= 1e-15);
    CHECK(a.cache.g.cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("zero skip input reproduces NoSkip for ungated variants") {
  Rng rng(3);
  const Index n = 4;
  for (SkipVariant v :
       {SkipVariant::ToGates, SkipVariant::ToInternal, SkipVariant::ToOutput}) {
    const LayerParams p = random_layer(n, n, false, false, rng);
    const Vec x = random_vec(n, rng), h = random_vec(n, rng), c = random_vec(n, rng);
    const Vec zero_skip = Vec::Zero(n);
    const CellOut a = cell_forward(x, h, c, &zero_skip, p, v, GateInputs::PrevAndSkip);
    const CellOut b = cell_forward(x, h, c, nullptr, p, SkipVariant::NoSkip,
                                   GateInputs::PrevAndSkip);
    CHECK(max_abs_diff(a.h, b.h) <= 1e-12);
    CHECK(max_abs_diff(a.c, b.c) <= 1e-12);
  }
}

TEST_CASE("cell_forward matches the scalar-loop oracle on every variant") {
  Rng rng(1);
  const Index n = 3, m = 2;
  for (SkipVariant v : all_skip_variants()) {
    for (GateInputs gi : {GateInputs::PrevAndSkip, GateInputs::BelowAndPrev}) {
      const bool gated = is_gated(v);
      if (gi == GateInputs::BelowAndPrev && !gated) continue;
      // below_and_prev pairs the gate with x, which must match the hidden width
      const Index mm = gi == GateInputs::BelowAndPrev ? n : m;
      const LayerParams p = random_layer(mm, n, gated, true, rng);
      const Vec x = random_vec(mm, rng), h = random_vec(n, rng), c = random_vec(n, rng);
      const Vec skip = random_vec(n, rng);
      const Vec* skip_ptr = v == SkipVariant::NoSkip ? nullptr : &skip;

      const CellOut got = cell_forward(x, h, c, skip_ptr, p, v, gi);

      const oracle::Layer ol = oracle::to_layer(p);
      const oracle::Row ox = oracle::to_row(x), oh = oracle::to_row(h),
                        oc = oracle::to_row(c), os = oracle::to_row(skip);
      const oracle::CellOut ref =
          oracle::cell(ol, v, gi == GateInputs::PrevAndSkip, ox, oh, oc,
                       skip_ptr ? &os : nullptr);
      for (Index j = 0; j < n; ++j) {
        CHECK(std::abs(got.h(j) - ref.h[j]) <= 1e-12);
        CHECK(std::abs(got.c(j) - ref.c[j]) <= 1e-12);
      }
    }
  }
}

TEST_CASE("cell_backward matches finite differences for every variant") {
  const Index n = 3, m = 3;
  for (SkipVariant v : all_skip_variants()) {
    for (GateInputs gi : {GateInputs::PrevAndSkip, GateInputs::BelowAndPrev}) {
      const bool gated = is_gated(v);
      if (gi == GateInputs::BelowAndPrev && !gated) continue;
      Rng rng(5);
      LayerParams p = random_layer(m, n, gated, true, rng);
      Mat x = Mat(random_vec(m, rng)), h = Mat(random_vec(n, rng)),
          c = Mat(random_vec(n, rng)), skip = Mat(random_vec(n, rng));
      const bool has_skip = v != SkipVariant::NoSkip;

      auto loss = [&]() {
        const Vec skip_v = skip.col(0);
        const CellOut out = cell_forward(x.col(0), h.col(0), c.col(0),
                                         has_skip ? &skip_v : nullptr, p, v, gi);
        return out.h.sum();
      };

      p.zero_grads();
      const Vec skip_v = skip.col(0);
      const CellOut out = cell_forward(x.col(0), h.col(0), c.col(0),
                                       has_skip ? &skip_v : nullptr, p, v, gi);
      const CellGrads grads = cell_backward(Vec::Ones(n), Vec::Zero(n), out.cache, p,
                                            v, gi);

      std::vector<Mat*> params = {&p.W, &p.b, &x, &h, &c};
      Mat d_x = Mat(grads.d_x), d_h = Mat(grads.d_h_prev), d_c = Mat(grads.d_c_prev);
      std::vector<Mat> analytic_store = {p.gW, p.gb, d_x, d_h, d_c};
      if (has_skip) {
        params.push_back(&skip);
        analytic_store.push_back(Mat(grads.d_skip_in));
      }
      if (gated) {
        params.push_back(&p.Wg);
        params.push_back(&p.Ug);
        params.push_back(&p.bg);
        analytic_store.push_back(p.gWg);
        analytic_store.push_back(p.gUg);
        analytic_store.push_back(p.gbg);
      }
      std::vector<const Mat*> analytic;
      for (const Mat& g : analytic_store) analytic.push_back(&g);

      CHECK(grad_check(loss, params, analytic) < 1e-6);
    }
  }
}

TEST_CASE("identity skip path passes the gradient through unchanged") {
  Rng rng(6);
  const Index n = 4;
  const LayerParams p0 = random_layer(n, n, false, false, rng);
  LayerParams p = p0;
  const Vec x = random_vec(n, rng), h = random_vec(n, rng), c = random_vec(n, rng),
            skip = random_vec(n, rng);
  const CellOut out = cell_forward(x, h, c, &skip, p, SkipVariant::ToOutput,
                                   GateInputs::PrevAndSkip);
  const Vec d_h = random_vec(n, rng);
  const CellGrads g = cell_backward(d_h, Vec::Zero(n), out.cache, p,
                                    SkipVariant::ToOutput, GateInputs::PrevAndSkip);
  CHECK((g.d_skip_in - d_h).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("zero upstream gradient leaves buffers untouched") {
  Rng rng(7);
  const Index n = 3;
  LayerParams p = random_layer(n, n, true, false, rng);
  const Vec x = random_vec(n, rng), h = random_vec(n, rng), c = random_vec(n, rng),
            skip = random_vec(n, rng);
  const CellOut out = cell_forward(x, h, c, &skip, p, SkipVariant::ToOutputGated,
                                   GateInputs::PrevAndSkip);
  p.zero_grads();
  const CellGrads g = cell_backward(Vec::Zero(n), Vec::Zero(n), out.cache, p,
                                    SkipVariant::ToOutputGated, GateInputs::PrevAndSkip);
  CHECK(g.d_x.cwiseAbs().maxCoeff() == 0.0);
  CHECK(g.d_h_prev.cwiseAbs().maxCoeff() == 0.0);
  CHECK(g.d_c_prev.cwiseAbs().maxCoeff() == 0.0);
  CHECK(g.d_skip_in.cwiseAbs().maxCoeff() == 0.0);
  CHECK(p.gW.cwiseAbs().maxCoeff() == 0.0);
  CHECK(p.gWg.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("cell error paths") {
  Rng rng(8);
  const Index n = 3;
  LayerParams ungated = random_layer(n, n, false, false, rng);
  const Vec x = random_vec(n, rng), h = random_vec(n, rng), c = random_vec(n, rng),
            skip = random_vec(n, rng);
  CHECK_THROWS_AS(cell_forward(x, h, c, &skip, ungated, SkipVariant::ToOutputGated,
                               GateInputs::PrevAndSkip),
                  ConfigError);
  CHECK_THROWS_AS(cell_forward(x, h, c, &skip, ungated, SkipVariant::NoSkip,
                               GateInputs::PrevAndSkip),
                  ConfigError);
  const Vec bad = Vec::Zero(n + 1);
  CHECK_THROWS_AS(cell_forward(x, h, c, &bad, ungated, SkipVariant::ToOutput,
                               GateInputs::PrevAndSkip),
                  DimError);
  LayerParams wide = random_layer(n + 1, n, true, false, rng);
  const Vec xw = random_vec(n + 1, rng);
  CHECK_THROWS_AS(cell_forward(xw, h, c, &skip, wide, SkipVariant::ToOutputGated,
                               GateInputs::BelowAndPrev),
                  DimError);
  StepCache empty;
  LayerParams p = random_layer(n, n, false, false, rng);
  CHECK_THROWS_AS(cell_backward(Vec::Zero(n), Vec::Zero(n), empty, p,
                                SkipVariant::NoSkip, GateInputs::PrevAndSkip),
                  Error);
}

TEST_CASE("single-step layer is direction independent") {
  Rng rng(9);
  const Index n = 3, m = 2;
  const LayerParams p = random_layer(m, n, false, false, rng);
  const Seq inputs = random_seq(m, 1, rng);
  const auto fwd = directional_layer_forward(inputs, nullptr, p, SkipVariant::NoSkip,
                                             GateInputs::PrevAndSkip, Direction::Forward);
  const auto bwd = directional_layer_forward(inputs, nullptr, p, SkipVariant::NoSkip,
                                             GateInputs::PrevAndSkip, Direction::Backward);
  CHECK(max_abs_diff(fwd.outputs[0], bwd.outputs[0]) == 0.0);
}

TEST_CASE("backward direction equals forward on the reversed sequence") {
  Rng rng(10);
  const Index n = 3, m = 4;
  const LayerParams p = random_layer(m, n, false, false, rng);
  const Seq inputs = random_seq(m, 6, rng);
  Seq reversed(inputs.rbegin(), inputs.rend());

  const auto bwd = directional_layer_forward(inputs, nullptr, p, SkipVariant::NoSkip,
                                             GateInputs::PrevAndSkip, Direction::Backward);
  const auto fwd = directional_layer_forward(reversed, nullptr, p, SkipVariant::NoSkip,
                                             GateInputs::PrevAndSkip, Direction::Forward);
  for (std::size_t t = 0; t < inputs.size(); ++t)
    CHECK(max_abs_diff(bwd.outputs[t], fwd.outputs[inputs.size() - 1 - t]) <= 1e-15);
}

TEST_CASE("directional layer matches the unrolled scalar oracle") {
  Rng rng(11);
  const Index n = 3, m = 3;
  for (SkipVariant v : {SkipVariant::NoSkip, SkipVariant::ToOutputGated}) {
    const bool has_skip = v != SkipVariant::NoSkip;
    const LayerParams p = random_layer(m, n, is_gated(v), false, rng);
    const Seq inputs = random_seq(m, 4, rng);
    const Seq skips = random_seq(n, 4, rng);
    for (Direction dir : {Direction::Forward, Direction::Backward}) {
      const auto got = directional_layer_forward(inputs, has_skip ? &skips : nullptr,
                                                 p, v, GateInputs::PrevAndSkip, dir);
      std::vector<oracle::Row> oin, oskip;
      for (const Vec& x : inputs) oin.push_back(oracle::to_row(x));
      for (const Vec& s : skips) oskip.push_back(oracle::to_row(s));
      const auto ref = oracle::layer_forward(oracle::to_layer(p), v, true, oin,
                                             has_skip ? &oskip : nullptr, n,
                                             dir == Direction::Forward);
      for (std::size_t t = 0; t < inputs.size(); ++t)
        for (Index j = 0; j < n; ++j)
          CHECK(std::abs(got.outputs[t](j) - ref[t][j]) <= 1e-12);
    }
  }
}

TEST_CASE("layer rejects mismatched or empty sequences") {
  Rng rng(12);
  const LayerParams p = random_layer(2, 3, false, false, rng);
  CHECK_THROWS_AS(directional_layer_forward({}, nullptr, p, SkipVariant::NoSkip,
                                            GateInputs::PrevAndSkip, Direction::Forward),
                  Error);
  const Seq inputs = random_seq(2, 3, rng);
  const Seq skips = random_seq(3, 2, rng);
  CHECK_THROWS_AS(directional_layer_forward(inputs, &skips, p, SkipVariant::ToOutput,
                                            GateInputs::PrevAndSkip, Direction::Forward),
                  DimError);
}

TEST_CASE("one-layer stack equals the directional layer") {
  Rng rng(13);
  const Index n = 4, m = 3;
  std::vector<LayerParams> fwd = {random_layer(m, n, false, false, rng)};
  std::vector<LayerParams> bwd = {random_layer(m, n, false, false, rng)};
  const Seq inputs = random_seq(m, 5, rng);
  const StackOut st = stack_forward(inputs, fwd, bwd, SkipVariant::NoSkip,
                                    GateInputs::PrevAndSkip);
  const auto lf = directional_layer_forward(inputs, nullptr, fwd[0], SkipVariant::NoSkip,
                                            GateInputs::PrevAndSkip, Direction::Forward);
  const auto lb = directional_layer_forward(inputs, nullptr, bwd[0], SkipVariant::NoSkip,
                                            GateInputs::PrevAndSkip, Direction::Backward);
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    CHECK(max_abs_diff(st.top_fwd()[t], lf.outputs[t]) == 0.0);
    CHECK(max_abs_diff(st.top_bwd()[t], lb.outputs[t]) == 0.0);
  }
}

TEST_CASE("stack with closed gates equals the NoSkip stack") {
  Rng rng(14);
  const Index n = 3, m = 3;
  const std::size_t L = 3, T = 4;
  std::vector<LayerParams> plain_f, plain_b, gated_f, gated_b;
  for (std::size_t l = 0; l < L; ++l) {
    plain_f.push_back(random_layer(l == 0 ? m : n, n, false, false, rng));
    plain_b.push_back(random_layer(l == 0 ? m : n, n, false, false, rng));
    const bool has_gate = l >= 2;
    LayerParams gf = make_layer_params(l == 0 ? m : n, n, has_gate, has_gate);
    gf.W = plain_f[l].W;
    gf.b = plain_f[l].b;
    if (has_gate) gf.bg.setConstant(kClosedGateBias);
    LayerParams gb = make_layer_params(l == 0 ? m : n, n, has_gate, has_gate);
    gb.W = plain_b[l].W;
    gb.b = plain_b[l].b;
    if (has_gate) gb.bg.setConstant(kClosedGateBias);
    gated_f.push_back(std::move(gf));
    gated_b.push_back(std::move(gb));
  }
  const Seq inputs = random_seq(m, T, rng);
  const StackOut a = stack_forward(inputs, plain_f, plain_b, SkipVariant::NoSkip,
                                   GateInputs::PrevAndSkip);
  const StackOut b = stack_forward(inputs, gated_f, gated_b, SkipVariant::ToOutputGated,
                                   GateInputs::PrevAndSkip);
  for (std::size_t t = 0; t < T; ++t) {
    CHECK(max_abs_diff(a.top_fwd()[t], b.top_fwd()[t]) == 0.0);
    CHECK(max_abs_diff(a.top_bwd()[t], b.top_bwd()[t]) == 0.0);
  }
}

TEST_CASE("full-stack gradients pass the finite-difference check") {
  const Index n = 4, m = 3;
  const std::size_t L = 5, T = 6;
  for (SkipVariant v :
       {SkipVariant::NoSkip, SkipVariant::ToGates, SkipVariant::ToOutputGated}) {
    // seed chosen so every connected gradient clears the FD noise floor
    Rng rng(11);
    std::vector<LayerParams> fwd, bwd;
    for (std::size_t l = 0; l < L; ++l) {
      const bool gated = l >= 2 && is_gated(v);
      fwd.push_back(random_layer(l == 0 ? m : n, n, gated, false, rng));
      bwd.push_back(random_layer(l == 0 ? m : n, n, gated, false, rng));
    }
    const Seq inputs = random_seq(m, T, rng);

    auto loss = [&]() {
      const StackOut st = stack_forward(inputs, fwd, bwd, v, GateInputs::PrevAndSkip);
      Scalar sum = 0;
      for (const Vec& h : st.fwd.outputs.back()) sum += h.sum();
      for (const Vec& h : st.bwd.outputs.back()) sum += h.sum();
      return sum;
    };

    for (auto& p : fwd) p.zero_grads();
    for (auto& p : bwd) p.zero_grads();
    const StackOut st = stack_forward(inputs, fwd, bwd, v, GateInputs::PrevAndSkip);
    const Seq ones(T, Vec::Ones(n));
    stack_backward(ones, ones, st, fwd, bwd, v, GateInputs::PrevAndSkip);

    std::vector<Mat*> params;
    std::vector<Mat> analytic_store;
    for (auto* layers : {&fwd, &bwd}) {
      for (auto& p : *layers) {
        params.push_back(&p.W);
        analytic_store.push_back(p.gW);
        params.push_back(&p.b);
        analytic_store.push_back(p.gb);
        if (p.has_gate()) {
          params.push_back(&p.Wg);
          analytic_store.push_back(p.gWg);
          params.push_back(&p.Ug);
          analytic_store.push_back(p.gUg);
        }
      }
    }
    std::vector<const Mat*> analytic;
    for (const Mat& g : analytic_store) analytic.push_back(&g);
    CHECK(grad_check(loss, params, analytic) < 1e-4);
  }
}

TEST_CASE("stack backward routes embedding gradients from both directions") {
  Rng rng(16);
  const Index n = 3, m = 2;
  const std::size_t T = 4;
  std::vector<LayerParams> fwd = {random_layer(m, n, false, false, rng),
                                  random_layer(n, n, false, false, rng)};
  std::vector<LayerParams> bwd = {random_layer(m, n, false, false, rng),
                                  random_layer(n, n, false, false, rng)};
  Seq inputs = random_seq(m, T, rng);

  auto loss = [&]() {
    const StackOut st = stack_forward(inputs, fwd, bwd, SkipVariant::NoSkip,
                                      GateInputs::PrevAndSkip);
    Scalar sum = 0;
    for (const Vec& h : st.fwd.outputs.back()) sum += h.sum();
    for (const Vec& h : st.bwd.outputs.back()) sum += h.sum();
    return sum;
  };

  const StackOut st = stack_forward(inputs, fwd, bwd, SkipVariant::NoSkip,
                                    GateInputs::PrevAndSkip);
  const Seq ones(T, Vec::Ones(n));
  const Seq d_embedded = stack_backward(ones, ones, st, fwd, bwd, SkipVariant::NoSkip,
                                        GateInputs::PrevAndSkip);

  // compare against finite differences over the inputs themselves
  std::vector<Mat> input_mats;
  for (const Vec& v : inputs) input_mats.push_back(Mat(v));
  std::vector<Mat*> params;
  std::vector<Mat> analytic_store;
  for (std::size_t t = 0; t < T; ++t) {
    params.push_back(&input_mats[t]);
    analytic_store.push_back(Mat(d_embedded[t]));
  }
  auto loss_inputs = [&]() {
    Seq local(T);
    for (std::size_t t = 0; t < T; ++t) local[t] = input_mats[t].col(0);
    const StackOut s2 = stack_forward(local, fwd, bwd, SkipVariant::NoSkip,
                                      GateInputs::PrevAndSkip);
    Scalar sum = 0;
    for (const Vec& h : s2.fwd.outputs.back()) sum += h.sum();
    for (const Vec& h : s2.bwd.outputs.back()) sum += h.sum();
    return sum;
  };
  (void)loss;
  std::vector<const Mat*> analytic;
  for (const Mat& g : analytic_store) analytic.push_back(&g);
  CHECK(grad_check(loss_inputs, params, analytic) < 1e-6);
}

TEST_CASE("NoSkip two-layer chain matches finite differences on the oracle") {
  Rng rng(17);
  const Index n = 2, m = 2;
  const std::size_t T = 3;
  std::vector<LayerParams> fwd = {random_layer(m, n, false, false, rng),
                                  random_layer(n, n, false, false, rng)};
  std::vector<LayerParams> bwd = {random_layer(m, n, false, false, rng),
                                  random_layer(n, n, false, false, rng)};
  const Seq inputs = random_seq(m, T, rng);

  for (auto& p : fwd) p.zero_grads();
  for (auto& p : bwd) p.zero_grads();
  const StackOut st = stack_forward(inputs, fwd, bwd, SkipVariant::NoSkip,
                                    GateInputs::PrevAndSkip);
  const Seq ones(T, Vec::Ones(n));
  stack_backward(ones, ones, st, fwd, bwd, SkipVariant::NoSkip, GateInputs::PrevAndSkip);

  // independent loss: unrolled scalar-loop stack, differentiated numerically
  std::vector<oracle::Row> oin;
  for (const Vec& x : inputs) oin.push_back(oracle::to_row(x));
  auto oracle_loss = [&]() {
    std::vector<oracle::Layer> of = {oracle::to_layer(fwd[0]), oracle::to_layer(fwd[1])};
    std::vector<oracle::Layer> ob = {oracle::to_layer(bwd[0]), oracle::to_layer(bwd[1])};
    const auto top_f = oracle::stack_forward(of, SkipVariant::NoSkip, true, oin, n, true);
    const auto top_b = oracle::stack_forward(ob, SkipVariant::NoSkip, true, oin, n, false);
    double sum = 0;
    for (const auto& h : top_f)
      for (double v : h) sum += v;
    for (const auto& h : top_b)
      for (double v : h) sum += v;
    return sum;
  };

  const Scalar eps = 1e-5;
  for (auto* layers : {&fwd, &bwd}) {
    for (auto& p : *layers) {
      for (Index i = 0; i < p.W.size(); ++i) {
        const Scalar saved = p.W.data()[i];
        p.W.data()[i] = saved + eps;
        const Scalar up = oracle_loss();
        p.W.data()[i] = saved - eps;
        const Scalar down = oracle_loss();
        p.W.data()[i] = saved;
        const Scalar numeric = (up - down) / (2 * eps);
        const Scalar analytic = p.gW.data()[i];
        CHECK(std::abs(analytic - numeric) /
                  std::max({std::abs(analytic), std::abs(numeric), Scalar(1e-8)}) <
              1e-5);
      }
    }
  }
}

TEST_CASE("cell state growth is bounded without skips") {
  Rng rng(18);
  const Index n = 4, m = 4;
  for (int rep = 0; rep < 10; ++rep) {
    LayerParams p = random_layer(m, n, false, false, rng);
    p.b.block(n, 0, n, 1).setZero();  // forget bias 0
    Vec h = Vec::Zero(n), c = Vec::Zero(n);
    for (int t = 0; t < 12; ++t) {
      const Vec x = random_vec(m, rng, 2.0);
      const CellOut out = cell_forward(x, h, c, nullptr, p, SkipVariant::NoSkip,
                                       GateInputs::PrevAndSkip);
      for (Index j = 0; j < n; ++j)
        CHECK(std::abs(out.c(j)) <= std::abs(c(j)) + 1.0 + 1e-12);
      h = out.h;
      c = out.c;
    }
  }
}
