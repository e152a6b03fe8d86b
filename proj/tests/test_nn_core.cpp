#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>

#include "oracles.h"
#include "stepcount/errors.h"
#include "stepcount/estimators.h"
#include "stepcount/nn/ops.h"
#include "stepcount/nn/optim.h"

using namespace stepcount;
using namespace stepcount::nn;

namespace {

Tensor<double> random_tensor(Shape s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(s));
  std::uniform_real_distribution<double> d(lo, hi);
  for (auto& v : t.values()) v = d(rng);
  return t;
}

// Keeps values away from ReLU's kink so central differences stay valid.
void push_from_zero(Tensor<double>& t, double margin = 1e-2) {
  for (auto& v : t.values())
    if (std::fabs(v) < margin) v = v < 0 ? -margin - std::fabs(v) : margin + v;
}

using Build = std::function<Var(Tape<double>&, const std::vector<Var>&)>;

double evaluate(std::vector<Parameter<double>>& ps, const Build& build) {
  Tape<double> tape;
  std::vector<Var> vars;
  for (auto& p : ps) vars.push_back(tape.parameter(p));
  return tape.value(build(tape, vars))[0];
}

// Compares backward() against central differences (h = 1e-4) for every element.
void check_gradients(std::vector<Parameter<double>> ps, const Build& build, std::size_t max_checks = 100000) {
  for (auto& p : ps) p.zero_grad();
  {
    Tape<double> tape;
    std::vector<Var> vars;
    for (auto& p : ps) vars.push_back(tape.parameter(p));
    Var loss = build(tape, vars);
    REQUIRE(tape.value(loss).size() == 1);
    tape.backward(loss);
  }
  const double h = 1e-4;
  for (std::size_t k = 0; k < ps.size(); ++k) {
    const std::size_t n = ps[k].value.size();
    const std::size_t step = std::max<std::size_t>(1, n / max_checks);
    for (std::size_t i = 0; i < n; i += step) {
      const double orig = ps[k].value[i];
      ps[k].value[i] = orig + h;
      const double up = evaluate(ps, build);
      ps[k].value[i] = orig - h;
      const double down = evaluate(ps, build);
      ps[k].value[i] = orig;
      const double numeric = (up - down) / (2 * h);
      const double analytic = ps[k].grad[i];
      const double tol = std::max(1e-5, 1e-3 * std::max(std::fabs(numeric), std::fabs(analytic)));
      INFO(ps[k].name, "[", i, "] analytic=", analytic, " numeric=", numeric);
      REQUIRE(std::fabs(analytic - numeric) <= tol);
    }
  }
}

Var loss_against(Tape<double>& tape, Var y, std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x5a5a);
  return mse_loss(tape, y, random_tensor(tape.value(y).shape(), rng));
}

}  // namespace

TEST_CASE("tensor basics") {
  Tensor<float> t({2, 3}, 1.5f);
  CHECK(t.size() == 6);
  CHECK(t.rank() == 2);
  CHECK(t.all_finite());
  t[4] = std::nanf("");
  CHECK_FALSE(t.all_finite());
  CHECK(t.reshaped({3, 2}).dim(0) == 3);
  CHECK_THROWS(t.reshaped({4, 2}));
  CHECK_THROWS(Tensor<float>({2, 2}, std::vector<float>(3)));
  CHECK(shape_string({1, 64, 500}) == "(1,64,500)");
}

TEST_CASE("conv2d hand cases") {
  Tape<double> tape;
  std::mt19937_64 rng(1);
  const auto x = random_tensor({1, 1, 4, 5}, rng);
  Var xi = tape.constant(x);
  Var one = tape.constant(Tensor<double>({1, 1, 1, 1}, 1.0));
  const auto& id = tape.value(conv2d(tape, xi, one, Var{}));
  CHECK(id.shape() == x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(id[i] == x[i]);

  Var c = tape.constant(Tensor<double>({1, 1, 5, 6}, 0.75));
  Var ones = tape.constant(Tensor<double>({1, 1, 3, 3}, 1.0));
  const auto& nine = tape.value(conv2d(tape, c, ones, Var{}));
  CHECK(nine.shape() == Shape{1, 1, 3, 4});
  for (double v : nine.values()) CHECK(v == doctest::Approx(9 * 0.75));

  CHECK_THROWS_AS(conv2d(tape, xi, tape.constant(Tensor<double>({1, 2, 3, 3})), Var{}), ShapeError);
}

TEST_CASE("conv2d matches the loop oracle") {
  std::mt19937_64 rng(7);
  struct Case {
    std::size_t n, c, h, w, o, k, pad, stride;
  };
  for (const Case cs : {Case{1, 1, 4, 4, 1, 2, 0, 1}, Case{2, 3, 7, 6, 4, 3, 1, 1}, Case{1, 2, 9, 8, 3, 3, 1, 2}}) {
    const auto x = random_tensor({cs.n, cs.c, cs.h, cs.w}, rng);
    const auto k = random_tensor({cs.o, cs.c, cs.k, cs.k}, rng);
    Tape<double> tape;
    const auto& y = tape.value(conv2d(tape, tape.constant(x), tape.constant(k), Var{}, {cs.pad, cs.stride}));
    std::size_t oh, ow;
    const auto ref = oracle::conv2d({x.values().begin(), x.values().end()}, cs.n, cs.c, cs.h, cs.w,
                                    {k.values().begin(), k.values().end()}, cs.o, cs.k, cs.k, cs.pad, cs.stride, oh, ow);
    REQUIRE(y.shape() == Shape{cs.n, cs.o, oh, ow});
    for (std::size_t i = 0; i < ref.size(); ++i) REQUIRE(std::fabs(y[i] - ref[i]) <= 1e-6);
  }
}

TEST_CASE("mse loss values") {
  Tape<double> tape;
  Var y = tape.constant(Tensor<double>({2, 1}, std::vector<double>{1.0, 2.0}));
  CHECK(tape.value(mse_loss(tape, y, Tensor<double>({2, 1}, 0.0)))[0] == 2.5);
  CHECK(tape.value(mse_loss(tape, y, tape.value(y)))[0] == 0.0);
  const std::vector<double> a{1, 2}, b{0, 0};
  CHECK(mse<double>(a, b) == 2.5);
}

TEST_CASE("pooling hand cases") {
  Tape<double> tape;
  Tensor<double> x({1, 1, 2, 4}, std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8});
  const auto& p = tape.value(avg_pool2d(tape, tape.constant(x)));
  CHECK(p.shape() == Shape{1, 1, 1, 2});
  CHECK(p[0] == 3.5);
  CHECK(p[1] == 5.5);
  const auto& g = tape.value(global_mean_max_pool(tape, tape.constant(x)));
  CHECK(g.shape() == Shape{1, 2});
  CHECK(g[0] == 4.5);
  CHECK(g[1] == 8.0);
}

TEST_CASE("finite-difference gradients of every op") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    CAPTURE(seed);
    std::mt19937_64 rng(seed);
    {
      std::vector<Parameter<double>> ps{{"x", random_tensor({2, 2, 5, 6}, rng)},
                                        {"w", random_tensor({3, 2, 3, 3}, rng)},
                                        {"b", random_tensor({3}, rng)}};
      const std::size_t stride = 1 + seed % 2;
      check_gradients(ps, [&](Tape<double>& t, const std::vector<Var>& v) {
        return loss_against(t, conv2d(t, v[0], v[1], v[2], {1, stride}), seed);
      });
      check_gradients({ps[0], ps[1]}, [&](Tape<double>& t, const std::vector<Var>& v) {
        return loss_against(t, conv2d(t, v[0], v[1], Var{}), seed);
      });
    }
    {
      auto x = random_tensor({2, 3, 4, 4}, rng);
      push_from_zero(x);
      check_gradients({{"x", x}}, [&](Tape<double>& t, const std::vector<Var>& v) {
        return loss_against(t, relu(t, v[0]), seed);
      });
    }
    {
      const std::size_t k = seed % 3 == 0 ? 3 : 2;
      check_gradients({{"x", random_tensor({2, 2, 7, 9}, rng)}}, [&](Tape<double>& t, const std::vector<Var>& v) {
        return loss_against(t, avg_pool2d(t, v[0], k, 2), seed);
      });
    }
    check_gradients({{"x", random_tensor({3, 4, 3, 5}, rng)}}, [&](Tape<double>& t, const std::vector<Var>& v) {
      return loss_against(t, global_mean_max_pool(t, v[0]), seed);
    });
    check_gradients({{"x", random_tensor({4, 6}, rng)}, {"w", random_tensor({3, 6}, rng)}, {"b", random_tensor({3}, rng)}},
                    [&](Tape<double>& t, const std::vector<Var>& v) { return loss_against(t, linear(t, v[0], v[1], v[2]), seed); });
  }
}

TEST_CASE("finite-difference gradients through the full regressor") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    CnnRegressorT<double> model(seed);
    std::mt19937_64 rng(seed + 100);
    const auto batch = random_tensor({2, 1, 16, 16}, rng);
    auto loss_value = [&] {
      Tape<double> t;
      return t.value(loss_against(t, model.forward(t, batch, false), seed))[0];
    };
    for (auto* p : model.parameter_ptrs()) p->zero_grad();
    {
      Tape<double> t;
      Var loss = loss_against(t, model.forward(t, batch, true), seed);
      t.backward(loss);
    }
    // Smaller step than the per-op checks: ReLU and max-pool kinks are dense in the full network.
    const double h = 1e-6;
    for (auto& p : model.parameters()) {
      const std::size_t step = std::max<std::size_t>(1, p.value.size() / 25);
      for (std::size_t i = 0; i < p.value.size(); i += step) {
        const double orig = p.value[i];
        p.value[i] = orig + h;
        const double up = loss_value();
        p.value[i] = orig - h;
        const double down = loss_value();
        p.value[i] = orig;
        const double numeric = (up - down) / (2 * h);
        const double tol = std::max(1e-5, 1e-3 * std::max(std::fabs(numeric), std::fabs(p.grad[i])));
        INFO(p.name, "[", i, "] analytic=", p.grad[i], " numeric=", numeric);
        REQUIRE(std::fabs(p.grad[i] - numeric) <= tol);
      }
    }
  }
}

TEST_CASE("Adam one step and edge cases") {
  Parameter<double> p("p", Tensor<double>({1}, 0.5));
  p.grad[0] = 1.0;
  AdamState st;
  std::vector<Parameter<double>*> ps{&p};
  adam_step<double>(ps, st);
  // m_hat = g, sqrt(v_hat) = |g|: the step is lr * g / (|g| + eps).
  CHECK(p.value[0] - 0.5 == doctest::Approx(-1e-3 / (1.0 + 1e-8)).epsilon(1e-12));
  CHECK(st.step_count == 1);

  Parameter<double> z("z", Tensor<double>({3}, 2.0));
  AdamState sz;
  std::vector<Parameter<double>*> zs{&z};
  for (int i = 0; i < 5; ++i) adam_step<double>(zs, sz);
  for (double v : z.value.values()) CHECK(v == 2.0);

  std::mt19937_64 rng(3);
  Parameter<float> a("a", random_tensor({4}, rng).cast<float>());
  Parameter<float> b = a;
  AdamState s1, s2;
  std::vector<Parameter<float>*> pa{&a}, pb{&b};
  for (int i = 0; i < 4; ++i) {
    for (std::size_t k = 0; k < 4; ++k) a.grad[k] = b.grad[k] = 0.1f * (k + i);
    adam_step<float>(pa, s1);
    adam_step<float>(pb, s2);
  }
  CHECK(a.value.values()[0] == b.value.values()[0]);
  CHECK(std::equal(a.value.values().begin(), a.value.values().end(), b.value.values().begin()));
}

TEST_CASE("plateau scheduler") {
  PlateauScheduler s;
  for (int e = 0; e < 20; ++e) s.step(1.0 - 0.01 * e);
  CHECK(s.lr == 1e-3);

  PlateauScheduler c;
  for (int e = 1; e <= 5; ++e) c.step(1.0);
  CHECK(c.lr == 1e-3);
  CHECK(c.step(1.0));  // epoch 6
  CHECK(c.lr == doctest::Approx(9e-4).epsilon(1e-15));
  for (int e = 7; e <= 10; ++e) CHECK_FALSE(c.step(1.0));
  CHECK(c.step(1.0));  // epoch 11
  CHECK(c.lr == doctest::Approx(8.1e-4).epsilon(1e-15));

  PlateauScheduler floor;
  floor.lr = 1.1e-5;
  for (int e = 0; e < 40; ++e) floor.step(1.0);
  CHECK(floor.lr == 1e-5);
}

TEST_CASE("tape rejects non-finite values when asked") {
  Tape<double> tape;
  tape.set_check_finite(true);
  Parameter<double> p("p", Tensor<double>({1, 1}, 1e300));
  Var x = tape.parameter(p);
  CHECK_THROWS(linear(tape, x, x, tape.constant(Tensor<double>({1}, 0.0))));
}

TEST_CASE("small regressor overfits one batch") {
  CnnRegressorT<float> model(5);
  std::mt19937_64 rng(9);
  const auto batch = random_tensor({32, 1, 16, 32}, rng).cast<float>();
  Tensor<float> target({32, 1});
  std::normal_distribution<float> nd(0.0f, 1.0f);
  for (auto& v : target.values()) v = nd(rng);
  AdamState st;
  auto ptrs = model.parameter_ptrs();
  double last = 0.0;
  for (int step = 0; step < 200; ++step) {
    Tape<float> tape;
    for (auto* p : ptrs) p->zero_grad();
    Var loss = mse_loss(tape, model.forward(tape, batch), target);
    last = tape.value(loss)[0];
    tape.backward(loss);
    adam_step<float>(ptrs, st);
  }
  CHECK(last < 0.1);
}
