#include <doctest.h>

#include "helpers.hpp"
#include "percnn/fd_solver.hpp"
#include "percnn/tape.hpp"

using namespace percnn;
using testutil::gradcheck;
using testutil::random_field;

namespace {

// Random linear functional so every output entry carries a distinct weight.
Var probe(Var x, std::uint64_t seed) {
  Rng rng(seed);
  Field w = x.value().zeros_like();
  for (double& v : w.values()) v = rng.uniform(-1, 1);
  Tape& t = *x.tape();
  return ad::sum(ad::product(std::vector<Var>{x, t.constant(w)}));
}

}  // namespace

TEST_CASE("gradient of sum(w * f) is f") {
  Rng rng(1);
  const Field f = random_field(rng, 1, {4, 4});
  Tape t;
  const Var w = t.parameter(Field::filled(1, {4, 4}, 0.3));
  const Var loss = ad::sum(ad::product(std::vector<Var>{w, t.constant(f)}));
  t.backward(loss);
  CHECK(t.grad(w) == f);
}

TEST_CASE("backward rejects a non-scalar root") {
  Tape t;
  const Var x = t.parameter(Field(1, {3}));
  CHECK_THROWS_AS(t.backward(x), SpecError);
}

TEST_CASE("unreachable parameters get an exact zero gradient") {
  Tape t;
  const Var a = t.parameter(Field::filled(1, {3}, 2.0));
  const Var b = t.parameter(Field::filled(2, {2, 2}, 5.0));
  t.backward(ad::sum(ad::scale(a, 3.0)));
  CHECK(t.grad(b) == Field(2, {2, 2}));
  for (double g : t.grad(a).values()) CHECK(g == 3.0);
}

TEST_CASE("gradient of sum(a * b) with respect to a is b") {
  Rng rng(2);
  const Field a = random_field(rng, 1, {3, 3}), b = random_field(rng, 1, {3, 3});
  Tape t;
  const Var va = t.parameter(a), vb = t.constant(b);
  t.backward(ad::sum(ad::product(std::vector<Var>{va, vb})));
  CHECK(t.grad(va) == b);
  CHECK(gradcheck([](Tape&, const std::vector<Var>& v) {
          return ad::sum(ad::product(std::vector<Var>{v[0], v[1]}));
        }, {a, b}) < 1e-6);
}

TEST_CASE("finite-difference checks for every differentiable op") {
  Rng rng(7);
  const Field x = random_field(rng, 2, {6, 7});
  const Field y = random_field(rng, 2, {6, 7});
  const Field z = random_field(rng, 2, {6, 7});
  const Field w = random_field(rng, 6, {3, 3});
  const Field b = random_field(rng, 3, {1});
  const double tol = 1e-4;

  SUBCASE("pad") {
    for (PadSpec spec : {PadSpec::periodic(2), PadSpec::dirichlet(1, {0.4}),
                         PadSpec::neumann(2, {0.2, -0.1, 0.3, 0.5})}) {
      Field xs = x;
      xs.set_spacing({0.5, 0.25});
      CHECK(gradcheck([spec](Tape&, const std::vector<Var>& v) {
              return probe(ad::pad(v[0], spec), 1);
            }, {xs}) < tol);
    }
  }
  SUBCASE("conv") {
    for (PadSpec spec : {PadSpec::periodic(), PadSpec::dirichlet(1, {0.4}),
                         PadSpec::neumann(1, {0.2})})
      CHECK(gradcheck([spec](Tape&, const std::vector<Var>& v) {
              return probe(ad::conv(v[0], v[1], v[2], spec), 2);
            }, {x, w, b}) < tol);
  }
  SUBCASE("product of three") {
    CHECK(gradcheck([](Tape&, const std::vector<Var>& v) {
            return probe(ad::product(std::vector<Var>{v[0], v[1], v[2]}), 3);
          }, {x, y, z}) < tol);
  }
  SUBCASE("axpy add sub scale") {
    CHECK(gradcheck([](Tape&, const std::vector<Var>& v) {
            return probe(ad::sub(ad::axpy(v[0], v[1], 0.3), ad::scale(ad::add(v[0], v[1]), 2.0)), 4);
          }, {x, y}) < tol);
  }
  SUBCASE("channel_scale and cross stencil") {
    const std::vector<double> taps(kSecondDerivativeTaps.begin(), kSecondDerivativeTaps.end());
    CHECK(gradcheck([taps](Tape&, const std::vector<Var>& v) {
            const Var p = ad::pad(v[0], PadSpec::periodic(2));
            return probe(ad::channel_scale(ad::cross_stencil(p, taps, {4.0, 9.0}), v[1]), 5);
          }, {x, Field(2, {1}, {}, {0.2, -0.7})}) < tol);
  }
  SUBCASE("tanh and concat") {
    CHECK(gradcheck([](Tape&, const std::vector<Var>& v) {
            const Var parts[] = {ad::tanh(v[0]), v[1]};
            return probe(ad::concat_channels(parts), 6);
          }, {x, y}) < tol);
  }
  SUBCASE("upsample both alignments") {
    const Field c = random_field(rng, 2, {4, 5});
    CHECK(gradcheck([](Tape&, const std::vector<Var>& v) {
            return probe(ad::upsample(v[0], {7, 9}, Alignment::corners), 7);
          }, {c}) < tol);
    CHECK(gradcheck([](Tape&, const std::vector<Var>& v) {
            return probe(ad::upsample(v[0], {8, 10}, Alignment::periodic), 8);
          }, {c}) < tol);
  }
  SUBCASE("gather and squared error") {
    const Field target = random_field(rng, 2, {3, 4});
    CHECK(gradcheck([target](Tape&, const std::vector<Var>& v) {
            return ad::sum_squared_error(ad::gather_strided(v[0], {2, 2}, {3, 4}), target);
          }, {x}) < tol);
  }
}

TEST_CASE("backward is deterministic") {
  Rng rng(9);
  const Field x = random_field(rng, 2, {6, 6});
  const Field w = random_field(rng, 4, {5, 5});
  auto run = [&] {
    Tape t;
    const Var vw = t.parameter(w);
    const Var out = ad::conv(t.constant(x), vw, {}, PadSpec::periodic());
    t.backward(ad::sum(ad::product(std::vector<Var>{out, out})));
    return t.grad(vw);
  };
  CHECK(run() == run());
}
