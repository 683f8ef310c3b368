#include <doctest.h>

#include <sstream>

#include "helpers.hpp"
#include "percnn/model.hpp"

using namespace percnn;
using testutil::max_abs_diff;
using testutil::random_field;

namespace {

ModelConfig small_config(std::size_t filter = 1, std::size_t n = 8) {
  ModelConfig c;
  c.state_channels = 2;
  c.grid = {n, n};
  c.spacing = {0.1, 0.1};
  c.coarse_grid = {n / 2, n / 2};
  c.n_parallel = 2;
  c.filter_size = filter;
  c.n_channels = 2;
  c.isg_channels = 3;
  c.isg_filter_size = 3;
  c.dt = 0.01;
  return c;
}

// 1x1 filter bank entry (out, in) for a bank with `in` input channels.
void set_pointwise(Field& w, std::size_t in_channels, std::size_t out, std::size_t in, double v) {
  w[out * in_channels + in] = v;
}

Field shift_rows(const Field& f, std::size_t s) {
  Field out = f;
  const std::size_t n = f.extents()[0];
  const std::size_t row = f.cells() / n;
  for (std::size_t c = 0; c < f.channels(); ++c)
    for (std::size_t i = 0; i < f.cells(); ++i)
      out.channel(c)[((i / row + s) % n) * row + i % row] = f.channel(c)[i];
  return out;
}

}  // namespace

TEST_CASE("config validation") {
  ModelConfig c = small_config();
  CHECK_NOTHROW(c.validate());
  ModelConfig bad = c;
  bad.n_parallel = 1;
  CHECK_THROWS_AS(bad.validate(), SpecError);
  bad = c;
  bad.filter_size = 4;
  CHECK_THROWS_AS(bad.validate(), SpecError);
  bad = c;
  bad.dt = 0;
  CHECK_THROWS_AS(bad.validate(), SpecError);
  bad = c;
  bad.grid = {4, 4};
  bad.coarse_grid = {2, 2};
  CHECK_THROWS_AS(bad.validate(), DimensionError);
  bad = c;
  bad.frozen = {{0, 0, FilterRole::fixed_dx, 0}};
  CHECK_THROWS_AS(bad.validate(), SpecError);  // needs filter_size 5
  bad.filter_size = 5;
  CHECK_NOTHROW(bad.validate());
  bad.frozen.push_back({0, 0, FilterRole::fixed_dy, 1});
  CHECK_THROWS_AS(bad.validate(), SpecError);
  bad.frozen = {{0, 0, FilterRole::fixed_dz, 0}};
  CHECK_THROWS_AS(bad.validate(), SpecError);
}

TEST_CASE("parameter shapes and names") {
  ModelConfig c = small_config(5);
  c.n_parallel = 4;
  c.n_channels = 8;
  const ModelParams p = zero_params(c);
  CHECK(p.layer_w.size() == 4);
  CHECK(p.layer_w[0].channels() == 16);
  CHECK(p.layer_w[0].extents() == Extents{5, 5});
  CHECK(p.agg_w.channels() == 16);
  CHECK(p.agg_w.extents() == Extents{1, 1});
  CHECK(p.isg_w3.channels() == 2 * (2 + 3));
  CHECK(p.diff_coef.channels() == 2);
  CHECK(p.tensors().size() == p.names().size());
  CHECK(p.names()[6] == "layer0_w");
  c.highway = Highway::none;
  CHECK(zero_params(c).diff_coef.empty());
}

TEST_CASE("init is seeded, small and keeps frozen entries") {
  ModelConfig c = small_config(5);
  c.pointwise_free = true;
  c.frozen = {{0, 1, FilterRole::fixed_dx, 0}, {1, 1, FilterRole::fixed_laplacian, 1}};
  const ModelParams a = init_params(c, 3), b = init_params(c, 3), d = init_params(c, 4);
  CHECK(a.layer_w[0] == b.layer_w[0]);
  CHECK_FALSE(a.layer_w[0] == d.layer_w[0]);
  CHECK(a.diff_coef[0] == 0.05);
  const Field st = stencil_filter(FilterRole::fixed_dx, 0, c);
  for (std::size_t i = 0; i < st.size(); ++i) CHECK(a.layer_w[0][2 * 25 + i] == st[i]);
  CHECK(a.layer_b[0][1] == 0.0);
  // Free filters keep only the centre tap.
  for (std::size_t t = 0; t < 25; ++t)
    if (t != 12) CHECK(a.layer_w[0][t] == 0.0);
  CHECK(a.layer_w[0][12] != 0.0);
  const auto masks = trainable_masks(c);
  CHECK(masks[6][2 * 25 + 12] == 0.0);
  CHECK(masks[6][12] == 1.0);
  CHECK(masks[6][13] == 0.0);
  CHECK(masks[7][1] == 0.0);
  CHECK(masks.back()[0] == 1.0);
}

TEST_CASE("frozen stencils match the finite-difference operators") {
  ModelConfig c = small_config(5, 12);
  c.frozen = {{0, 0, FilterRole::fixed_dx, 1}, {0, 1, FilterRole::fixed_dy, 0},
              {1, 0, FilterRole::fixed_laplacian, 1}};
  Rng rng(2);
  Field s = random_field(rng, 2, c.grid);
  s.set_spacing(c.spacing);
  const Field dx = conv(s, stencil_filter(FilterRole::fixed_dx, 1, c), {}, PadSpec::periodic());
  const Field dy = conv(s, stencil_filter(FilterRole::fixed_dy, 0, c), {}, PadSpec::periodic());
  const Field lap =
      conv(s, stencil_filter(FilterRole::fixed_laplacian, 1, c), {}, PadSpec::periodic());
  const Field rdx = first_derivative(s, 1), rdy = first_derivative(s, 0), rlap = laplacian(s);
  for (std::size_t i = 0; i < s.cells(); ++i) {
    CHECK(std::abs(dx[i] - rdx.channel(1)[i]) < 1e-10);
    CHECK(std::abs(dy[i] - rdy.channel(0)[i]) < 1e-10);
    CHECK(std::abs(lap[i] - rlap.channel(1)[i]) < 1e-8);
  }
}

TEST_CASE("ISG passes the upsampled input through at construction") {
  ModelConfig c = small_config();
  c.grid = {9, 9};
  c.coarse_grid = {5, 5};
  ModelParams p = zero_params(c);
  for (std::size_t o = 0; o < 2; ++o) p.isg_w3[o * 5 + o] = 1.0;
  Rng rng(1);
  const Field coarse = random_field(rng, 2, {5, 5});
  const Field u0 = isg_forward(coarse, p, c);
  CHECK(max_abs_diff(u0, upsample(coarse, {9, 9})) == 0.0);

  // Same for init_params once the hidden part is zeroed.
  ModelParams q = init_params(c, 1);
  for (std::size_t o = 0; o < 2; ++o)
    for (std::size_t i = 2; i < 5; ++i) q.isg_w3[o * 5 + i] = 0.0;
  CHECK(max_abs_diff(isg_forward(coarse, q, c), upsample(coarse, {9, 9})) == 0.0);
  CHECK_THROWS_AS(isg_forward(random_field(rng, 2, {4, 4}), p, c), ShapeError);
}

TEST_CASE("ISG output shape in the burgers configuration") {
  ModelConfig c;
  c.grid = {101, 101};
  c.spacing = {0.01, 0.01};
  c.coarse_grid = {51, 51};
  c.isg_channels = 8;
  c.n_parallel = 4;
  c.n_channels = 8;
  c.filter_size = 5;
  const ModelParams p = init_params(c, 0);
  const Field u0 = isg_forward(Field(2, {51, 51}), p, c);
  CHECK(u0.channels() == 2);
  CHECK(u0.extents() == Extents{101, 101});
}

TEST_CASE("passthrough residual gives (1 + dt) U") {
  ModelConfig c = small_config();
  c.highway = Highway::none;
  c.n_parallel = 3;
  ModelParams p = zero_params(c);
  // Layers 0 and 1: constant one. Layer 2: identity. Aggregation: identity.
  for (std::size_t i = 0; i < 2; ++i) p.layer_b[i].fill(1.0);
  set_pointwise(p.layer_w[2], 2, 0, 0, 1.0);
  set_pointwise(p.layer_w[2], 2, 1, 1, 1.0);
  set_pointwise(p.agg_w, 2, 0, 0, 1.0);
  set_pointwise(p.agg_w, 2, 1, 1, 1.0);
  Rng rng(3);
  const Field u = random_field(rng, 2, c.grid);
  CHECK(pi_block_residual(u, p, c) == u);
  const Trajectory t = rollout_from(u, p, c, 1);
  for (std::size_t i = 0; i < u.size(); ++i) CHECK(t[1][i] == u[i] + c.dt * u[i]);
}

TEST_CASE("two selecting layers give u*v") {
  ModelConfig c = small_config();
  c.grid = {2, 2};
  c.coarse_grid = {2, 2};
  c.highway = Highway::none;
  c.isg_filter_size = 1;
  ModelParams p = zero_params(c);
  for (std::size_t j = 0; j < 2; ++j) {
    set_pointwise(p.layer_w[0], 2, j, 0, 1.0);
    set_pointwise(p.layer_w[1], 2, j, 1, 1.0);
    set_pointwise(p.agg_w, 2, j, j, 1.0);
  }
  const Field u(2, {2, 2}, {}, {1, 2, 3, 4, 0.5, -1, 2, 0.25});
  const Field f = pi_block_residual(u, p, c);
  const std::vector<double> uv{0.5, -2, 6, 1};
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(f.channel(0)[i] == uv[i]);
    CHECK(f.channel(1)[i] == uv[i]);
  }
}

TEST_CASE("polynomial representability: u v^2 with three pointwise layers") {
  ModelConfig c = small_config();
  c.n_parallel = 3;
  c.n_channels = 1;
  c.highway = Highway::none;
  ModelParams p = zero_params(c);
  set_pointwise(p.layer_w[0], 2, 0, 0, 1.0);
  set_pointwise(p.layer_w[1], 2, 0, 1, 1.0);
  set_pointwise(p.layer_w[2], 2, 0, 1, 1.0);
  p.agg_w[0] = -1.0;
  p.agg_w[1] = 1.0;
  Rng rng(4);
  const Field u = random_field(rng, 2, c.grid);
  const Field f = pi_block_residual(u, p, c);
  for (std::size_t i = 0; i < u.cells(); ++i) {
    const double a = u.channel(0)[i], b = u.channel(1)[i];
    CHECK(std::abs(f.channel(0)[i] + a * b * b) < 1e-12);
    CHECK(std::abs(f.channel(1)[i] - a * b * b) < 1e-12);
  }
}

TEST_CASE("highway diffusion") {
  ModelConfig c = small_config(1, 12);
  Rng rng(5);
  Field u = random_field(rng, 2, c.grid);
  u.set_spacing(c.spacing);
  CHECK(highway_diffusion(u, Field(2, {1}), c) == u.zeros_like());
  const Field constant = Field::filled(2, c.grid, 0.7, c.spacing);
  CHECK(highway_diffusion(constant, Field(2, {1}, {}, {0.3, 4.0}), c) == constant.zeros_like());

  // Diffusion-only model step equals an explicit Euler diffusion step.
  ModelParams p = zero_params(c);
  p.diff_coef[0] = 0.2;
  p.diff_coef[1] = 0.1;
  const Trajectory t = rollout_from(u, p, c, 1);
  const Field lap = laplacian(u);
  for (std::size_t i = 0; i < u.cells(); ++i) {
    CHECK(std::abs(t[1].channel(0)[i] - (u.channel(0)[i] + c.dt * 0.2 * lap.channel(0)[i])) < 1e-12);
    CHECK(std::abs(t[1].channel(1)[i] - (u.channel(1)[i] + c.dt * 0.1 * lap.channel(1)[i])) < 1e-12);
  }
  ModelConfig tiny = c;
  tiny.grid = {4, 4};
  tiny.coarse_grid = {4, 4};
  CHECK_THROWS_AS(highway_diffusion(Field(2, {4, 4}), p.diff_coef, tiny), DimensionError);
}

TEST_CASE("rollout") {
  ModelConfig c = small_config(3, 10);
  const ModelParams p = init_params(c, 9);
  Rng rng(6);
  const Field coarse = random_field(rng, 2, c.coarse_grid);
  const Trajectory zero = rollout(coarse, p, c, 0);
  REQUIRE(zero.size() == 1);
  CHECK(max_abs_diff(zero[0], isg_forward(coarse, p, c)) == 0.0);

  const Trajectory t = rollout(coarse, p, c, 4);
  CHECK(t.size() == 5);
  CHECK(t.dt == c.dt);
  // Residual consistency: each step is exactly U + dt F(U).
  for (std::size_t k = 0; k < 4; ++k) {
    const Field f = pi_block_residual(t[k], p, c);
    CHECK(t[k + 1] == axpy(t[k], f, c.dt));
    for (std::size_t i = 0; i < f.size(); ++i)
      CHECK(std::abs((t[k + 1][i] - t[k][i]) / c.dt - f[i]) < 1e-10);
  }
  // Periodic shift equivariance.
  const Field u = random_field(rng, 2, c.grid);
  const Trajectory a = rollout_from(shift_rows(u, 3), p, c, 3);
  const Trajectory b = rollout_from(u, p, c, 3);
  CHECK(a[3] == shift_rows(b[3], 3));
}

TEST_CASE("taped rollout matches the plain one") {
  ModelConfig c = small_config(5, 10);
  const ModelParams p = init_params(c, 2);
  Rng rng(7);
  const Field coarse = random_field(rng, 2, c.coarse_grid);
  const Trajectory plain = rollout(coarse, p, c, 3);
  Tape tape;
  const BoundParams b = bind_params(tape, p, true);
  const auto states = rollout(b, c, tape.constant(coarse), 3);
  for (std::size_t k = 0; k < 4; ++k) CHECK(states[k].value().values().size() == plain[k].size());
  for (std::size_t k = 0; k < 4; ++k) CHECK(max_abs_diff(states[k].value(), plain[k]) == 0.0);
}

TEST_CASE("divergence is reported with its step") {
  ModelConfig c = small_config();
  c.highway = Highway::none;
  ModelParams p = zero_params(c);
  p.layer_b[0].fill(1e4);
  p.layer_b[1].fill(1e4);
  p.agg_w.fill(1.0);
  try {
    rollout_from(Field::filled(2, c.grid, 1.0), p, c, 10);
    FAIL("expected divergence");
  } catch (const DivergenceError& e) {
    CHECK(e.step() == 1);
  }
}

TEST_CASE("parameter validation names the offending tensor") {
  ModelConfig c = small_config();
  ModelParams p = zero_params(c);
  p.agg_w = Field(3, {1, 1});
  try {
    validate_params(p, c);
    FAIL("expected shape error");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("agg_w") != std::string::npos);
  }
}

TEST_CASE("checkpoint round trip is bit identical") {
  ModelConfig c = small_config(5);
  c.bc = PadMode::neumann;
  c.bc_values = {0.0, 0.1, 0.2, 0.3};
  c.pointwise_free = true;
  c.frozen = {{1, 0, FilterRole::fixed_dy, 1}};
  c.steps_train = 40;
  c.steps_extrapolate = 60;
  const ModelParams p = init_params(c, 11);
  std::stringstream ss;
  save_checkpoint(ss, c, p);
  const Checkpoint ck = load_checkpoint(ss);
  CHECK(ck.config == c);
  const auto a = p.tensors(), b = ck.params.tensors();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(*a[i] == *b[i]);

  std::stringstream again;
  save_checkpoint(again, ck.config, ck.params);
  CHECK(again.str() == ss.str());

  std::string bytes = ss.str();
  bytes[0] = 'X';
  std::stringstream corrupt(bytes);
  CHECK_THROWS_AS(load_checkpoint(corrupt), IoError);
  std::stringstream truncated(ss.str().substr(0, ss.str().size() - 9));
  CHECK_THROWS_AS(load_checkpoint(truncated), IoError);
}
