#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>

#include "../common/gradcheck.hpp"
#include "canopy/error.hpp"
#include "canopy/nn/graph.hpp"
#include "canopy/nn/kernels.hpp"
#include "canopy/nn/unet.hpp"
#include "helpers.hpp"

using namespace canopy;
using namespace canopy::nn;

namespace {

template <class T>
Tensor<T> random_tensor(Shape s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<T> t(std::move(s));
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& v : t.storage()) v = T(u(rng));
  return t;
}

// Same-padded cross-correlation written from the definition.
Tensor<double> conv_oracle(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>& b) {
  const std::size_t N = x.dim(0), Ci = x.dim(1), H = x.dim(2), W = x.dim(3), Co = w.dim(0), k = w.dim(2);
  const std::ptrdiff_t p = std::ptrdiff_t(k / 2);
  Tensor<double> y({N, Co, H, W});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t o = 0; o < Co; ++o)
      for (std::size_t r = 0; r < H; ++r)
        for (std::size_t c = 0; c < W; ++c) {
          double s = b[o];
          for (std::size_t i = 0; i < Ci; ++i)
            for (std::size_t a = 0; a < k; ++a)
              for (std::size_t e = 0; e < k; ++e) {
                const std::ptrdiff_t rr = std::ptrdiff_t(r + a) - p, cc = std::ptrdiff_t(c + e) - p;
                if (rr < 0 || cc < 0 || rr >= std::ptrdiff_t(H) || cc >= std::ptrdiff_t(W)) continue;
                s += w.at(o, i, a, e) * x.at(n, i, std::size_t(rr), std::size_t(cc));
              }
          y.at(n, o, r, c) = s;
        }
  return y;
}

double max_abs_diff(const Tensor<double>& a, const Tensor<double>& b) {
  REQUIRE(a.shape() == b.shape());
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

UNetConfig small_config(Variant v, std::vector<Task> tasks, std::size_t bands = 5) {
  UNetConfig c;
  c.variant = v;
  c.tasks = std::move(tasks);
  c.in_bands = bands;
  c.depth = 2;
  c.base_channels = 4;
  return c;
}

}  // namespace

TEST_CASE("shape preconditions") {
  CHECK(conv2d_output_shape({2, 3, 8, 8}, {5, 3, 3, 3}, {5}) == Shape{2, 5, 8, 8});
  CHECK_THROWS_AS(conv2d_output_shape({2, 3, 8}, {5, 3, 3, 3}, {5}), ShapeError);
  CHECK_THROWS_AS(conv2d_output_shape({2, 4, 8, 8}, {5, 3, 3, 3}, {5}), ShapeError);
  CHECK_THROWS_AS(conv2d_output_shape({2, 3, 8, 8}, {5, 3, 2, 2}, {5}), ShapeError);
  CHECK_THROWS_AS(conv2d_output_shape({2, 3, 8, 8}, {5, 3, 3, 1}, {5}), ShapeError);
  CHECK_THROWS_AS(conv2d_output_shape({2, 3, 8, 8}, {5, 3, 3, 3}, {4}), ShapeError);
  CHECK(maxpool2_output_shape({1, 2, 6, 4}) == Shape{1, 2, 3, 2});
  CHECK_THROWS_AS(maxpool2_output_shape({1, 2, 5, 4}), ShapeError);
  CHECK(upsample_concat_output_shape({1, 3, 2, 2}, {1, 4, 4, 4}) == Shape{1, 7, 4, 4});
  CHECK_THROWS_AS(upsample_concat_output_shape({1, 3, 2, 2}, {1, 4, 5, 4}), ShapeError);
  CHECK_THROWS_AS(Tensor<float>(Shape{2, 2}, std::vector<float>(3)), ShapeError);
}

TEST_CASE("conv2d matches the definition in both backends") {
  std::mt19937_64 rng(1);
  for (std::size_t k : {1, 3, 5}) {
    const auto x = random_tensor<double>({2, 3, 7, 9}, rng);
    const auto w = random_tensor<double>({4, 3, k, k}, rng);
    const auto b = random_tensor<double>({4}, rng);
    const auto want = conv_oracle(x, w, b);
    Tensor<double> y1, y2;
    reference::conv2d_forward(x, w, b, y1);
    kernels::conv2d_forward(x, w, b, y2);
    CHECK(max_abs_diff(y1, want) < 1e-12);
    CHECK(max_abs_diff(y2, want) < 1e-12);
  }
}

TEST_CASE("conv2d examples") {
  for (auto backend : {Backend::fast, Backend::reference}) {
    std::mt19937_64 rng(11);
    const auto x = random_tensor<double>({1, 2, 5, 4}, rng);
    Tensor<double> eye({2, 2, 1, 1}), zero({2}), y;
    eye.at(0, 0, 0, 0) = eye.at(1, 1, 0, 0) = 1.0;
    Graph<double> g(backend);
    y = g.value(g.conv2d(g.constant(x), g.constant(eye), g.constant(zero)));
    CHECK(y.storage() == x.storage());

    const double c = 1.75;
    Graph<double> g2(backend);
    const auto ones = g2.constant(Tensor<double>({1, 1, 3, 3}, 1.0));
    y = g2.value(g2.conv2d(g2.constant(Tensor<double>({1, 1, 6, 6}, c)), ones, g2.constant(Tensor<double>({1}))));
    CHECK(y.at(0, 0, 2, 3) == 9 * c);
    CHECK(y.at(0, 0, 0, 0) == 4 * c);  // corner sees 4 cells under same padding
  }
}

TEST_CASE("fast kernels agree with the reference, forward and backward") {
  std::mt19937_64 rng(2);
  const auto x = random_tensor<double>({3, 6, 16, 12}, rng);
  const auto w = random_tensor<double>({5, 6, 3, 3}, rng);
  const auto b = random_tensor<double>({5}, rng);
  const auto dy = random_tensor<double>({3, 5, 16, 12}, rng);
  Tensor<double> dx1(x.shape()), dw1(w.shape()), db1(b.shape()), dx2(x.shape()), dw2(w.shape()), db2(b.shape());
  reference::conv2d_backward(x, w, dy, &dx1, dw1, db1);
  kernels::conv2d_backward(x, w, dy, &dx2, dw2, db2);
  CHECK(max_abs_diff(dx1, dx2) < 1e-11);
  CHECK(max_abs_diff(dw1, dw2) < 1e-11);
  CHECK(max_abs_diff(db1, db2) < 1e-11);

  Tensor<double> p1, p2, g1(x.shape()), g2(x.shape());
  std::vector<std::uint32_t> a1, a2;
  reference::maxpool2_forward(x, p1, a1);
  kernels::maxpool2_forward(x, p2, a2);
  CHECK(p1.storage() == p2.storage());
  CHECK(a1 == a2);
  const auto dp = random_tensor<double>(p1.shape(), rng);
  reference::maxpool2_backward(dp, a1, g1);
  kernels::maxpool2_backward(dp, a2, g2);
  CHECK(g1.storage() == g2.storage());

  const auto low = random_tensor<double>({3, 2, 8, 6}, rng);
  Tensor<double> u1, u2;
  reference::upsample_concat_forward(low, x, u1);
  kernels::upsample_concat_forward(low, x, u2);
  CHECK(u1.storage() == u2.storage());
}

TEST_CASE("maxpool2") {
  Tensor<double> x({1, 1, 4, 4});
  for (std::size_t i = 0; i < 16; ++i) x[i] = double(i);  // strictly increasing
  Tensor<double> y;
  std::vector<std::uint32_t> arg;
  kernels::maxpool2_forward(x, y, arg);
  CHECK(y.storage() == std::vector<double>{5, 7, 13, 15});
  Tensor<double> c({1, 2, 4, 6}, 3.0);
  kernels::maxpool2_forward(c, y, arg);
  for (double v : y.storage()) CHECK(v == 3.0);
  // The gradient goes to the argmax cell only.
  kernels::maxpool2_forward(x, y, arg);
  Tensor<double> dy({1, 1, 2, 2}, 1.0), dx({1, 1, 4, 4});
  kernels::maxpool2_backward(dy, arg, dx);
  for (std::size_t i = 0; i < 16; ++i) CHECK(dx[i] == ((i == 5 || i == 7 || i == 13 || i == 15) ? 1.0 : 0.0));
}

TEST_CASE("upsample_concat") {
  Tensor<double> x({1, 1, 1, 1}, 4.0), skip({1, 2, 2, 2}, 1.0), y;
  kernels::upsample_concat_forward(x, skip, y);
  CHECK(y.shape() == Shape{1, 3, 2, 2});
  for (std::size_t i = 0; i < 4; ++i) CHECK(y[i] == 4.0);  // 1x1 -> 2x2 replication
  for (std::size_t i = 4; i < 12; ++i) CHECK(y[i] == 1.0);
  Tensor<double> dy(y.shape(), 1.0), dx(x.shape()), dskip(skip.shape());
  kernels::upsample_concat_backward(dy, &dx, &dskip);
  CHECK(dx[0] == 4.0);
  CHECK(dskip[0] == 1.0);
  Tensor<double> cst({2, 3, 2, 3}, 0.25), s2({2, 1, 4, 6}, 0.0);
  kernels::upsample_concat_forward(cst, s2, y);
  CHECK(y.shape() == Shape{2, 4, 4, 6});
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t i = 0; i < 24; ++i) CHECK(y.at(n, c, i / 6, i % 6) == 0.25);
}

TEST_CASE("activations") {
  Tensor<double> x(Shape{3}, std::vector<double>{0.0, -2.0, 3.0}), y;
  kernels::sigmoid_forward(x, y);
  CHECK(y[0] == 0.5);
  kernels::relu_forward(x, y);
  CHECK(y[1] == 0.0);
  CHECK(y[2] == 3.0);
}

TEST_CASE("layer gradients match finite differences") {
  std::mt19937_64 rng(3);
  auto x = random_tensor<double>({2, 3, 6, 6}, rng);
  auto w = random_tensor<double>({4, 3, 3, 3}, rng);
  auto b = random_tensor<double>({4}, rng);
  const auto probe = random_tensor<double>({2, 4, 6, 6}, rng);
  // Loss = sum(probe * act(conv(x))) so every output element matters.
  for (const std::string act : {"none", "relu", "sigmoid"}) {
    for (auto backend : {Backend::reference, Backend::fast}) {
      const gradcheck::Builder build = [&](gradcheck::G& g) {
        const auto xi = g.parameter(x, "x"), wi = g.parameter(w, "w"), bi = g.parameter(b, "b");
        auto y = g.conv2d(xi, wi, bi);
        if (act == "relu") y = g.relu(y);
        if (act == "sigmoid") y = g.sigmoid(y);
        const Tensor<double>* pr = &probe;
        double s = 0;
        for (std::size_t i = 0; i < pr->size(); ++i) s += (*pr)[i] * g.value(y)[i];
        const auto out = g.custom("probe", Tensor<double>(Shape{1}, s), {y}, [pr](gradcheck::G& gg, gradcheck::G::Id self) {
          auto* d = gg.grad_slot(gg.inputs(self)[0]);
          for (std::size_t i = 0; i < pr->size(); ++i) (*d)[i] += (*pr)[i] * gg.grad(self)[0];
        });
        return std::pair{out, std::vector<gradcheck::G::Id>{xi, wi, bi}};
      };
      const auto r = gradcheck::check(build, {{"x", &x}, {"w", &w}, {"b", &b}}, 400, 7, 1e-5, 1e-7, backend);
      CHECK(r.checked >= 300);
      CHECK_MESSAGE(r.max_rel <= 1e-6, act, " ", r.worst);
    }
  }
  // Pooling and upsampling.
  auto u = random_tensor<double>({1, 2, 4, 4}, rng);
  auto skip = random_tensor<double>({1, 3, 8, 8}, rng);
  const auto probe2 = random_tensor<double>({1, 5, 8, 8}, rng);
  const gradcheck::Builder build2 = [&](gradcheck::G& g) {
    const auto ui = g.parameter(u, "u"), si = g.parameter(skip, "skip");
    const auto pooled = g.maxpool2(si);  // [1,3,4,4]
    const auto z = g.upsample_concat(g.linear(ui), si);
    const Tensor<double>* pr = &probe2;
    double s = 0;
    for (std::size_t i = 0; i < pr->size(); ++i) s += (*pr)[i] * g.value(z)[i];
    const double extra = [&] {
      double t = 0;
      for (double v : g.value(pooled).storage()) t += v * v;
      return t;
    }();
    const auto out = g.custom("probe", Tensor<double>(Shape{1}, s + extra), {z, pooled},
                              [pr](gradcheck::G& gg, gradcheck::G::Id self) {
                                const auto& in = gg.inputs(self);
                                const double d = gg.grad(self)[0];
                                auto* dz = gg.grad_slot(in[0]);
                                for (std::size_t i = 0; i < pr->size(); ++i) (*dz)[i] += (*pr)[i] * d;
                                auto* dp = gg.grad_slot(in[1]);
                                const auto& pv = gg.value(in[1]);
                                for (std::size_t i = 0; i < pv.size(); ++i) (*dp)[i] += 2 * pv[i] * d;
                              });
    return std::pair{out, std::vector<gradcheck::G::Id>{ui, si}};
  };
  const auto r2 = gradcheck::check(build2, {{"u", &u}, {"skip", &skip}}, 1000, 9);
  CHECK(r2.checked == u.size() + skip.size());
  CHECK_MESSAGE(r2.max_rel <= 1e-6, r2.worst);
}

TEST_CASE("graph bookkeeping") {
  Graph<double> g(Backend::reference);
  g.set_finite_check(true);
  Tensor<double> w({1}, 1.0);
  const auto c = g.constant(Tensor<double>(Shape{1}, 2.0));
  CHECK_FALSE(g.requires_grad(c));
  CHECK(g.grad_slot(c) == nullptr);
  const auto p = g.parameter(w, "w");
  CHECK(g.label(p) == "w");
  const auto s = g.weighted_sum({c, p}, {3.0, 4.0});
  CHECK(g.value(s)[0] == 10.0);
  g.backward(s);
  CHECK(g.grad(p)[0] == 4.0);
  CHECK_THROWS_AS(g.backward(g.constant(Tensor<double>(Shape{2}))), ShapeError);
  CHECK_THROWS_AS(g.weighted_sum({c}, {1.0, 2.0}), ShapeError);
  CHECK_THROWS_AS(g.constant(Tensor<double>(Shape{1}, std::nan(""))), NumericalError);
}

TEST_CASE("UNet structure") {
  const UNetConfig full{Variant::fully_shared, {Task::tree_mask, Task::pixel_height, Task::aux_mask}, 14, 2, 16};
  UNetConfig part = full;
  part.variant = Variant::partially_shared;
  const UNetModel<float> f(full), p(part);
  CHECK(f.parameter_count() == 119891);
  CHECK(p.parameter_count() == 212243);
  CHECK(p.parameter_count() > f.parameter_count());

  // Hand count for the fully shared model: two 3x3 convs per block, 1x1 heads.
  auto block = [](std::size_t i, std::size_t o) { return (i * 9 * o + o) + (o * 9 * o + o); };
  const std::size_t expect = block(14, 16) + block(16, 32) + block(32, 64) + block(64 + 32, 32) +
                             block(32 + 16, 16) + 3 * (16 + 1);
  CHECK(f.parameter_count() == expect);
  CHECK(p.parameter_count() == expect + 2 * (block(96, 32) + block(48, 16)));

  for (const auto& np : f.parameters()) CHECK(np.name.find("dec.") == std::string::npos);
  CHECK_NOTHROW(p.parameter("dec.aux_mask.0.conv1.weight"));
  CHECK_NOTHROW(f.parameter("head.pixel_height.weight"));
  CHECK_THROWS_AS(f.parameter("nope"), ConfigError);

  std::mt19937_64 rng(4);
  for (const auto& cfg : {small_config(Variant::fully_shared, {Task::tree_mask, Task::aux_mask}),
                          small_config(Variant::partially_shared, {Task::pixel_height, Task::tree_mask}),
                          small_config(Variant::single_task, {Task::pixel_height})}) {
    const auto m = init_params<float>(cfg, 1);
    const auto x = random_tensor<float>({2, 5, 16, 16}, rng, 0, 1);
    const auto out = m.forward(x);
    CHECK(out.size() == cfg.tasks.size());
    for (const auto& [task, t] : out) {
      CHECK(cfg.has_task(task));
      CHECK(t.shape() == Shape{2, 1, 16, 16});
      if (is_mask_task(task)) {
        for (float v : t.storage()) CHECK((v > 0.0f && v < 1.0f));
      }
    }
    CHECK_THROWS_AS(m.forward(random_tensor<float>({1, 4, 16, 16}, rng)), ShapeError);
    CHECK_THROWS_AS(m.forward(random_tensor<float>({1, 5, 18, 16}, rng)), ShapeError);
  }
  UNetConfig bad = small_config(Variant::single_task, {Task::tree_mask, Task::aux_mask});
  CHECK_THROWS_AS(UNetModel<float>{bad}, ConfigError);
  bad = small_config(Variant::fully_shared, {Task::tree_mask, Task::tree_mask});
  CHECK_THROWS_AS(UNetModel<float>{bad}, ConfigError);
  CHECK_THROWS_AS(parse_variant("both"), ConfigError);
  CHECK_THROWS_AS(parse_task("height"), ConfigError);
}

TEST_CASE("init, backends and precision") {
  const auto cfg = small_config(Variant::fully_shared, {Task::tree_mask, Task::pixel_height, Task::aux_mask});
  const auto a = init_params<float>(cfg, 42), b = init_params<float>(cfg, 42), c = init_params<float>(cfg, 43);
  bool differ = false;
  for (std::size_t i = 0; i < a.parameters().size(); ++i) {
    CHECK(a.parameters()[i].value.storage() == b.parameters()[i].value.storage());
    differ |= a.parameters()[i].value.storage() != c.parameters()[i].value.storage();
  }
  CHECK(differ);
  const auto d = init_params<double>(cfg, 42).cast<float>();
  for (std::size_t i = 0; i < a.parameters().size(); ++i) {
    CHECK(a.parameters()[i].value.storage() == d.parameters()[i].value.storage());
  }

  std::mt19937_64 rng(5);
  const auto x = random_tensor<double>({2, 5, 8, 8}, rng, 0, 1);
  const auto md = init_params<double>(cfg, 3);
  const auto fast = md.forward(x, Backend::fast), ref = md.forward(x, Backend::reference);
  for (const auto& [task, t] : fast) CHECK(max_abs_diff(t, ref.at(task)) < 1e-12);
}

TEST_CASE("model file") {
  testutil::TempDir dir("model");
  const auto cfg = small_config(Variant::partially_shared, {Task::tree_mask, Task::pixel_height});
  const auto m = init_params<float>(cfg, 9);
  save_model(dir.file("m.cnpm"), m);
  const auto back = load_model(dir.file("m.cnpm"));
  CHECK(back.config() == m.config());
  for (std::size_t i = 0; i < m.parameters().size(); ++i) {
    CHECK(back.parameters()[i].name == m.parameters()[i].name);
    CHECK(back.parameters()[i].value.storage() == m.parameters()[i].value.storage());
  }
  std::mt19937_64 rng(6);
  const auto x = random_tensor<float>({1, 5, 8, 8}, rng);
  const auto y1 = m.forward(x), y2 = back.forward(x);
  for (const auto& [t, v] : y1) CHECK(v.storage() == y2.at(t).storage());

  CHECK(UNetConfig::from_json(cfg.to_json()) == cfg);
  CHECK_THROWS_AS(UNetConfig::from_json("{\"variant\":\"fully_shared\"}"), ConfigError);

  const std::string bytes = testutil::slurp(dir.file("m.cnpm"));
  auto write = [&](const std::string& name, const std::string& data) {
    std::ofstream out(dir.file(name), std::ios::binary);
    out << data;
    return dir.file(name);
  };
  CHECK_THROWS_AS(load_model(write("magic.cnpm", "XNPM1" + bytes.substr(5))), IoError);
  std::string v2 = bytes;
  v2[5] = 2;
  CHECK_THROWS_AS(load_model(write("ver.cnpm", v2)), IoError);
  CHECK_THROWS_AS(load_model(write("trail.cnpm", bytes + "x")), IoError);
  CHECK_THROWS_AS(load_model(write("short.cnpm", bytes.substr(0, bytes.size() - 4))), IoError);
}
