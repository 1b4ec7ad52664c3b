#include <doctest.h>

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "hydroseg/rng.hpp"
#include "hydroseg/tensor.hpp"

using namespace hydroseg;

namespace {

template <typename T>
Tensor<T> random_tensor(Rng& rng, std::vector<int> shape, double lo = -2.0, double hi = 2.0,
                        double margin_from_zero = 0.0) {
  Tensor<T> t(std::move(shape));
  for (auto& v : t.data) {
    double x = rng.uniform(lo, hi);
    if (margin_from_zero > 0.0 && std::fabs(x) < margin_from_zero)
      x = x < 0 ? x - margin_from_zero : x + margin_from_zero;
    v = T(x);
  }
  return t;
}

template <typename T>
struct OpCase {
  std::string name;
  std::function<Tensor<T>(Tape<T>&, const Tensor<T>&)> f;
  std::function<Tensor<T>(Rng&)> gen;
};

// Every case maps one input tensor to a scalar through the op under test.
// Constants inside closures keep the op's other arguments off the tape.
template <typename T>
std::vector<OpCase<T>> make_cases(double kink_margin) {
  std::vector<OpCase<T>> cases;
  auto rnd = [](std::vector<int> shape, double lo = -2.0, double hi = 2.0, double margin = 0.0) {
    return [shape, lo, hi, margin](Rng& rng) {
      return random_tensor<T>(rng, shape, lo, hi, margin);
    };
  };
  Rng const_rng(555);
  const Tensor<T> w34 = random_tensor<T>(const_rng, {3, 4});
  const Tensor<T> w42 = random_tensor<T>(const_rng, {4, 2});
  const Tensor<T> b2 = random_tensor<T>(const_rng, {2});
  const Tensor<T> bmm_rhs = random_tensor<T>(const_rng, {2, 4, 3});
  const Tensor<T> bmm_lhs = random_tensor<T>(const_rng, {2, 3, 4});
  const Tensor<T> cw = random_tensor<T>(const_rng, {3, 2, 3, 3}, -0.7, 0.7);
  const Tensor<T> cb = random_tensor<T>(const_rng, {3});
  const Tensor<T> x_conv = random_tensor<T>(const_rng, {1, 2, 5, 5});
  const Tensor<T> dw_w = random_tensor<T>(const_rng, {2, 3, 3}, -0.7, 0.7);
  const Tensor<T> dw_b = random_tensor<T>(const_rng, {2});
  const Tensor<T> ln_g = random_tensor<T>(const_rng, {5}, 0.5, 1.5);
  const Tensor<T> ln_b = random_tensor<T>(const_rng, {5}, -0.5, 0.5);
  const Tensor<T> ln_x = random_tensor<T>(const_rng, {3, 5});
  const Tensor<T> mix = random_tensor<T>(const_rng, {2, 3, 4});

  cases.push_back({"add",
                   [](Tape<T>& t, const Tensor<T>& x) {
                     return t.mean_all(t.add(x, t.scalar_mul(x, T(2))));
                   },
                   rnd({3, 4})});
  cases.push_back({"sub",
                   [](Tape<T>& t, const Tensor<T>& x) {
                     return t.mean_all(t.sub(t.scalar_mul(x, T(3)), x));
                   },
                   rnd({3, 4})});
  cases.push_back({"mul",
                   [](Tape<T>& t, const Tensor<T>& x) { return t.mean_all(t.mul(x, x)); },
                   rnd({3, 4})});
  cases.push_back({"div",
                   [](Tape<T>& t, const Tensor<T>& x) {
                     Tensor<T> den = t.affine(t.mul(x, x), T(1), T(1));  // >= 1
                     return t.mean_all(t.div(x, den));
                   },
                   rnd({3, 4})});
  cases.push_back({"affine",
                   [](Tape<T>& t, const Tensor<T>& x) {
                     return t.mean_all(t.affine(x, T(1.7), T(-0.3)));
                   },
                   rnd({5})});
  cases.push_back({"log",
                   [](Tape<T>& t, const Tensor<T>& x) { return t.mean_all(t.log(x)); },
                   rnd({6}, 0.2, 3.0)});
  cases.push_back({"clamp",
                   [kink_margin](Tape<T>& t, const Tensor<T>& x) {
                     return t.mean_all(t.clamp(x, T(-0.7), T(0.7)));
                   },
                   [kink_margin](Rng& rng) {
                     Tensor<T> t = random_tensor<T>(rng, {8}, -1.5, 1.5);
                     for (auto& v : t.data)
                       if (std::fabs(std::fabs(double(v)) - 0.7) < kink_margin)
                         v = T(double(v) + 3 * kink_margin);
                     return t;
                   }});
  cases.push_back({"relu",
                   [](Tape<T>& t, const Tensor<T>& x) { return t.mean_all(t.relu(x)); },
                   rnd({8}, -2.0, 2.0, /*margin=*/0.05)});
  cases.push_back({"gelu",
                   [](Tape<T>& t, const Tensor<T>& x) { return t.mean_all(t.gelu(x)); },
                   rnd({8})});
  cases.push_back({"sigmoid",
                   [](Tape<T>& t, const Tensor<T>& x) { return t.mean_all(t.sigmoid(x)); },
                   rnd({8})});
  cases.push_back({"softmax",
                   [](Tape<T>& t, const Tensor<T>& x) {
                     return t.mean_all(t.mul(t.softmax_last(x), x));
                   },
                   rnd({3, 5})});
  cases.push_back({"layernorm_x",
                   [ln_g, ln_b](Tape<T>& t, const Tensor<T>& x) {
                     return t.mean_all(t.mul(t.layernorm_last(x, ln_g, ln_b), x));
                   },
                   rnd({3, 5})});
  cases.push_back({"layernorm_gamma",
                   [ln_x, ln_b](Tape<T>& t, const Tensor<T>& g) {
                     Tensor<T> y = t.layernorm_last(ln_x, g, ln_b);
                     return t.mean_all(t.mul(y, y));
                   },
                   rnd({5}, 0.5, 1.5)});
  cases.push_back({"layernorm_beta",
                   [ln_x, ln_g](Tape<T>& t, const Tensor<T>& b) {
                     Tensor<T> y = t.layernorm_last(ln_x, ln_g, b);
                     return t.mean_all(t.mul(y, y));
                   },
                   rnd({5})});
  cases.push_back({"add_bias_x",
                   [b2](Tape<T>& t, const Tensor<T>& x) {
                     Tensor<T> y = t.add_bias(x, b2);
                     return t.mean_all(t.mul(y, y));
                   },
                   rnd({3, 2})});
  cases.push_back({"add_bias_b",
                   [](Tape<T>& t, const Tensor<T>& b) {
                     Tensor<T> x = Tensor<T>::full({3, 2}, T(0.5));
                     Tensor<T> y = t.add_bias(x, b);
                     return t.mean_all(t.mul(y, y));
                   },
                   rnd({2})});
  cases.push_back({"matmul_lhs",
                   [w42](Tape<T>& t, const Tensor<T>& x) {
                     Tensor<T> y = t.matmul(x, w42);
                     return t.mean_all(t.mul(y, y));
                   },
                   rnd({3, 4})});
  cases.push_back({"matmul_rhs",
                   [w34](Tape<T>& t, const Tensor<T>& w) {
                     Tensor<T> y = t.matmul(w34, w);
                     return t.mean_all(t.mul(y, y));
                   },
                   rnd({4, 2})});
  cases.push_back({"bmm_lhs",
                   [bmm_rhs](Tape<T>& t, const Tensor<T>& a) {
                     Tensor<T> y = t.bmm(a, bmm_rhs);
                     return t.mean_all(t.mul(y, y));
                   },
                   rnd({2, 3, 4})});
  cases.push_back({"bmm_rhs",
                   [bmm_lhs](Tape<T>& t, const Tensor<T>& b) {
                     Tensor<T> y = t.bmm(bmm_lhs, b);
                     return t.mean_all(t.mul(y, y));
                   },
                   rnd({2, 4, 3})});
  cases.push_back({"conv2d_x_reflect",
                   [cw, cb](Tape<T>& t, const Tensor<T>& x) {
                     Tensor<T> y = t.conv2d(x, cw, cb, 1, 1, true);
                     return t.mean_all(t.mul(y, y));
                   },
                   rnd({1, 2, 5, 5})});
  cases.push_back({"conv2d_x_zero_stride2",
                   [cw, cb](Tape<T>& t, const Tensor<T>& x) {
                     Tensor<T> y = t.conv2d(x, cw, cb, 2, 1, false);
                     return t.mean_all(t.mul(y, y));
                   },
                   rnd({1, 2, 5, 5})});
  cases.push_back({"conv2d_w",
                   [x_conv, cb](Tape<T>& t, const Tensor<T>& w) {
                     Tensor<T> y = t.conv2d(x_conv, w, cb, 1, 1, true);
                     return t.mean_all(t.mul(y, y));
                   },
                   rnd({3, 2, 3, 3}, -0.7, 0.7)});
  cases.push_back({"conv2d_b",
                   [x_conv, cw](Tape<T>& t, const Tensor<T>& b) {
                     Tensor<T> y = t.conv2d(x_conv, cw, b, 1, 1, true);
                     return t.mean_all(t.mul(y, y));
                   },
                   rnd({3})});
  cases.push_back({"dwconv_x",
                   [dw_w, dw_b](Tape<T>& t, const Tensor<T>& x) {
                     Tensor<T> y = t.dwconv3x3(x, dw_w, dw_b, true);
                     return t.mean_all(t.mul(y, y));
                   },
                   rnd({1, 2, 4, 4})});
  cases.push_back({"dwconv_w",
                   [dw_b](Tape<T>& t, const Tensor<T>& w) {
                     Rng r(11);
                     Tensor<T> x = random_tensor<T>(r, {1, 2, 4, 4});
                     Tensor<T> y = t.dwconv3x3(x, w, dw_b, true);
                     return t.mean_all(t.mul(y, y));
                   },
                   rnd({2, 3, 3}, -0.7, 0.7)});
  cases.push_back({"avgpool",
                   [](Tape<T>& t, const Tensor<T>& x) {
                     Tensor<T> y = t.avgpool(x, 2);
                     return t.mean_all(t.mul(y, y));
                   },
                   rnd({1, 2, 4, 4})});
  cases.push_back({"bilinear_up",
                   [](Tape<T>& t, const Tensor<T>& x) {
                     Tensor<T> y = t.bilinear_resize(x, 7, 5);
                     return t.mean_all(t.mul(y, y));
                   },
                   rnd({1, 1, 4, 4})});
  cases.push_back({"bilinear_down",
                   [](Tape<T>& t, const Tensor<T>& x) {
                     Tensor<T> y = t.bilinear_resize(x, 3, 2);
                     return t.mean_all(t.mul(y, y));
                   },
                   rnd({1, 1, 5, 6})});
  cases.push_back({"reshape",
                   [mix](Tape<T>& t, const Tensor<T>& x) {
                     Tensor<T> y = t.reshape(x, {4, 6});
                     return t.mean_all(t.mul(y, t.reshape(mix, {4, 6})));
                   },
                   rnd({2, 3, 4})});
  cases.push_back({"permute",
                   [mix](Tape<T>& t, const Tensor<T>& x) {
                     Tensor<T> y = t.permute(x, {2, 0, 1});
                     return t.mean_all(t.mul(y, t.permute(mix, {2, 0, 1})));
                   },
                   rnd({2, 3, 4})});
  cases.push_back({"concat",
                   [mix](Tape<T>& t, const Tensor<T>& x) {
                     Tensor<T> y = t.concat({x, t.scalar_mul(x, T(2))}, 1);
                     return t.mean_all(t.mul(y, y));
                   },
                   rnd({2, 3, 4})});
  cases.push_back({"sum_all",
                   [](Tape<T>& t, const Tensor<T>& x) { return t.sum_all(t.mul(x, x)); },
                   rnd({7})});
  cases.push_back({"mean_all",
                   [](Tape<T>& t, const Tensor<T>& x) { return t.mean_all(t.mul(x, x)); },
                   rnd({7})});
  return cases;
}

}  // namespace

TEST_CASE("every primitive passes gradient_check in 64-bit mode") {
  auto cases = make_cases<double>(1e-3);
  for (auto& c : cases) {
    Rng rng(91);
    for (int trial = 0; trial < 10; ++trial) {
      Tensor<double> x = c.gen(rng);
      double err = gradient_check(c.f, x, 1e-5);
      INFO(c.name << " trial " << trial);
      CHECK(err <= 1e-6);
    }
  }
}

namespace {

// 32-bit FD is noisy near gradient zero-crossings, so these cases keep every
// gradient coordinate bounded away from zero: positive constant mixing weights
// (no cancellation) and input margins where the op itself has a flat point.
std::vector<OpCase<float>> make_cases_f32() {
  using T = float;
  std::vector<OpCase<T>> cases;
  auto rnd = [](std::vector<int> shape, double lo = -2.0, double hi = 2.0, double margin = 0.0) {
    return [shape, lo, hi, margin](Rng& rng) {
      return random_tensor<T>(rng, shape, lo, hi, margin);
    };
  };
  Rng cr(808);
  const Tensor<T> posw34 = random_tensor<T>(cr, {3, 4}, 0.5, 1.5);
  const Tensor<T> posw42 = random_tensor<T>(cr, {4, 2}, 0.5, 1.5);
  const Tensor<T> pos_bmm_lhs = random_tensor<T>(cr, {2, 3, 4}, 0.5, 1.5);
  const Tensor<T> pos_bmm_rhs = random_tensor<T>(cr, {2, 4, 3}, 0.5, 1.5);
  const Tensor<T> pos_cw = random_tensor<T>(cr, {3, 2, 3, 3}, 0.2, 0.8);
  const Tensor<T> pos_cb = random_tensor<T>(cr, {3}, 0.0, 0.5);
  const Tensor<T> pos_x_conv = random_tensor<T>(cr, {1, 2, 5, 5}, 0.5, 1.5);
  const Tensor<T> pos_dw_w = random_tensor<T>(cr, {2, 3, 3}, 0.2, 0.8);
  const Tensor<T> pos_dw_b = random_tensor<T>(cr, {2}, 0.0, 0.5);
  const Tensor<T> den_const = random_tensor<T>(cr, {6}, 1.0, 2.0);
  const Tensor<T> num_const = random_tensor<T>(cr, {6}, 1.0, 2.0);
  const Tensor<T> pos_mix = random_tensor<T>(cr, {2, 3, 4}, 0.5, 1.5);
  const Tensor<T> ln_g = random_tensor<T>(cr, {4}, 0.5, 1.5);
  const Tensor<T> ln_b = random_tensor<T>(cr, {4}, -0.5, 0.5);
  // fixed layernorm input whose normalized values stay away from zero
  const Tensor<T> ln_x({1, 4}, {-2.0f, -1.0f, 1.0f, 2.0f});
  Tensor<T> softmax_w({3, 4});
  for (size_t i = 0; i < softmax_w.numel(); ++i) softmax_w.data[i] = (i % 2 == 0) ? 0.0f : 10.0f;
  Tensor<T> ln_w({1, 4});
  for (size_t i = 0; i < 4; ++i) ln_w.data[i] = (i % 2 == 0) ? 2.0f : -2.0f;

  auto dotsum = [](Tape<T>& t, const Tensor<T>& y, const Tensor<T>& w) {
    return t.sum_all(t.mul(y, w));
  };

  cases.push_back({"add",
                   [](Tape<T>& t, const Tensor<T>& x) {
                     return t.sum_all(t.add(x, t.scalar_mul(x, T(2))));
                   },
                   rnd({3, 4})});
  cases.push_back({"sub",
                   [](Tape<T>& t, const Tensor<T>& x) {
                     return t.sum_all(t.sub(t.scalar_mul(x, T(3)), x));
                   },
                   rnd({3, 4})});
  cases.push_back({"mul",
                   [](Tape<T>& t, const Tensor<T>& x) { return t.sum_all(t.mul(x, x)); },
                   rnd({3, 4}, -2.0, 2.0, 0.3)});
  cases.push_back({"div_lhs",
                   [den_const](Tape<T>& t, const Tensor<T>& x) {
                     return t.sum_all(t.div(x, den_const));
                   },
                   rnd({6})});
  cases.push_back({"div_rhs",
                   [num_const](Tape<T>& t, const Tensor<T>& x) {
                     return t.sum_all(t.div(num_const, x));
                   },
                   rnd({6}, 0.5, 2.0)});
  cases.push_back({"affine",
                   [](Tape<T>& t, const Tensor<T>& x) {
                     return t.sum_all(t.affine(x, T(1.7), T(-0.3)));
                   },
                   rnd({5})});
  cases.push_back({"log",
                   [](Tape<T>& t, const Tensor<T>& x) { return t.sum_all(t.log(x)); },
                   rnd({6}, 0.2, 3.0)});
  cases.push_back({"clamp",
                   [](Tape<T>& t, const Tensor<T>& x) {
                     return t.sum_all(t.clamp(x, T(-0.7), T(0.7)));
                   },
                   [](Rng& rng) {
                     Tensor<T> t = random_tensor<T>(rng, {8}, -1.5, 1.5);
                     for (auto& v : t.data)
                       if (std::fabs(std::fabs(double(v)) - 0.7) < 0.05) v = T(double(v) + 0.15);
                     return t;
                   }});
  cases.push_back({"relu",
                   [](Tape<T>& t, const Tensor<T>& x) { return t.sum_all(t.relu(x)); },
                   rnd({8}, -2.0, 2.0, 0.05)});
  // gelu' has a root near x = -0.752; keep inputs right of it
  cases.push_back({"gelu",
                   [](Tape<T>& t, const Tensor<T>& x) { return t.sum_all(t.gelu(x)); },
                   rnd({8}, -0.5, 2.0)});
  cases.push_back({"sigmoid",
                   [](Tape<T>& t, const Tensor<T>& x) { return t.sum_all(t.sigmoid(x)); },
                   rnd({8})});
  cases.push_back({"softmax",
                   [softmax_w, dotsum](Tape<T>& t, const Tensor<T>& x) {
                     return dotsum(t, t.softmax_last(x), softmax_w);
                   },
                   rnd({3, 4}, -0.5, 0.5)});
  cases.push_back({"layernorm_x",
                   [ln_g, ln_b, ln_w, dotsum](Tape<T>& t, const Tensor<T>& x) {
                     return dotsum(t, t.layernorm_last(x, ln_g, ln_b), ln_w);
                   },
                   rnd({1, 4}, -1.0, 1.0)});
  cases.push_back({"layernorm_gamma",
                   [ln_x, ln_b, ln_w, dotsum](Tape<T>& t, const Tensor<T>& g) {
                     return dotsum(t, t.layernorm_last(ln_x, g, ln_b), ln_w);
                   },
                   rnd({4}, 0.5, 1.5)});
  cases.push_back({"layernorm_beta",
                   [ln_x, ln_g, ln_w, dotsum](Tape<T>& t, const Tensor<T>& b) {
                     return dotsum(t, t.layernorm_last(ln_x, ln_g, b), ln_w);
                   },
                   rnd({4})});
  cases.push_back({"add_bias_x",
                   [posw42, dotsum](Tape<T>& t, const Tensor<T>& x) {
                     return dotsum(t, t.add_bias(x, Tensor<T>({2}, {0.3f, -0.2f})), posw42);
                   },
                   rnd({4, 2})});
  cases.push_back({"add_bias_b",
                   [posw42, dotsum](Tape<T>& t, const Tensor<T>& b) {
                     return dotsum(t, t.add_bias(Tensor<T>::full({4, 2}, T(0.5)), b), posw42);
                   },
                   rnd({2})});
  cases.push_back({"matmul_lhs",
                   [posw42, dotsum](Tape<T>& t, const Tensor<T>& x) {
                     Tensor<T> w({2, 2}, {1.0f, 0.7f, 0.6f, 1.2f});
                     return dotsum(t, t.matmul(x, posw42), w);
                   },
                   [](Rng& rng) { return random_tensor<T>(rng, {2, 4}); }});
  cases.push_back({"matmul_rhs",
                   [posw34, dotsum](Tape<T>& t, const Tensor<T>& w) {
                     Tensor<T> mixw = Tensor<T>::full({3, 2}, T(1));
                     return dotsum(t, t.matmul(posw34, w), mixw);
                   },
                   rnd({4, 2})});
  cases.push_back({"bmm_lhs",
                   [pos_bmm_rhs, dotsum](Tape<T>& t, const Tensor<T>& a) {
                     Tensor<T> mixw = Tensor<T>::full({2, 3, 3}, T(1));
                     return dotsum(t, t.bmm(a, pos_bmm_rhs), mixw);
                   },
                   rnd({2, 3, 4})});
  cases.push_back({"bmm_rhs",
                   [pos_bmm_lhs, dotsum](Tape<T>& t, const Tensor<T>& b) {
                     Tensor<T> mixw = Tensor<T>::full({2, 3, 3}, T(1));
                     return dotsum(t, t.bmm(pos_bmm_lhs, b), mixw);
                   },
                   rnd({2, 4, 3})});
  cases.push_back({"conv2d_x_reflect",
                   [pos_cw, pos_cb](Tape<T>& t, const Tensor<T>& x) {
                     return t.sum_all(t.conv2d(x, pos_cw, pos_cb, 1, 1, true));
                   },
                   rnd({1, 2, 5, 5})});
  cases.push_back({"conv2d_x_zero_stride2",
                   [pos_cw, pos_cb](Tape<T>& t, const Tensor<T>& x) {
                     return t.sum_all(t.conv2d(x, pos_cw, pos_cb, 2, 1, false));
                   },
                   rnd({1, 2, 5, 5})});
  cases.push_back({"conv2d_w",
                   [pos_x_conv, pos_cb](Tape<T>& t, const Tensor<T>& w) {
                     return t.sum_all(t.conv2d(pos_x_conv, w, pos_cb, 1, 1, true));
                   },
                   rnd({3, 2, 3, 3}, -0.7, 0.7)});
  cases.push_back({"conv2d_b",
                   [pos_x_conv, pos_cw](Tape<T>& t, const Tensor<T>& b) {
                     return t.sum_all(t.conv2d(pos_x_conv, pos_cw, b, 1, 1, true));
                   },
                   rnd({3})});
  cases.push_back({"dwconv_x",
                   [pos_dw_w, pos_dw_b](Tape<T>& t, const Tensor<T>& x) {
                     return t.sum_all(t.dwconv3x3(x, pos_dw_w, pos_dw_b, true));
                   },
                   rnd({1, 2, 4, 4})});
  cases.push_back({"dwconv_w",
                   [pos_dw_b](Tape<T>& t, const Tensor<T>& w) {
                     Rng r(11);
                     Tensor<T> x = random_tensor<T>(r, {1, 2, 4, 4}, 0.5, 1.5);
                     return t.sum_all(t.dwconv3x3(x, w, pos_dw_b, true));
                   },
                   rnd({2, 3, 3}, -0.7, 0.7)});
  cases.push_back({"avgpool",
                   [](Tape<T>& t, const Tensor<T>& x) { return t.sum_all(t.avgpool(x, 2)); },
                   rnd({1, 2, 4, 4})});
  cases.push_back({"bilinear_up",
                   [](Tape<T>& t, const Tensor<T>& x) {
                     return t.sum_all(t.bilinear_resize(x, 7, 5));
                   },
                   rnd({1, 1, 4, 4})});
  cases.push_back({"bilinear_down",
                   [](Tape<T>& t, const Tensor<T>& x) {
                     return t.sum_all(t.bilinear_resize(x, 3, 2));
                   },
                   rnd({1, 1, 5, 6})});
  cases.push_back({"reshape",
                   [pos_mix, dotsum](Tape<T>& t, const Tensor<T>& x) {
                     return dotsum(t, t.reshape(x, {4, 6}), t.reshape(pos_mix, {4, 6}));
                   },
                   rnd({2, 3, 4})});
  cases.push_back({"permute",
                   [pos_mix, dotsum](Tape<T>& t, const Tensor<T>& x) {
                     return dotsum(t, t.permute(x, {2, 0, 1}), t.permute(pos_mix, {2, 0, 1}));
                   },
                   rnd({2, 3, 4})});
  cases.push_back({"concat",
                   [pos_mix, dotsum](Tape<T>& t, const Tensor<T>& x) {
                     Tensor<T> two = t.concat({x, t.scalar_mul(x, T(2))}, 1);
                     Tensor<T> mixw = Tensor<T>::full({2, 6, 4}, T(1));
                     return dotsum(t, two, mixw);
                   },
                   rnd({2, 3, 4})});
  cases.push_back({"sum_all",
                   [](Tape<T>& t, const Tensor<T>& x) { return t.sum_all(t.mul(x, x)); },
                   rnd({7}, -2.0, 2.0, 0.3)});
  cases.push_back({"mean_all",
                   [](Tape<T>& t, const Tensor<T>& x) { return t.mean_all(t.mul(x, x)); },
                   rnd({7}, -2.0, 2.0, 0.3)});
  return cases;
}

}  // namespace

TEST_CASE("every primitive passes gradient_check in 32-bit mode") {
  auto cases = make_cases_f32();
  for (auto& c : cases) {
    Rng rng(17);
    for (int trial = 0; trial < 10; ++trial) {
      Tensor<float> x = c.gen(rng);
      double err = gradient_check(c.f, x, 1e-2);
      INFO(c.name << " trial " << trial << " err " << err);
      CHECK(err <= 1e-3);
    }
  }
}

TEST_CASE("backward basics") {
  SUBCASE("loss = sum(x) gives unit gradient") {
    Tape<double> t;
    auto x = t.leaf(Tensor<double>({3}, {5.0, -1.0, 2.0}));
    auto loss = t.sum_all(x);
    t.backward(loss);
    CHECK(t.grad_of(x) == std::vector<double>{1.0, 1.0, 1.0});
  }
  SUBCASE("loss = sum(x*x) gives 2x") {
    Tape<double> t;
    auto x = t.leaf(Tensor<double>({3}, {1.0, 2.0, 3.0}));
    auto loss = t.sum_all(t.mul(x, x));
    t.backward(loss);
    CHECK(t.grad_of(x) == std::vector<double>{2.0, 4.0, 6.0});
  }
  SUBCASE("non-scalar loss is an error") {
    Tape<double> t;
    auto x = t.leaf(Tensor<double>({3}, {1.0, 2.0, 3.0}));
    auto y = t.mul(x, x);
    CHECK_THROWS_AS(t.backward(y), Error);
  }
  SUBCASE("unreached parameters get zero gradient") {
    Tape<double> t;
    auto x = t.leaf(Tensor<double>({2}, {1.0, 2.0}));
    auto unused = t.leaf(Tensor<double>({2}, {3.0, 4.0}));
    auto loss = t.sum_all(x);
    t.backward(loss);
    CHECK(t.grad_of(unused) == std::vector<double>{0.0, 0.0});
  }
}

TEST_CASE("small conv-layernorm-gelu network matches finite differences") {
  Rng rng(2718);
  Tensor<double> w1 = random_tensor<double>(rng, {4, 2, 3, 3}, -0.5, 0.5);
  Tensor<double> b1 = random_tensor<double>(rng, {4}, -0.1, 0.1);
  Tensor<double> w2 = random_tensor<double>(rng, {1, 4, 3, 3}, -0.5, 0.5);
  Tensor<double> b2 = random_tensor<double>(rng, {1});
  Tensor<double> g = Tensor<double>::full({4}, 1.0);
  Tensor<double> be = Tensor<double>::full({4}, 0.0);

  auto f = [&](Tape<double>& t, const Tensor<double>& x) {
    Tensor<double> h = t.conv2d(x, w1, b1, 1, 1, true);          // (1,4,6,6)
    Tensor<double> tok = t.permute(t.reshape(h, {1, 4, 36}), {0, 2, 1});
    tok = t.layernorm_last(tok, g, be);
    h = t.reshape(t.permute(tok, {0, 2, 1}), {1, 4, 6, 6});
    h = t.gelu(h);
    h = t.conv2d(h, w2, b2, 1, 1, true);
    return t.mean_all(h);
  };
  Tensor<double> x = random_tensor<double>(rng, {1, 2, 6, 6});
  CHECK(gradient_check(f, x, 1e-5) <= 1e-6);
}

TEST_CASE("conv2d agrees with a naive six-loop reference") {
  Rng rng(31415);
  for (int trial = 0; trial < 8; ++trial) {
    const int N = 1 + int(rng.uniform_index(2));
    const int Ci = 1 + int(rng.uniform_index(3));
    const int Co = 1 + int(rng.uniform_index(3));
    const int H = 4 + int(rng.uniform_index(4));
    const int W = 4 + int(rng.uniform_index(4));
    const int k = 1 + 2 * int(rng.uniform_index(2));  // 1 or 3
    const int stride = 1 + int(rng.uniform_index(2));
    const int pad = int(rng.uniform_index(2));
    Tensor<double> x = random_tensor<double>(rng, {N, Ci, H, W});
    Tensor<double> w = random_tensor<double>(rng, {Co, Ci, k, k});
    Tensor<double> b = random_tensor<double>(rng, {Co});

    Tape<double> t;
    Tensor<double> got = t.conv2d(x, w, b, stride, pad, false);

    const int Ho = (H + 2 * pad - k) / stride + 1;
    const int Wo = (W + 2 * pad - k) / stride + 1;
    REQUIRE(got.shape == std::vector<int>{N, Co, Ho, Wo});
    for (int n = 0; n < N; ++n)
      for (int co = 0; co < Co; ++co)
        for (int oy = 0; oy < Ho; ++oy)
          for (int ox = 0; ox < Wo; ++ox) {
            double acc = b.data[size_t(co)];
            for (int ci = 0; ci < Ci; ++ci)
              for (int ky = 0; ky < k; ++ky)
                for (int kx = 0; kx < k; ++kx) {
                  int iy = oy * stride - pad + ky;
                  int ix = ox * stride - pad + kx;
                  if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                  acc += w.data[((size_t(co) * Ci + ci) * k + ky) * k + kx] *
                         x.data[((size_t(n) * Ci + ci) * H + iy) * W + ix];
                }
            CHECK(got.data[((size_t(n) * Co + co) * Ho + oy) * Wo + ox] ==
                  doctest::Approx(acc).epsilon(1e-12));
          }
  }
}

TEST_CASE("bilinear resize identities") {
  Rng rng(99);
  Tensor<double> x = random_tensor<double>(rng, {1, 2, 5, 7});
  Tape<double> t;

  SUBCASE("same-size resize is the identity") {
    Tensor<double> y = t.bilinear_resize(x, 5, 7);
    CHECK(y.data == x.data);
  }
  SUBCASE("constant stays constant under any resize") {
    Tensor<double> c = Tensor<double>::full({1, 1, 4, 4}, 3.25);
    Tensor<double> y = t.bilinear_resize(c, 9, 6);
    for (double v : y.data) CHECK(v == doctest::Approx(3.25).epsilon(1e-12));
  }
}

TEST_CASE("forward pass is bit-deterministic") {
  Rng rng(1);
  Tensor<float> x = random_tensor<float>(rng, {2, 3, 8, 8});
  Tensor<float> w = random_tensor<float>(rng, {4, 3, 3, 3});
  Tensor<float> b = random_tensor<float>(rng, {4});
  auto run = [&]() {
    Tape<float> t;
    Tensor<float> y = t.conv2d(x, w, b, 2, 1, true);
    y = t.gelu(y);
    return t.softmax_last(t.reshape(y, {2, 4 * 16})).data;
  };
  CHECK(run() == run());
}

TEST_CASE("gradient_check sanity on its own examples") {
  Rng rng(4);
  SUBCASE("f = sum has zero error") {
    Tensor<double> x = random_tensor<double>(rng, {5});
    double err = gradient_check(
        [](Tape<double>& t, const Tensor<double>& v) { return t.sum_all(v); }, x, 1e-5);
    CHECK(err <= 1e-9);
  }
  SUBCASE("f = mean(sigmoid(x))") {
    Tensor<double> x = random_tensor<double>(rng, {6});
    double err = gradient_check(
        [](Tape<double>& t, const Tensor<double>& v) { return t.mean_all(t.sigmoid(v)); }, x,
        1e-5);
    CHECK(err <= 1e-6);
  }
}
