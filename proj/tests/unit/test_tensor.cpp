#include <doctest.h>

#include <cmath>
#include <vector>

#include "stancegen/errors.hpp"
#include "stancegen/random.hpp"
#include "stancegen/tensor.hpp"

using namespace stancegen;

namespace {

template <typename T>
std::vector<T> vals(const Tensor<T>& t) {
  return {t.value().begin(), t.value().end()};
}

Tensor<double> vec(Tape<double>& tape, std::vector<double> v) {
  const auto n = v.size();
  return tape.variable(Shape::vector(n), std::move(v));
}

}  // namespace

TEST_CASE("unary ops") {
  Tape<double> tape;
  CHECK(ops::tanh(vec(tape, {0.0}))[0] == 0.0);
  CHECK(ops::sigmoid(vec(tape, {0.0}))[0] == 0.5);
  CHECK(vals(ops::relu(vec(tape, {-1.0, 2.0}))) == std::vector<double>{0.0, 2.0});
  CHECK(vals(ops::negate(vec(tape, {1.0, -2.0}))) == std::vector<double>{-1.0, 2.0});
  CHECK(vals(ops::scale(vec(tape, {1.0, -2.0}), 3.0)) == std::vector<double>{3.0, -6.0});
  CHECK(ops::exp(vec(tape, {1.0}))[0] == doctest::Approx(std::exp(1.0)));
  CHECK(ops::log(vec(tape, {2.0}))[0] == doctest::Approx(std::log(2.0)));
}

TEST_CASE("log outside its domain throws") {
  Tape<double> tape;
  CHECK_THROWS_AS(ops::log(vec(tape, {0.0})), DomainError);
  CHECK_THROWS_AS(ops::log(vec(tape, {-1.0})), DomainError);
}

TEST_CASE("binary ops") {
  Tape<double> tape;
  CHECK(vals(ops::add(vec(tape, {1, 2}), vec(tape, {3, 4}))) == std::vector<double>{4, 6});
  CHECK(vals(ops::mul(vec(tape, {2, 3}), vec(tape, {0, 1}))) == std::vector<double>{0, 3});
  CHECK(vals(ops::sub(vec(tape, {1, 1}), vec(tape, {1, 1}))) == std::vector<double>{0, 0});
  CHECK_THROWS_AS(ops::add(vec(tape, {1, 2}), vec(tape, {1, 2, 3})), ShapeError);
}

TEST_CASE("matvec") {
  Tape<double> tape;
  auto w = tape.variable(Shape::matrix(2, 2), {1, 2, 3, 4});
  CHECK(vals(ops::matvec(w, vec(tape, {1, 1}))) == std::vector<double>{3, 7});
  auto id = tape.variable(Shape::matrix(2, 2), {1, 0, 0, 1});
  CHECK(vals(ops::matvec(id, vec(tape, {5, -5}))) == std::vector<double>{5, -5});
  auto z = tape.variable(Shape::matrix(2, 2), {0, 0, 0, 0});
  CHECK(vals(ops::matvec(z, vec(tape, {9, 9}))) == std::vector<double>{0, 0});
  CHECK_THROWS_AS(ops::matvec(w, vec(tape, {1, 2, 3})), ShapeError);

  // Column block: [[1,2,3],[4,5,6]][:,1:3] . [1,1] = [5, 11]
  auto w3 = tape.variable(Shape::matrix(2, 3), {1, 2, 3, 4, 5, 6});
  CHECK(vals(ops::matvec_cols(w3, vec(tape, {1, 1}), 1)) == std::vector<double>{5, 11});
}

TEST_CASE("concat and slice") {
  Tape<double> tape;
  auto a = vec(tape, {1});
  auto b = vec(tape, {2, 3});
  CHECK(vals(ops::concat({a, b})) == std::vector<double>{1, 2, 3});
  CHECK(vals(ops::concat({b})) == std::vector<double>{2, 3});
  CHECK_THROWS(ops::concat(std::span<const Tensor<double>>{}));
  auto c = ops::concat({a, b});
  CHECK(vals(ops::slice(c, 1, 2)) == std::vector<double>{2, 3});
  CHECK_THROWS_AS(ops::slice(c, 2, 2), ShapeError);
}

TEST_CASE("softmax") {
  Tape<double> tape;
  auto u = vals(ops::softmax(vec(tape, {0, 0, 0})));
  for (double x : u) CHECK(x == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  // exp(ln 3) = 3, 3 / (1 + 3) = 0.75.
  auto p = vals(ops::softmax(vec(tape, {0.0, std::log(3.0)})));
  CHECK(p[0] == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(p[1] == doctest::Approx(0.75).epsilon(1e-14));

  auto m = vals(ops::softmax(vec(tape, {5.0, 1.0}), Mask{true, false}));
  CHECK(m[0] == 1.0);
  CHECK(m[1] == 0.0);

  // Large logits stay finite.
  auto big = vals(ops::softmax(vec(tape, {1000.0, 1000.0})));
  CHECK(big[0] == doctest::Approx(0.5));

  CHECK_THROWS_AS(ops::softmax(vec(tape, {1.0, 2.0}), Mask{false, false}), ArgumentError);
}

TEST_CASE("weighted_sum") {
  Tape<double> tape;
  std::vector<Tensor<double>> one{vec(tape, {2, 3})};
  CHECK(vals(ops::weighted_sum(vec(tape, {1}), std::span<const Tensor<double>>(one))) ==
        std::vector<double>{2, 3});
  std::vector<Tensor<double>> two{vec(tape, {0, 2}), vec(tape, {2, 0})};
  CHECK(vals(ops::weighted_sum(vec(tape, {0.5, 0.5}), std::span<const Tensor<double>>(two))) ==
        std::vector<double>{1, 1});
  std::vector<Tensor<double>> sel{vec(tape, {9, 9}), vec(tape, {1, 2})};
  CHECK(vals(ops::weighted_sum(vec(tape, {0, 1}), std::span<const Tensor<double>>(sel))) ==
        std::vector<double>{1, 2});
}

TEST_CASE("reductions, pick, clamp_min") {
  Tape<double> tape;
  auto x = vec(tape, {1, 2, 3});
  CHECK(ops::sum(x).item() == 6.0);
  CHECK(ops::dot(x, x).item() == 14.0);
  CHECK(ops::pick(x, 2).item() == 3.0);
  CHECK_THROWS(ops::pick(x, 3));
  CHECK(vals(ops::clamp_min(x, 2.0)) == std::vector<double>{2, 2, 3});
}

TEST_CASE("backward basics") {
  {
    Tape<double> tape;
    auto x = vec(tape, {3.0});
    tape.backward(ops::sum(ops::mul(x, x)));
    CHECK(x.grad()[0] == 6.0);
  }
  {
    Tape<double> tape;
    auto x = vec(tape, {1.0, 2.0});
    auto c = tape.constant(Shape::scalar(), {4.0});
    auto root = ops::add(c, ops::scale(ops::sum(x), 0.0));
    tape.backward(root);
    CHECK(x.grad()[0] == 0.0);
    CHECK(x.grad()[1] == 0.0);
  }
  {
    Tape<double> tape;
    auto x = vec(tape, {0.0});
    tape.backward(ops::sum(ops::tanh(x)));
    CHECK(x.grad()[0] == 1.0);
  }
}

TEST_CASE("clamp_min blocks the gradient where the floor is active") {
  Tape<double> tape;
  auto x = vec(tape, {0.5, 3.0});
  tape.backward(ops::sum(ops::clamp_min(x, 1.0)));
  CHECK(x.grad()[0] == 0.0);
  CHECK(x.grad()[1] == 1.0);
}

TEST_CASE("gradients accumulate into parameters across tapes") {
  Parameter<double> p("p", Shape::vector(2), ParamGroup::Stance);
  p.value = {1.0, -2.0};
  for (int k = 0; k < 2; ++k) {
    Tape<double> tape;
    auto x = tape.parameter(p);
    tape.backward(ops::sum(ops::mul(x, x)), 0.5);
  }
  // Two backward passes of 0.5 * d(sum x^2) = x each.
  CHECK(p.grad[0] == 2.0);
  CHECK(p.grad[1] == -4.0);
}

TEST_CASE("inference tapes record no backward rules") {
  Parameter<double> p("p", Shape::vector(2), ParamGroup::Stance);
  p.value = {1.0, 2.0};
  Tape<double> tape(false);
  auto y = ops::sum(ops::tanh(tape.parameter(p)));
  CHECK(y.item() == doctest::Approx(std::tanh(1.0) + std::tanh(2.0)));
  tape.backward(y);
  CHECK(p.grad[0] == 0.0);
}

TEST_CASE("finite_difference_check") {
  Rng rng(3);
  Parameter<double> a("a", Shape::vector(4), ParamGroup::Stance);
  Parameter<double> b("b", Shape::matrix(2, 4), ParamGroup::Stance);
  for (double& v : a.value) v = rng.uniform(-1, 1);
  for (double& v : b.value) v = rng.uniform(-1, 1);
  std::vector<Parameter<double>*> params{&a, &b};

  SUBCASE("sum of squares is exact to rounding") {
    auto f = [&](Tape<double>& t) {
      auto x = t.parameter(a);
      auto w = t.parameter(b);
      return ops::add(ops::dot(x, x), ops::sum(ops::mul(ops::matvec(w, x), ops::matvec(w, x))));
    };
    CHECK(finite_difference_check(f, params, 1e-5) < 1e-8);
  }
  SUBCASE("constant function") {
    auto f = [&](Tape<double>& t) { return t.constant(Shape::scalar(), {2.0}); };
    CHECK(finite_difference_check(f, params) == 0.0);
  }
  SUBCASE("composite nonlinear graph") {
    auto f = [&](Tape<double>& t) {
      auto x = t.parameter(a);
      auto w = t.parameter(b);
      auto h = ops::tanh(ops::matvec(w, ops::sigmoid(x)));
      auto p = ops::softmax(h);
      return ops::negate(ops::log(ops::pick(p, 1)));
    };
    CHECK(finite_difference_check(f, params) < 1e-6);
  }
  SUBCASE("a broken backward rule is detected") {
    set_backward_fault("tanh");
    auto f = [&](Tape<double>& t) { return ops::sum(ops::tanh(t.parameter(a))); };
    const double err = finite_difference_check(f, params);
    set_backward_fault("");
    CHECK(err > 1e-2);
  }
}

TEST_CASE("float tapes compute the same values as double to float precision") {
  Tape<float> tf;
  Tape<double> td;
  auto xf = tf.variable(Shape::vector(3), {0.3f, -1.2f, 2.0f});
  auto xd = td.variable(Shape::vector(3), {0.3, -1.2, 2.0});
  auto yf = ops::softmax(ops::tanh(xf));
  auto yd = ops::softmax(ops::tanh(xd));
  for (std::size_t i = 0; i < 3; ++i) CHECK(yf[i] == doctest::Approx(yd[i]).epsilon(1e-6));
}

TEST_CASE("precision names round trip") {
  CHECK(parse_precision(precision_name(Precision::Float32)) == Precision::Float32);
  CHECK(parse_precision(precision_name(Precision::Float64)) == Precision::Float64);
  CHECK_THROWS(parse_precision("float16"));
}
