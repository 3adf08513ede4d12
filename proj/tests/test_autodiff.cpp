#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>

#include "gst/adam.hpp"
#include "gst/autodiff.hpp"
#include "gst/errors.hpp"
#include "gst/params.hpp"
#include "support.hpp"

using namespace gst;
using gst::testing::check_gradients;
using gst::testing::random_tensor;
using gst::testing::weighted_sum;

TEST_CASE("tensor construction validates shape against data") {
  CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0, 3.0}), ShapeError);
  CHECK_THROWS_AS(Tensor(Shape{}), ShapeError);
  CHECK_THROWS_AS(Tensor(Shape{0, 3}), ShapeError);
  const Tensor m = Tensor::matrix({{1, 2, 3}, {4, 5, 6}});
  CHECK(m.shape() == Shape{2, 3});
  CHECK(m.at(1, 2) == 6.0);
}

TEST_CASE("matmul with identity") {
  const Var out = matmul(constant(Tensor::matrix({{1, 0}, {0, 1}})),
                         constant(Tensor::matrix({{3}, {4}})));
  CHECK(out.value() == Tensor::matrix({{3}, {4}}));
}

TEST_CASE("shape mismatch names the op and both shapes") {
  const Var a = constant(Tensor({2, 3}));
  const Var b = constant(Tensor({2, 3}));
  try {
    matmul(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("matmul") != std::string::npos);
    CHECK(msg.find("[2,3]") != std::string::npos);
  }
  CHECK_THROWS_AS(add(a, constant(Tensor({3, 2}))), ShapeError);
  CHECK_THROWS_AS(concat({a, constant(Tensor({2, 2}))}, 0), ShapeError);
  CHECK_THROWS_AS(add_bias(a, constant(Tensor({2}))), ShapeError);
}

TEST_CASE("softmax over unmasked entries") {
  const Var uniform = softmax_rows(constant(Tensor::matrix({{0, 0, 0}})), Tensor({1, 3}));
  for (int j = 0; j < 3; ++j) CHECK(uniform.value()[j] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  Tensor mask({1, 3});
  mask[1] = kMasked;
  const Var p = softmax_rows(constant(Tensor::matrix({{1, 2, 3}})), mask);
  const double z = std::exp(1.0) + std::exp(3.0);
  CHECK(p.value()[0] == doctest::Approx(std::exp(1.0) / z).epsilon(1e-14));
  CHECK(p.value()[1] == 0.0);
  CHECK(p.value()[2] == doctest::Approx(std::exp(3.0) / z).epsilon(1e-14));
}

TEST_CASE("softmax rows sum to one and masked entries are exactly zero") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng = make_rng(seed, {1});
    const Tensor x = random_tensor({4, 6}, rng, -5.0, 5.0);
    Tensor mask({4, 6});
    std::bernoulli_distribution drop(0.4);
    for (auto& m : mask.data()) m = drop(rng) ? kMasked : 0.0;
    for (std::size_t c = 0; c < 6; ++c) mask.at(3, c) = kMasked;  // one all-masked row
    const Tensor p = softmax_rows(constant(x), mask).value();
    for (std::size_t r = 0; r < 4; ++r) {
      double total = 0.0;
      bool any = false;
      for (std::size_t c = 0; c < 6; ++c) {
        if (mask.at(r, c) == kMasked) {
          CHECK(p.at(r, c) == 0.0);
        } else {
          any = true;
        }
        total += p.at(r, c);
      }
      CHECK(total == doctest::Approx(any ? 1.0 : 0.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("backward of simple roots") {
  const Var p = parameter(Tensor({3}, {1, 2, 3}));
  CHECK(backward(sum(p)).of(p) == Tensor({3}, {1, 1, 1}));
  CHECK(backward(sum(mul(p, p))).of(p) == Tensor({3}, {2, 4, 6}));
  CHECK_THROWS_AS(backward(p), ShapeError);
}

TEST_CASE("backward is pure") {
  const Var w = parameter(random_tensor({4, 3}, 1));
  const Var x = parameter(random_tensor({5, 4}, 2));
  const Var root = weighted_sum(tanh(matmul(x, w)));
  const Gradients g1 = backward(root);
  const Gradients g2 = backward(root);
  CHECK(g1.of(w) == g2.of(w));
  CHECK(g1.of(x) == g2.of(x));
}

TEST_CASE("gradients of constants are absent") {
  const Var c = constant(Tensor({2}, {1, 2}));
  const Var p = parameter(Tensor({2}, {3, 4}));
  const Gradients g = backward(sum(mul(c, p)));
  CHECK_FALSE(g.contains(c));
  CHECK(g.of(c) == Tensor({2}));
  CHECK(g.of(p) == Tensor({2}, {1, 2}));
}

namespace {

using gst::testing::Objective;

struct OpCase {
  const char* name;
  std::vector<Shape> shapes;
  Objective f;
  double lo = -2.0;
  double hi = 2.0;
};

std::vector<OpCase> op_cases() {
  Tensor mask({3, 4});
  mask.at(0, 1) = kMasked;
  mask.at(2, 0) = mask.at(2, 1) = mask.at(2, 2) = mask.at(2, 3) = kMasked;
  Tensor key_mask = Tensor::full({2, 3}, 1.0);
  key_mask.at(1, 2) = 0.0;
  Tensor c = random_tensor({3, 4}, 5);
  return {
      {"add", {{3, 4}, {3, 4}}, [](auto& v) { return weighted_sum(add(v[0], v[1])); }},
      {"sub", {{3, 4}, {3, 4}}, [](auto& v) { return weighted_sum(sub(v[0], v[1])); }},
      {"mul", {{3, 4}, {3, 4}}, [](auto& v) { return weighted_sum(mul(v[0], v[1])); }},
      {"div", {{3, 4}, {3, 4}},
       [](auto& v) { return weighted_sum(div(v[0], add(exp(v[1]), exp(v[1])))); }},
      {"scale", {{3, 4}}, [](auto& v) { return weighted_sum(scale(v[0], -1.7)); }},
      {"tanh", {{3, 4}}, [](auto& v) { return weighted_sum(tanh(v[0])); }},
      {"sigmoid", {{3, 4}}, [](auto& v) { return weighted_sum(sigmoid(v[0])); }},
      {"relu", {{3, 4}}, [](auto& v) { return weighted_sum(relu(v[0])); }},
      {"exp", {{3, 4}}, [](auto& v) { return weighted_sum(exp(v[0])); }},
      {"log", {{3, 4}}, [](auto& v) { return weighted_sum(log(v[0])); }, 0.2, 3.0},
      {"mul_const", {{3, 4}}, [c](auto& v) { return weighted_sum(mul_const(v[0], c)); }},
      {"matmul", {{3, 4}, {4, 5}}, [](auto& v) { return weighted_sum(matmul(v[0], v[1])); }},
      {"add_bias", {{3, 4}, {4}}, [](auto& v) { return weighted_sum(add_bias(v[0], v[1])); }},
      {"affine", {{3, 4}, {4, 2}, {2}},
       [](auto& v) { return weighted_sum(affine(v[0], v[1], v[2])); }},
      {"transpose", {{3, 4}}, [](auto& v) { return weighted_sum(transpose(v[0])); }},
      {"reshape", {{3, 4}}, [](auto& v) { return weighted_sum(reshape(v[0], {2, 6})); }},
      {"permute", {{2, 3, 4}},
       [](auto& v) { return weighted_sum(permute(v[0], {2, 0, 1})); }},
      {"concat0", {{3, 4}, {2, 4}}, [](auto& v) { return weighted_sum(concat({v[0], v[1]}, 0)); }},
      {"concat1", {{3, 4}, {3, 2}}, [](auto& v) { return weighted_sum(concat({v[0], v[1]}, 1)); }},
      {"slice_cols", {{3, 5}}, [](auto& v) { return weighted_sum(slice_cols(v[0], 1, 4)); }},
      {"sum", {{3, 4}}, [](auto& v) { return scale(sum(v[0]), 0.3); }},
      {"mean0", {{3, 4}}, [](auto& v) { return weighted_sum(mean(v[0], 0)); }},
      {"mean1", {{3, 4}}, [](auto& v) { return weighted_sum(mean(v[0], 1)); }},
      {"softmax_rows", {{3, 4}},
       [mask](auto& v) { return weighted_sum(softmax_rows(v[0], mask)); }},
      {"layer_norm", {{3, 6}, {6}, {6}},
       [](auto& v) { return weighted_sum(layer_norm(v[0], v[1], v[2])); }},
      {"attention", {{6, 4}, {6, 4}, {6, 4}},
       [key_mask](auto& v) { return weighted_sum(attention(v[0], v[1], v[2], 2, 2, key_mask)); }},
      {"attention_gated", {{6, 4}, {6, 4}, {6, 4}, {6, 3}},
       [key_mask](auto& v) {
         const Var gate = softmax_rows(v[3]);
         return weighted_sum(attention(v[0], v[1], v[2], 2, 2, key_mask, &gate));
       }},
      {"select_rows", {{3, 4}, {3, 4}},
       [](auto& v) { return weighted_sum(select_rows({true, false, true}, v[0], v[1])); }},
      {"composite", {{4, 3}, {3, 3}, {3}, {4, 3}},
       [](auto& v) {
         const Var h = tanh(affine(v[0], v[1], v[2]));
         const Var g = sigmoid(mul(h, v[3]));
         return weighted_sum(div(exp(scale(g, 0.5)), add(g, exp(h))));
       }},
  };
}

}  // namespace

TEST_CASE("every op matches central differences over 100 seeds") {
  for (const OpCase& op : op_cases()) {
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      Rng rng = make_rng(seed, {0xD1FF});
      std::vector<Tensor> inputs;
      for (const auto& s : op.shapes) inputs.push_back(random_tensor(s, rng, op.lo, op.hi));
      worst = std::max(worst, check_gradients(op.f, inputs).worst);
    }
    INFO(op.name);
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("straight-through one-hot passes the gradient unchanged") {
  const Var soft = parameter(Tensor::matrix({{0.2, 0.7, 0.1}, {0.0, 0.0, 0.0}}));
  const Var hard = straight_through_one_hot(soft);
  CHECK(hard.value() == Tensor::matrix({{0, 1, 0}, {0, 0, 0}}));
  const Tensor w = Tensor::matrix({{1, 2, 3}, {4, 5, 6}});
  CHECK(backward(sum(mul_const(hard, w))).of(soft) == w);
}

TEST_CASE("adam single step from zero") {
  ParamStore params;
  params.set("p", Tensor::scalar(0.0));
  AdamState state;
  adam_step(params, {{"p", Tensor::scalar(1.0)}}, state);
  CHECK(state.step == 1);
  CHECK(params.get("p").item() == doctest::Approx(-0.001).epsilon(1e-6));
}

TEST_CASE("adam with zero gradient leaves parameters and moments at zero") {
  ParamStore params;
  params.set("a", Tensor({2}, {1.5, -2.0}));
  AdamState state;
  adam_step(params, {{"a", Tensor({2})}}, state);
  CHECK(params.get("a") == Tensor({2}, {1.5, -2.0}));
  CHECK(state.first_moment.at("a") == Tensor({2}));
  CHECK(state.second_moment.at("a") == Tensor({2}));
  adam_step(params, {}, state);
  CHECK(state.step == 2);
  CHECK(params.get("a") == Tensor({2}, {1.5, -2.0}));
}

TEST_CASE("adam keeps identical parameters identical") {
  ParamStore params;
  params.set("a", Tensor({3}, {0.1, 0.2, 0.3}));
  params.set("b", Tensor({3}, {0.1, 0.2, 0.3}));
  AdamState state;
  for (int i = 0; i < 25; ++i) {
    const Tensor g = random_tensor({3}, static_cast<std::uint64_t>(i));
    adam_step(params, {{"a", g}, {"b", g}}, state);
  }
  CHECK(params.get("a") == params.get("b"));
}

TEST_CASE("adam rejects non-finite gradients by name and changes nothing") {
  ParamStore params;
  params.set("first", Tensor({2}, {1, 1}));
  params.set("second", Tensor({2}, {1, 1}));
  AdamState state;
  try {
    adam_step(params, {{"first", Tensor({2}, {1, 1})}, {"second", Tensor({2}, {NAN, 0})}}, state);
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("second") != std::string::npos);
  }
  CHECK(state.step == 0);
  CHECK(params.get("first") == Tensor({2}, {1, 1}));
  CHECK_THROWS_AS(adam_step(params, {{"third", Tensor({2})}}, state), ConfigMismatch);
  CHECK_THROWS_AS(adam_step(params, {{"first", Tensor({3})}}, state), ShapeError);
}

TEST_CASE("global norm clipping") {
  GradientMap g{{"a", Tensor({2}, {3, 0})}, {"b", Tensor({1}, {4})}};
  CHECK(clip_global_norm(g, 10.0) == doctest::Approx(5.0));
  CHECK(g.at("a")[0] == 3.0);
  CHECK(clip_global_norm(g, 1.0) == doctest::Approx(5.0));
  CHECK(g.at("a")[0] == doctest::Approx(0.6));
  CHECK(g.at("b")[0] == doctest::Approx(0.8));
}

TEST_CASE("checkpoint round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "gst_test_ckpt";
  std::filesystem::create_directories(dir);
  ParamStore params;
  params.set("w", random_tensor({3, 2}, 4));
  params.set("b", Tensor({2}, {0.1, 1.0 / 3.0}));
  save_checkpoint(dir / "c.json", {params, {{"note", "x"}}});
  const Checkpoint back = load_checkpoint(dir / "c.json");
  CHECK(back.params.get("w") == params.get("w"));
  CHECK(back.params.get("b") == params.get("b"));
  CHECK(back.metadata["note"] == "x");

  CHECK_THROWS_AS(load_checkpoint(dir / "missing.json"), IoError);
  std::ofstream(dir / "bad.json") << R"({"format_version": 99, "params": {}})";
  CHECK_THROWS_AS(load_checkpoint(dir / "bad.json"), FormatError);
  std::ofstream(dir / "garbage.json") << "not json";
  CHECK_THROWS_AS(load_checkpoint(dir / "garbage.json"), FormatError);
  std::filesystem::remove_all(dir);
}
