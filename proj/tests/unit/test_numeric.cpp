#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "doctest.h"
#include "gradcheck.hpp"
#include "gradient_suite.hpp"

#include "agg/error.hpp"
#include "agg/numeric/checkpoint.hpp"
#include "agg/numeric/optimizer.hpp"

using namespace agg;
using agg::testing::random_matrix;
using agg::testing::randomize;

namespace {

nn::ParamTensor tensor(const std::string& name, std::vector<std::size_t> shape, std::vector<double> values) {
  nn::ParamTensor p(name, std::move(shape));
  p.set_values(values);
  return p;
}

}  // namespace

TEST_SUITE("numeric") {

TEST_CASE("dense: identity weights pass the input through") {
  auto w = tensor("w", {3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  auto b = tensor("b", {3}, {0, 0, 0});
  const nn::Vector x{0.3, -1.5, 2.0};
  CHECK(nn::dense_forward(x, w, b, nn::Activation::none) == x);
}

TEST_CASE("dense: zero weights with softmax give the uniform vector") {
  nn::ParamTensor w("w", {4, 2}), b("b", {4});
  for (const nn::Vector& x : {nn::Vector{0, 0}, nn::Vector{5, -3}}) {
    for (double v : nn::dense_forward(x, w, b, nn::Activation::softmax)) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));
  }
}

TEST_CASE("dense: hand matrix-vector product") {
  auto w = tensor("w", {2, 2}, {1, 2, 3, 4});
  auto b = tensor("b", {2}, {1, 1});
  // (1*1 + 2*1 + 1, 3*1 + 4*1 + 1)
  CHECK(nn::dense_forward(nn::Vector{1, 1}, w, b, nn::Activation::none) == nn::Vector{4, 8});
}

TEST_CASE("dense: shape mismatch is a dimension error") {
  nn::ParamTensor w("w", {2, 3}), b("b", {2});
  try {
    nn::dense_forward(nn::Vector{1, 2}, w, b, nn::Activation::none);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::dimension);
  }
}

TEST_CASE("conv1d: width-1 averaging kernel leaves a single channel unchanged") {
  auto k = tensor("k", {1, 1, 1}, {1.0});
  auto b = tensor("b", {1}, {0.0});
  const std::vector<nn::Vector> x{{1}, {-2}, {3.5}};
  CHECK(nn::conv1d_forward(x, k, b, 1, nn::Padding::same) == x);
}

TEST_CASE("conv1d: same padding with stride 4 on 16 steps gives 4 outputs") {
  nn::ParamTensor k("k", {2, 5, 3}), b("b", {2});
  const std::vector<nn::Vector> x(16, nn::Vector(3, 1.0));
  CHECK(nn::conv1d_forward(x, k, b, 4, nn::Padding::same).size() == 4);
  for (std::size_t len = 1; len <= 40; ++len) {
    CHECK(nn::conv_output_length(static_cast<Eigen::Index>(len), 5, 4, nn::Padding::same) ==
          static_cast<Eigen::Index>((len + 3) / 4));
  }
}

TEST_CASE("conv1d: hand cross-correlation with (1, 0, -1), valid") {
  auto k = tensor("k", {1, 3, 1}, {1, 0, -1});
  auto b = tensor("b", {1}, {0});
  const auto y = nn::conv1d_forward({{1}, {2}, {4}, {7}}, k, b, 1, nn::Padding::valid);
  REQUIRE(y.size() == 2);
  CHECK(y[0][0] == -3.0);
  CHECK(y[1][0] == -5.0);
}

TEST_CASE("conv1d: valid padding shorter than the kernel is a dimension error") {
  auto k = tensor("k", {1, 3, 1}, {1, 0, -1});
  auto b = tensor("b", {1}, {0});
  try {
    nn::conv1d_forward({{1}, {2}}, k, b, 1, nn::Padding::valid);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::dimension);
  }
}

TEST_CASE("gru: zero parameters blend the hidden state with zero") {
  nn::GruCell cell("g", 3, 4);
  // Gates sit at sigmoid(0) = 0.5 and the candidate at tanh(0) = 0:
  // h' = 0.5 * 0 + 0.5 * h.
  const nn::Vector h{1.0, -2.0, 0.5, 4.0};
  const nn::Vector out = nn::gru_cell(nn::Vector{0.3, 0.1, -0.7}, h, cell);
  for (std::size_t i = 0; i < h.size(); ++i) CHECK(out[i] == doctest::Approx(0.5 * h[i]).epsilon(1e-15));
  CHECK(nn::gru_cell(nn::Vector(3, 0.0), nn::Vector(4, 0.0), cell) == nn::Vector(4, 0.0));
}

TEST_CASE("gru: seeded parameters are bit-reproducible") {
  auto run = [] {
    nn::GruCell cell("g", 3, 5);
    Rng rng(17);
    cell.init(rng);
    return nn::gru_cell(nn::Vector{0.2, -0.4, 0.9}, nn::Vector{0.1, 0.0, -0.3, 0.5, 0.7}, cell);
  };
  CHECK(run() == run());
}

TEST_CASE("backward: loss = sum(W x) puts x in every row of dW") {
  nn::ParamTensor w("w", {3, 2});
  Rng rng(5);
  randomize(w, rng);
  const nn::Matrix x = (nn::Matrix(1, 2) << 0.7, -1.3).finished();
  nn::Tape tape;
  tape.backward(nn::sum(nn::matmul_nt(tape.constant(x), tape.param(w))));
  for (Eigen::Index r = 0; r < 3; ++r) {
    CHECK(w.grad()(r, 0) == doctest::Approx(0.7));
    CHECK(w.grad()(r, 1) == doctest::Approx(-1.3));
  }
  Rng check_rng(6);
  const auto g = agg::testing::gradcheck({&w}, [&](nn::Tape& t) { return nn::sum(nn::matmul_nt(t.constant(x), t.param(w))); },
                                         check_rng);
  CHECK(g.max_rel_error < 1e-4);
}

TEST_CASE("backward: a parameter the loss ignores gets zero gradient, and calls accumulate") {
  nn::ParamTensor used("used", {1, 2}), unused("unused", {1, 2});
  used.set_values(std::vector<double>{1.0, 2.0});
  nn::Tape tape;
  tape.param(unused);
  nn::Var loss = nn::sum(tape.param(used));
  tape.backward(loss);
  CHECK(unused.grad().isZero());
  CHECK(used.grad()(0, 0) == 1.0);
  tape.backward(loss);
  CHECK(used.grad()(0, 0) == 2.0);
}

TEST_CASE("frozen parameters record no gradient") {
  nn::ParamTensor p("p", {1, 2});
  p.set_values(std::vector<double>{1.0, 2.0});
  nn::Tape tape;
  tape.freeze(p);
  nn::Var v = tape.param(p);
  CHECK_FALSE(v.requires_grad());
  tape.backward(nn::sum(nn::mul(v, tape.constant(nn::Matrix::Ones(1, 2)))));
  CHECK(p.grad().isZero());
}

TEST_CASE("sgd: one step, momentum 0") {
  nn::ParamTensor p("p", {1});
  p.accumulate_grad(nn::Matrix::Constant(1, 1, 1.0));
  nn::SgdMomentum sgd({0.1, 0.0, 10, nn::LrSchedule::cosine});
  sgd.step({&p});
  CHECK(p.value()(0, 0) == doctest::Approx(-0.1).epsilon(1e-15));
  CHECK(p.grad().isZero());
}

TEST_CASE("sgd: two momentum steps with a constant gradient") {
  nn::ParamTensor p("p", {1});
  nn::SgdMomentum sgd({0.1, 0.9, 2, nn::LrSchedule::constant});
  for (int i = 0; i < 2; ++i) {
    p.accumulate_grad(nn::Matrix::Constant(1, 1, 1.0));
    sgd.step({&p});
  }
  // v1 = 1, v2 = 1.9: p = -0.1 - 0.19
  CHECK(p.value()(0, 0) == doctest::Approx(-0.29).epsilon(1e-14));
}

TEST_CASE("cosine schedule endpoints and midpoint") {
  const nn::OptimizerConfig c{0.1, 0.9, 5000, nn::LrSchedule::cosine};
  CHECK(std::abs(nn::scheduled_learning_rate(c, 0) - 0.1) <= 1e-12);
  CHECK(std::abs(nn::scheduled_learning_rate(c, 2500) - 0.05) <= 1e-12);
  CHECK(std::abs(nn::scheduled_learning_rate(c, 5000)) <= 1e-12);
  for (std::size_t s = 1; s <= 5000; ++s) CHECK(nn::scheduled_learning_rate(c, s) <= nn::scheduled_learning_rate(c, s - 1));
}

TEST_CASE("schedule: stepping past total_steps is a schedule error") {
  nn::ParamTensor p("p", {1});
  nn::SgdMomentum sgd({0.1, 0.9, 1, nn::LrSchedule::cosine});
  sgd.step({&p});
  try {
    sgd.step({&p});
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::schedule);
  }
  try {
    nn::scheduled_learning_rate({0.1, 0.9, 10, nn::LrSchedule::cosine}, 11);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::schedule);
  }
}

TEST_CASE("param tensors reject non-finite writes") {
  nn::ParamTensor p("p", {2});
  CHECK_THROWS_AS(p.set_values(std::vector<double>{1.0, std::nan("")}), Error);
  CHECK_THROWS_AS(p.fill(std::numeric_limits<double>::infinity()), Error);
  CHECK(p.value().isZero());
}

TEST_CASE("softmax sums to one and stays positive for finite logits") {
  Rng rng(11);
  for (int i = 0; i < 200; ++i) {
    nn::Tape tape;
    const nn::Matrix z = random_matrix(3, 1 + static_cast<Eigen::Index>(rng.index(9)), rng, 20.0);
    const nn::Matrix y = nn::softmax_rows(tape.constant(z)).value();
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      CHECK(std::abs(y.row(r).sum() - 1.0) <= 1e-9);
      CHECK((y.row(r).array() > 0.0).all());
    }
  }
}

TEST_CASE("gradient suite: every op agrees with central differences") {
  for (const auto& row : agg::testing::gradient_suite(100)) {
    INFO(row.op << " worst relative error " << row.worst << " over " << row.coords << " coordinates, " << row.kinks
                << " skipped at relu kinks");
    CHECK(row.cases >= 100);
    CHECK(row.worst < 1e-4);
    CHECK(row.kinks * 50 < row.coords);
  }
}

TEST_CASE("checkpoint round trip is bit-exact") {
  nn::ParamTensor a("a", {2, 3}), b("b", {4});
  Rng rng(3);
  randomize(a, rng);
  randomize(b, rng);
  const auto path = std::filesystem::temp_directory_path() / "agg_numeric_ckpt.bin";
  nn::save_checkpoint(path, {&a, &b});
  nn::ParamTensor a2("a", {2, 3}), b2("b", {4});
  nn::load_checkpoint(path, {&b2, &a2});
  CHECK(a2.value() == a.value());
  CHECK(b2.value() == b.value());
  const auto entries = nn::read_checkpoint(path);
  REQUIRE(entries.size() == 2);
  CHECK(entries[0].name == "a");
  CHECK(entries[0].shape == std::vector<std::size_t>{2, 3});

  nn::ParamTensor wrong("a", {3, 2});
  CHECK_THROWS_AS(nn::load_checkpoint(path, {&wrong}), Error);
  std::filesystem::remove(path);
}

TEST_CASE("determinism: identical seeds give bit-identical parameters after training steps") {
  auto train = [] {
    nn::DenseStack net("net", {3, 5, 2}, nn::Activation::relu, nn::Activation::none);
    Rng rng(99);
    net.init(rng);
    nn::ParamList params;
    net.collect(params);
    nn::SgdMomentum sgd({0.1, 0.9, 20, nn::LrSchedule::cosine});
    Rng data(7);
    for (int step = 0; step < 20; ++step) {
      nn::Tape tape;
      const nn::Matrix x = random_matrix(4, 3, data);
      nn::Var y = net.forward(tape, tape.constant(x));
      tape.backward(nn::mean(nn::mul(y, y)));
      sgd.step(params);
    }
    std::vector<nn::Matrix> out;
    for (auto* p : params) out.push_back(p->value());
    return out;
  };
  CHECK(train() == train());
}

}  // TEST_SUITE
