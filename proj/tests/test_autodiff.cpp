#include <cmath>
#include <vector>

#include "doctest.h"
#include "test_util.hpp"
#include "umk/graph.hpp"

using umk::Graph;
using umk::Tensor;
using testutil::fill_normal;

namespace {

// Scalar objective for gradient checks: sum(op_output * fixed_weights).
Tensor weighted_sum(Graph& g, const Tensor& x, const Tensor& weights) {
  return umk::sum(g, umk::mul(g, x, weights));
}

Tensor random_tensor(Tensor::Shape shape, umk::Rng& rng, double stddev = 0.5) {
  Tensor t = Tensor::zeros(std::move(shape));
  fill_normal(t, rng, stddev);
  return t;
}

}  // namespace

TEST_CASE("matmul forward and backward match a hand-rolled loop oracle") {
  // Oracle first: plain triple loops, no Eigen.
  umk::Rng rng(1234);
  Tensor a = random_tensor({3, 4}, rng);
  Tensor b = random_tensor({4, 2}, rng);
  Tensor dc = random_tensor({3, 2}, rng);

  double c_oracle[3][2] = {};
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 4; ++k)
      for (int j = 0; j < 2; ++j) c_oracle[i][j] += a.data()[i * 4 + k] * b.data()[k * 2 + j];
  double da_oracle[3][4] = {};
  double db_oracle[4][2] = {};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 2; ++j)
      for (int k = 0; k < 4; ++k) {
        da_oracle[i][k] += dc.data()[i * 2 + j] * b.data()[k * 2 + j];
        db_oracle[k][j] += a.data()[i * 4 + k] * dc.data()[i * 2 + j];
      }

  Graph g;
  a.set_requires_grad(true);
  b.set_requires_grad(true);
  Tensor c = umk::matmul(g, a, b);
  Tensor loss = weighted_sum(g, c, dc);
  g.backward(loss);

  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 2; ++j)
      CHECK(c.data()[i * 2 + j] == doctest::Approx(c_oracle[i][j]).epsilon(1e-12));
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 4; ++k)
      CHECK(a.grad()[i * 4 + k] == doctest::Approx(da_oracle[i][k]).epsilon(1e-12));
  for (int k = 0; k < 4; ++k)
    for (int j = 0; j < 2; ++j)
      CHECK(b.grad()[k * 2 + j] == doctest::Approx(db_oracle[k][j]).epsilon(1e-12));
}

TEST_CASE("softmax of [0,0] is [0.5,0.5] and rows always sum to one") {
  Graph g;
  Tensor x = Tensor::zeros({1, 2});
  Tensor y = umk::softmax(g, x);
  CHECK(y.data()[0] == 0.5);
  CHECK(y.data()[1] == 0.5);

  umk::Rng rng(5);
  Tensor z = random_tensor({7, 13}, rng, 3.0);
  Tensor s = umk::softmax(g, z);
  for (std::size_t r = 0; r < 7; ++r) {
    double total = 0;
    for (std::size_t c = 0; c < 13; ++c) {
      CHECK(s.data()[r * 13 + c] >= 0.0);
      total += s.data()[r * 13 + c];
    }
    CHECK(std::abs(total - 1.0) <= 1e-12);
  }
}

TEST_CASE("cross entropy over uniform logits equals ln(vocab)") {
  Graph g;
  Tensor logits = Tensor::zeros({1, 64});
  std::vector<int> target = {17};
  Tensor nll = umk::cross_entropy_nll(g, logits, target);
  CHECK(nll.value() == doctest::Approx(std::log(64.0)).epsilon(1e-12));
}

TEST_CASE("cross entropy gradient at uniform logits is p minus one-hot") {
  Graph g;
  Tensor logits = Tensor::zeros({1, 4});
  logits.set_requires_grad(true);
  std::vector<int> target = {0};
  Tensor nll = umk::cross_entropy_nll(g, logits, target);
  g.backward(nll);
  CHECK(logits.grad()[0] == doctest::Approx(-0.75));
  CHECK(logits.grad()[1] == doctest::Approx(0.25));
  CHECK(logits.grad()[2] == doctest::Approx(0.25));
  CHECK(logits.grad()[3] == doctest::Approx(0.25));
}

TEST_CASE("grad of sum is all ones") {
  Graph g;
  umk::Rng rng(2);
  Tensor x = random_tensor({2, 3, 2}, rng);
  x.set_requires_grad(true);
  Tensor loss = umk::sum(g, x);
  g.backward(loss);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(x.grad()[i] == 1.0);
}

TEST_CASE("backward misuse raises graph errors") {
  Graph g;
  Tensor x = Tensor::full({2}, 1.0);
  x.set_requires_grad(true);
  Tensor y = umk::scale(g, x, 2.0);
  CHECK_THROWS_AS(g.backward(y), umk::graph_error);  // non-scalar

  Tensor loss = umk::sum(g, y);
  g.backward(loss);
  CHECK_THROWS_AS(g.backward(loss), umk::graph_error);  // twice without reset

  g.reset();
  Tensor loss2 = umk::sum(g, umk::scale(g, x, 1.0));
  g.backward(loss2);  // fine after reset

  Graph other;
  CHECK_THROWS_AS(other.backward(loss2), umk::graph_error);  // detached
}

TEST_CASE("gradients are zeroed per backward unless accumulation is requested") {
  Tensor x = Tensor::full({3}, 2.0);
  x.set_requires_grad(true);
  {
    Graph g;
    g.backward(umk::sum(g, x));
  }
  CHECK(x.grad()[0] == 1.0);
  {
    Graph g;
    g.backward(umk::sum(g, x));
  }
  CHECK(x.grad()[0] == 1.0);  // fresh, not 2.0
  {
    Graph g;
    g.backward(umk::sum(g, x), /*accumulate=*/true);
  }
  CHECK(x.grad()[0] == 2.0);  // explicit accumulation
}

TEST_CASE("shape errors name the op") {
  Graph g;
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({2, 3});
  CHECK_THROWS_WITH_AS(umk::matmul(g, a, b), doctest::Contains("matmul"), umk::shape_error);
  CHECK_THROWS_WITH_AS(umk::add(g, a, Tensor::zeros({4})), doctest::Contains("add"),
                       umk::shape_error);
  CHECK_THROWS_AS(umk::embedding_gather(g, a, std::vector<int>{5}), umk::index_error);
  Tensor logits = Tensor::zeros({1, 3});
  CHECK_THROWS_AS(umk::cross_entropy_nll(g, logits, std::vector<int>{3}), umk::index_error);
}

TEST_CASE("analytic gradients of every op match central finite differences") {
  umk::Rng rng(77);
  const double tol = 1e-6;

  auto check_unary = [&](auto&& make_output, Tensor::Shape in_shape, Tensor::Shape out_shape) {
    Tensor x = random_tensor(in_shape, rng);
    Tensor w = random_tensor(out_shape, rng);
    x.set_requires_grad(true);
    Graph g;
    Tensor loss = weighted_sum(g, make_output(g, x), w);
    g.backward(loss);
    std::vector<double> analytic(x.grad(), x.grad() + x.size());
    auto value = [&]() {
      Graph h;
      h.set_recording(false);
      return weighted_sum(h, make_output(h, x), w).value();
    };
    CHECK(testutil::max_fd_error(x, analytic, value) <= tol);
  };

  check_unary([](Graph& g, const Tensor& x) { return umk::softmax(g, x); }, {3, 5}, {3, 5});
  check_unary([](Graph& g, const Tensor& x) { return umk::log_softmax(g, x); }, {3, 5}, {3, 5});
  check_unary([](Graph& g, const Tensor& x) { return umk::gelu(g, x); }, {4, 3}, {4, 3});
  check_unary([](Graph& g, const Tensor& x) { return umk::scale(g, x, -1.7); }, {6}, {6});
  check_unary([](Graph& g, const Tensor& x) { return umk::reshape(g, x, {2, 6}); }, {3, 4},
              {2, 6});
  check_unary([](Graph& g, const Tensor& x) { return umk::slice(g, x, 1, 1, 2); }, {3, 5},
              {3, 2});
  check_unary(
      [](Graph& g, const Tensor& x) {
        return umk::gather_flat(g, x, {5, 0, 3, 3}, {2, 2});
      },
      {2, 4}, {2, 2});

  SUBCASE("matmul and matmul_nt") {
    Tensor a = random_tensor({3, 4}, rng);
    Tensor b = random_tensor({4, 2}, rng);
    Tensor w = random_tensor({3, 2}, rng);
    a.set_requires_grad(true);
    b.set_requires_grad(true);
    Graph g;
    g.backward(weighted_sum(g, umk::matmul(g, a, b), w));
    std::vector<double> da(a.grad(), a.grad() + a.size());
    std::vector<double> db(b.grad(), b.grad() + b.size());
    auto value = [&]() {
      Graph h;
      h.set_recording(false);
      return weighted_sum(h, umk::matmul(h, a, b), w).value();
    };
    CHECK(testutil::max_fd_error(a, da, value) <= tol);
    CHECK(testutil::max_fd_error(b, db, value) <= tol);

    Tensor bt = random_tensor({2, 4}, rng);
    bt.set_requires_grad(true);
    Graph g2;
    g2.backward(weighted_sum(g2, umk::matmul_nt(g2, a, bt), w));
    std::vector<double> dbt(bt.grad(), bt.grad() + bt.size());
    auto value_nt = [&]() {
      Graph h;
      h.set_recording(false);
      return weighted_sum(h, umk::matmul_nt(h, a, bt), w).value();
    };
    CHECK(testutil::max_fd_error(bt, dbt, value_nt) <= tol);
  }

  SUBCASE("add with row broadcast, mul, concat") {
    Tensor a = random_tensor({3, 4}, rng);
    Tensor bias = random_tensor({4}, rng);
    Tensor w = random_tensor({3, 4}, rng);
    a.set_requires_grad(true);
    bias.set_requires_grad(true);
    Graph g;
    g.backward(weighted_sum(g, umk::add(g, a, bias), w));
    std::vector<double> dbias(bias.grad(), bias.grad() + bias.size());
    auto value = [&]() {
      Graph h;
      h.set_recording(false);
      return weighted_sum(h, umk::add(h, a, bias), w).value();
    };
    CHECK(testutil::max_fd_error(bias, dbias, value) <= tol);

    Tensor m = random_tensor({2, 3}, rng);
    Tensor n = random_tensor({2, 3}, rng);
    Tensor wm = random_tensor({2, 3}, rng);
    m.set_requires_grad(true);
    Graph g2;
    g2.backward(weighted_sum(g2, umk::mul(g2, m, n), wm));
    std::vector<double> dm(m.grad(), m.grad() + m.size());
    auto value_mul = [&]() {
      Graph h;
      h.set_recording(false);
      return weighted_sum(h, umk::mul(h, m, n), wm).value();
    };
    CHECK(testutil::max_fd_error(m, dm, value_mul) <= tol);

    Tensor p = random_tensor({2, 3}, rng);
    Tensor q = random_tensor({4, 3}, rng);
    Tensor wc = random_tensor({6, 3}, rng);
    p.set_requires_grad(true);
    q.set_requires_grad(true);
    Graph g3;
    std::vector<Tensor> parts = {p, q};
    g3.backward(weighted_sum(g3, umk::concat(g3, parts, 0), wc));
    std::vector<double> dp(p.grad(), p.grad() + p.size());
    std::vector<double> dq(q.grad(), q.grad() + q.size());
    auto value_cat = [&]() {
      Graph h;
      h.set_recording(false);
      std::vector<Tensor> ps = {p, q};
      return weighted_sum(h, umk::concat(h, ps, 0), wc).value();
    };
    CHECK(testutil::max_fd_error(p, dp, value_cat) <= tol);
    CHECK(testutil::max_fd_error(q, dq, value_cat) <= tol);
  }

  SUBCASE("layer_norm wrt input and affine params") {
    Tensor x = random_tensor({3, 6}, rng);
    Tensor gamma = random_tensor({6}, rng, 0.3);
    Tensor beta = random_tensor({6}, rng, 0.3);
    for (std::size_t i = 0; i < gamma.size(); ++i) gamma.data()[i] += 1.0;
    Tensor w = random_tensor({3, 6}, rng);
    x.set_requires_grad(true);
    gamma.set_requires_grad(true);
    beta.set_requires_grad(true);
    Graph g;
    g.backward(weighted_sum(g, umk::layer_norm(g, x, gamma, beta), w));
    std::vector<double> dx(x.grad(), x.grad() + x.size());
    std::vector<double> dgamma(gamma.grad(), gamma.grad() + gamma.size());
    std::vector<double> dbeta(beta.grad(), beta.grad() + beta.size());
    auto value = [&]() {
      Graph h;
      h.set_recording(false);
      return weighted_sum(h, umk::layer_norm(h, x, gamma, beta), w).value();
    };
    CHECK(testutil::max_fd_error(x, dx, value) <= tol);
    CHECK(testutil::max_fd_error(gamma, dgamma, value) <= tol);
    CHECK(testutil::max_fd_error(beta, dbeta, value) <= tol);
  }

  SUBCASE("embedding gather and cross entropy") {
    Tensor table = random_tensor({9, 4}, rng);
    std::vector<int> ids = {2, 7, 2, 0};
    Tensor w = random_tensor({4, 4}, rng);
    table.set_requires_grad(true);
    Graph g;
    g.backward(weighted_sum(g, umk::embedding_gather(g, table, ids), w));
    std::vector<double> dt(table.grad(), table.grad() + table.size());
    auto value = [&]() {
      Graph h;
      h.set_recording(false);
      return weighted_sum(h, umk::embedding_gather(h, table, ids), w).value();
    };
    CHECK(testutil::max_fd_error(table, dt, value) <= tol);

    Tensor logits = random_tensor({3, 5}, rng, 1.5);
    std::vector<int> targets = {4, 0, 2};
    logits.set_requires_grad(true);
    Graph g2;
    g2.backward(umk::cross_entropy_nll(g2, logits, targets));
    std::vector<double> dl(logits.grad(), logits.grad() + logits.size());
    auto value_ce = [&]() {
      Graph h;
      h.set_recording(false);
      return umk::cross_entropy_nll(h, logits, targets).value();
    };
    CHECK(testutil::max_fd_error(logits, dl, value_ce) <= tol);
  }
}

TEST_CASE("recording off computes values without touching the tape") {
  Graph g;
  g.set_recording(false);
  Tensor x = Tensor::full({2}, 3.0);
  x.set_requires_grad(true);
  Tensor y = umk::scale(g, x, 2.0);
  CHECK(y.data()[0] == 6.0);
  CHECK(g.node_count() == 0);
}

// Random compositions over the op set: build a small DAG of compatible ops,
// collapse it to a scalar, and gradient-check every leaf.
TEST_CASE("random op compositions pass finite-difference checks") {
  const double tol = 1e-6;
  for (std::uint64_t instance = 0; instance < 20; ++instance) {
    umk::Rng rng(9100 + instance);
    std::vector<Tensor> leaves;
    auto new_leaf = [&](Tensor::Shape shape) {
      Tensor t = Tensor::zeros(std::move(shape));
      fill_normal(t, rng, 0.6);
      t.set_requires_grad(true);
      leaves.push_back(t);
      return t;
    };

    // The recipe (op choices and partner shapes) must be replayable so the
    // FD closure can recompute the same loss from mutated leaf values.
    struct Step {
      int op;
      std::size_t input;
      std::size_t partner;  // leaf index for binary ops
    };
    std::vector<Step> steps;
    std::vector<Tensor::Shape> pool_shapes;
    pool_shapes.push_back({2, 3});
    new_leaf({2, 3});
    const int depth = 3 + static_cast<int>(rng.uniform_below(4));
    for (int s = 0; s < depth; ++s) {
      Step step;
      step.op = static_cast<int>(rng.uniform_below(7));
      step.input = rng.uniform_below(pool_shapes.size());
      const Tensor::Shape in_shape = pool_shapes[step.input];
      Tensor::Shape out_shape = in_shape;
      switch (step.op) {
        case 0:  // gelu
        case 1:  // softmax
        case 2:  // log_softmax
          break;
        case 3: {  // add with fresh same-shape leaf
          new_leaf(in_shape);
          step.partner = leaves.size() - 1;
          break;
        }
        case 4: {  // mul with fresh same-shape leaf
          new_leaf(in_shape);
          step.partner = leaves.size() - 1;
          break;
        }
        case 5: {  // matmul with fresh (cols x 2) leaf
          new_leaf({in_shape[1], 2});
          step.partner = leaves.size() - 1;
          out_shape = {in_shape[0], 2};
          break;
        }
        case 6: {  // layer_norm with fresh affine leaves
          new_leaf({in_shape[1]});
          Tensor gamma = leaves.back();
          for (std::size_t i = 0; i < gamma.size(); ++i) gamma.data()[i] += 1.5;
          new_leaf({in_shape[1]});
          step.partner = leaves.size() - 2;
          break;
        }
      }
      steps.push_back(step);
      pool_shapes.push_back(out_shape);
    }
    Tensor weights = Tensor::zeros(pool_shapes.back());
    fill_normal(weights, rng, 0.7);

    auto build = [&](Graph& g) {
      std::vector<Tensor> pool = {leaves[0]};
      for (const Step& step : steps) {
        const Tensor& x = pool[step.input];
        switch (step.op) {
          case 0: pool.push_back(umk::gelu(g, x)); break;
          case 1: pool.push_back(umk::softmax(g, x)); break;
          case 2: pool.push_back(umk::log_softmax(g, x)); break;
          case 3: pool.push_back(umk::add(g, x, leaves[step.partner])); break;
          case 4: pool.push_back(umk::mul(g, x, leaves[step.partner])); break;
          case 5: pool.push_back(umk::matmul(g, x, leaves[step.partner])); break;
          case 6:
            pool.push_back(
                umk::layer_norm(g, x, leaves[step.partner], leaves[step.partner + 1], 1e-3));
            break;
        }
      }
      return umk::sum(g, umk::mul(g, pool.back(), weights));
    };

    Graph g;
    Tensor loss = build(g);
    g.backward(loss);
    auto value = [&]() {
      Graph h;
      h.set_recording(false);
      return build(h).value();
    };
    for (Tensor& leaf : leaves) {
      std::vector<double> analytic(leaf.grad(), leaf.grad() + leaf.size());
      CHECK(testutil::max_fd_error(leaf, analytic, value) <= tol);
    }
  }
}
