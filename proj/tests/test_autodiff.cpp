// SPDX-FileCopyrightText: Copyright (c) 2026 The fdm-sde Authors
// SPDX-License-Identifier: Apache-2.0

#include "doctest.h"
#include "gradcheck.hpp"

#include "fdm/autodiff.hpp"
#include "fdm/rng.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

using fdm::ad::Array;
using fdm::ad::NodeId;
using fdm::ad::Tape;
using fdm::testing::gradcheck;

namespace {

Array random_array(std::size_t r, std::size_t c, fdm::Philox& rng, double lo = -1.5,
                   double hi = 1.5) {
  Array a(r, c);
  for (double& v : a.data()) v = lo + (hi - lo) * rng.uniform();
  return a;
}

// Contract an arbitrary-shaped node against fixed random weights so that
// every output entry contributes a distinct factor to the gradient.
NodeId contract(Tape& tape, NodeId x, std::uint64_t salt) {
  fdm::Philox rng(salt);
  const Array& v = tape.value(x);
  const NodeId w = tape.constant(random_array(v.rows(), v.cols(), rng));
  return tape.sum(tape.mul(x, w));
}

constexpr double kTol = 1e-4;

}  // namespace

TEST_CASE("forward values of basic ops") {
  Tape tape;
  const NodeId a = tape.constant(Array(2, 3, 1.0));
  const NodeId b = tape.constant(Array(3, 1, 2.0));
  const NodeId m = tape.matmul(a, b);
  CHECK(tape.value(m).rows() == 2);
  CHECK(tape.value(m).cols() == 1);
  CHECK(tape.value(m)(0, 0) == doctest::Approx(6.0));

  CHECK(tape.value(tape.tanh(tape.constant(Array::scalar(0.0)))).item() == 0.0);
  const NodeId v = tape.constant(Array(2, 1, std::vector<double>{3.0, 4.0}));
  CHECK(tape.value(tape.squared_norm(v)).item() == 25.0);
  CHECK(tape.value(tape.mean(v)).item() == 3.5);
  CHECK(tape.value(tape.softplus(tape.constant(Array::scalar(0.0)))).item() ==
        doctest::Approx(std::log(2.0)));
}

TEST_CASE("backward on small closed forms") {
  SUBCASE("x squared") {
    Tape tape;
    const NodeId x = tape.variable(Array::scalar(3.0));
    const auto g = tape.backward(tape.mul(x, x));
    CHECK(g.at(x).item() == 6.0);
  }
  SUBCASE("sum of identity times ones") {
    Tape tape;
    Array eye(2, 2);
    eye(0, 0) = eye(1, 1) = 1.0;
    const NodeId w = tape.variable(eye);
    const NodeId x = tape.constant(Array(2, 1, 1.0));
    const auto g = tape.backward(tape.sum(tape.matmul(w, x)));
    for (double v : g.at(w).data()) CHECK(v == 1.0);
  }
}

TEST_CASE("shape errors name the op and both shapes") {
  Tape tape;
  const NodeId a = tape.constant(Array(2, 3));
  const NodeId b = tape.constant(Array(2, 3));
  try {
    tape.matmul(a, b);
    FAIL("expected a shape error");
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    CHECK(msg.find("matmul") != std::string::npos);
    CHECK(msg.find("2x3") != std::string::npos);
  }
  CHECK_THROWS_AS(tape.add(a, tape.constant(Array(3, 1))), std::invalid_argument);
  CHECK_THROWS_AS(tape.mul(a, tape.constant(Array(2, 1))), std::invalid_argument);
  CHECK_THROWS_AS(tape.slice(a, 0, 3, 0, 1), std::invalid_argument);
}

TEST_CASE("backward rejects a non-scalar root") {
  Tape tape;
  const NodeId a = tape.variable(Array(2, 2, 1.0));
  CHECK_THROWS_AS(tape.backward(tape.tanh(a)), std::invalid_argument);
}

TEST_CASE("unreachable leaves get exactly zero gradient") {
  Tape tape;
  const NodeId used = tape.variable(Array(2, 1, 0.5));
  const NodeId unused = tape.variable(Array(3, 2, 7.0));
  const auto g = tape.backward(tape.squared_norm(used));
  REQUIRE(g.contains(unused));
  CHECK(g.at(unused).rows() == 3);
  CHECK(g.at(unused).cols() == 2);
  for (double v : g.at(unused).data()) CHECK(v == 0.0);
}

TEST_CASE("gradcheck over every op on randomized inputs") {
  fdm::Philox rng(2024);
  for (int trial = 0; trial < 5; ++trial) {
    const std::uint64_t salt = 100 + static_cast<std::uint64_t>(trial);
    CAPTURE(trial);

    {  // add and sub with bias broadcast
      auto f = [&](Tape& t, const std::vector<NodeId>& x) {
        return contract(t, t.sub(t.add(x[0], x[1]), x[2]), salt);
      };
      const auto r = gradcheck(f, {random_array(3, 4, rng), random_array(3, 1, rng),
                                   random_array(3, 4, rng)});
      CHECK(r.worst < kTol);
    }
    {  // mul
      auto f = [&](Tape& t, const std::vector<NodeId>& x) {
        return contract(t, t.mul(x[0], x[1]), salt);
      };
      CHECK(gradcheck(f, {random_array(2, 3, rng), random_array(2, 3, rng)}).worst < kTol);
    }
    {  // matmul
      auto f = [&](Tape& t, const std::vector<NodeId>& x) {
        return contract(t, t.matmul(x[0], x[1]), salt);
      };
      CHECK(gradcheck(f, {random_array(3, 2, rng), random_array(2, 4, rng)}).worst < kTol);
    }
    {  // tanh, softplus, exp, neg
      auto f = [&](Tape& t, const std::vector<NodeId>& x) {
        const NodeId y = t.add(t.tanh(x[0]), t.softplus(x[0]));
        return contract(t, t.add(y, t.neg(t.exp(x[0]))), salt);
      };
      CHECK(gradcheck(f, {random_array(3, 3, rng)}).worst < kTol);
    }
    {  // sum, mean, scale, squared_norm
      auto f = [&](Tape& t, const std::vector<NodeId>& x) {
        const NodeId s = t.mul(t.sum(x[0]), t.mean(x[0]));
        return t.add(s, t.scale(t.squared_norm(x[0]), -0.7));
      };
      CHECK(gradcheck(f, {random_array(2, 5, rng)}).worst < kTol);
    }
    {  // concat along both axes
      auto f = [&](Tape& t, const std::vector<NodeId>& x) {
        const std::vector<NodeId> rows{x[0], x[1]};
        const NodeId stacked = t.concat(rows, 0);  // 5 x 3
        const std::vector<NodeId> cols{stacked, x[2]};
        return contract(t, t.concat(cols, 1), salt);  // 5 x 4
      };
      CHECK(gradcheck(f, {random_array(2, 3, rng), random_array(3, 3, rng),
                          random_array(5, 1, rng)})
                .worst < kTol);
    }
    {  // slice
      auto f = [&](Tape& t, const std::vector<NodeId>& x) {
        return contract(t, t.tanh(t.slice(x[0], 1, 3, 0, 2)), salt);
      };
      CHECK(gradcheck(f, {random_array(4, 3, rng)}).worst < kTol);
    }
    {  // shared subexpressions accumulate
      auto f = [&](Tape& t, const std::vector<NodeId>& x) {
        const NodeId h = t.tanh(t.matmul(x[0], x[1]));
        return t.squared_norm(t.add(h, t.mul(h, h)));
      };
      CHECK(gradcheck(f, {random_array(2, 2, rng), random_array(2, 3, rng)}).worst < kTol);
    }
  }
}

TEST_CASE("replay and backward are bitwise deterministic") {
  fdm::Philox rng(7);
  auto build = [&](Tape& t, const Array& a, const Array& b) {
    const NodeId x = t.variable(a);
    const NodeId y = t.variable(b);
    const NodeId h = t.softplus(t.add(t.matmul(x, y), t.constant(Array(3, 1, 0.25))));
    return std::pair{std::vector<NodeId>{x, y}, t.mean(t.exp(t.neg(h)))};
  };
  const Array a = random_array(3, 4, rng);
  const Array b = random_array(4, 5, rng);

  Tape t1, t2;
  auto [ids1, root1] = build(t1, a, b);
  auto [ids2, root2] = build(t2, a, b);
  const auto g1 = t1.backward(root1);
  const auto g2 = t2.backward(root2);
  CHECK(t1.value(root1).item() == t2.value(root2).item());
  for (std::size_t k = 0; k < 2; ++k) {
    const auto& x = g1.at(ids1[k]).data();
    const auto& y = g2.at(ids2[k]).data();
    CHECK(std::memcmp(x.data(), y.data(), x.size() * sizeof(double)) == 0);
  }

  // Perturb, replay, restore, replay: values come back bit-for-bit.
  const double before = t1.value(root1).item();
  Array moved = a;
  moved.data()[0] += 0.5;
  t1.set_leaf_value(ids1[0], moved);
  t1.replay();
  CHECK(t1.value(root1).item() != before);
  t1.set_leaf_value(ids1[0], a);
  t1.replay();
  CHECK(t1.value(root1).item() == before);
}

TEST_CASE("tape is topologically ordered") {
  Tape tape;
  const NodeId a = tape.variable(Array(2, 2, 1.0));
  const NodeId b = tape.tanh(tape.matmul(a, a));
  const NodeId c = tape.sum(tape.add(a, b));
  for (NodeId id = 0; id <= c; ++id) {
    for (NodeId in : tape.inputs(id)) CHECK(in < id);
  }
  CHECK(tape.op(c) == fdm::ad::Op::sum);
  CHECK(std::string(fdm::ad::op_name(fdm::ad::Op::squared_norm)).size() > 0);
}
