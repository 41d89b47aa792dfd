#include "doctest.h"
#include "support.hpp"

#include <algorithm>
#include <limits>

using namespace ipg;
using namespace ipg::testing;

namespace {

Reply gram_reply(const Broadcast& b, const AgentShard& s) {
  return Reply{agent_gradient(s, b.x), Matrix(s.A.transpose() * s.A)};
}

}  // namespace

TEST_CASE("a single agent reproduces the centralized computation") {
  const auto data = make_collective(random_matrix(8, 3, 1), random_vector(3, 2));
  const Network net(partition(data, 1));
  const Vector x = random_vector(3, 3);
  const auto agg = net.execute_round(Broadcast{0, x, nullptr}, gram_reply);
  CHECK(agg.vec_sum == Vector(data.A.transpose() * (data.A * x - data.b)));
  CHECK(*agg.mat_sum == Matrix(data.A.transpose() * data.A));
}

TEST_CASE("block sums recover A^T A and the collective gradient") {
  const auto data = make_collective(random_matrix(37, 6, 4), random_vector(6, 5));
  const Network net(partition(data, 10));
  const Vector x = random_vector(6, 6);
  const auto agg = net.execute_round(Broadcast{0, x, nullptr}, gram_reply);
  const Matrix AtA = data.A.transpose() * data.A;
  const Vector g = data.A.transpose() * (data.A * x - data.b);
  CHECK((*agg.mat_sum - AtA).norm() <= 1e-10 * AtA.norm());
  CHECK((agg.vec_sum - g).norm() <= 1e-10 * g.norm());
}

TEST_CASE("aggregation does not depend on evaluation order or execution mode") {
  const auto data = make_collective(random_matrix(40, 5, 7), random_vector(5, 8));
  auto shards = partition(data, 8);
  draw_observation_noise({0.3, 5}, shards);
  const Network seq(shards);
  const Network conc(shards, AgentExecution::concurrent);
  const Vector x = random_vector(5, 9);
  const auto base = seq.execute_round(Broadcast{0, x, nullptr}, gram_reply);
  std::vector<int> order{0, 1, 2, 3, 4, 5, 6, 7};
  std::mt19937 gen(3);
  for (int k = 0; k < 5; ++k) {
    std::shuffle(order.begin(), order.end(), gen);
    const auto permuted = seq.execute_round(Broadcast{0, x, nullptr}, gram_reply, order);
    CHECK(permuted.vec_sum == base.vec_sum);
    CHECK(*permuted.mat_sum == *base.mat_sum);
  }
  const auto threaded = conc.execute_round(Broadcast{0, x, nullptr}, gram_reply);
  CHECK(threaded.vec_sum == base.vec_sum);
  CHECK(*threaded.mat_sum == *base.mat_sum);
}

TEST_CASE("invalid evaluation orders are rejected") {
  const auto data = make_collective(random_matrix(6, 2, 1), Vector::Ones(2));
  const Network net(partition(data, 3));
  const Vector x = Vector::Zero(2);
  const std::vector<int> short_order{0, 1};
  const std::vector<int> repeated{0, 0, 1};
  const std::vector<int> out_of_range{0, 1, 3};
  CHECK_THROWS_AS(net.execute_round(Broadcast{0, x, nullptr}, gram_reply, short_order),
                  std::invalid_argument);
  CHECK_THROWS_AS(net.execute_round(Broadcast{0, x, nullptr}, gram_reply, repeated),
                  std::invalid_argument);
  CHECK_THROWS_AS(net.execute_round(Broadcast{0, x, nullptr}, gram_reply, out_of_range),
                  std::invalid_argument);
}

TEST_CASE("compact row replies aggregate to the full matrix") {
  const auto data = make_collective(nine_point_laplacian(5), Vector::Ones(25));
  const auto shards = partition(data, 4);
  const Network net(shards);
  const Matrix K = random_matrix(25, 25, 3);
  const auto full = net.execute_round(Broadcast{0, Vector::Zero(25), &K},
                                      [](const Broadcast& b, const AgentShard& s) {
                                        return Reply{Vector::Zero(25), agent_r_vectors(s, *b.K, 4)};
                                      });
  const auto compact = net.execute_round(Broadcast{0, Vector::Zero(25), &K},
                                         [](const Broadcast& b, const AgentShard& s) {
                                           Reply r = agent_r_reply(s, *b.K, 4);
                                           r.vec = Vector::Zero(25);
                                           return r;
                                         });
  CHECK((*compact.mat_sum - *full.mat_sum).norm() <= 1e-12 * full.mat_sum->norm());
}

TEST_CASE("non-finite replies are flagged") {
  const auto data = make_collective(random_matrix(4, 2, 1), Vector::Ones(2));
  const Network net(partition(data, 2));
  const auto agg = net.execute_round(Broadcast{0, Vector::Zero(2), nullptr},
                                     [](const Broadcast&, const AgentShard& s) {
                                       Vector v = Vector::Zero(2);
                                       if (s.agent_id == 2) v(0) = std::numeric_limits<double>::infinity();
                                       return Reply{v, std::nullopt};
                                     });
  CHECK_FALSE(agg.finite);
}

TEST_CASE("network construction checks its shards") {
  CHECK_THROWS_AS(Network(std::vector<AgentShard>{}), std::invalid_argument);
  const auto data = make_collective(random_matrix(6, 2, 1), Vector::Ones(2));
  auto shards = partition(data, 3);
  std::swap(shards[0], shards[1]);
  CHECK_THROWS_AS(Network{shards}, std::invalid_argument);
  const Network ok(partition(data, 3));
  CHECK(ok.agent_count() == 3);
  CHECK(ok.dim() == 2);
}
