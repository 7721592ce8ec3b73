#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "ivope/data.hpp"
#include "ivope/error.hpp"

using namespace ivope;

namespace {

std::vector<double> state_histogram(const data::TransitionDataset& ds, std::size_t n_states) {
  std::vector<double> h(n_states, 0.0);
  for (std::size_t i = 0; i < ds.size(); ++i) h[ds.state_index(i)] += 1.0;
  for (double& v : h) v /= static_cast<double>(ds.size());
  return h;
}

}  // namespace

TEST(ChainDataset, DeterministicSingleEpisode) {
  const auto mdp = env::make_chain_mdp(100, 1.0, 0.99);
  const auto ds = data::generate_chain_dataset(mdp, 99, 3);
  ASSERT_EQ(ds.size(), 99u);
  for (std::size_t i = 0; i < 99; ++i) {
    EXPECT_EQ(ds.state_index(i), i);
    EXPECT_EQ(ds.next_state_index(i), i + 1);
  }
  EXPECT_TRUE(ds.terminal(98));
  EXPECT_FALSE(ds.terminal(97));
}

TEST(ChainDataset, PooledStatesAreUniform) {
  for (double p : {0.5, 1.0}) {
    const auto mdp = env::make_chain_mdp(100, p, 0.99);
    const auto h = state_histogram(data::generate_chain_dataset(mdp, 100000, 11), 100);
    for (std::size_t s = 0; s < 99; ++s) EXPECT_NEAR(h[s], 1.0 / 99.0, 0.01) << "p=" << p << " s=" << s;
    EXPECT_EQ(h[99], 0.0);
  }
}

TEST(ChainDataset, SameSeedSameBytes) {
  const auto mdp = env::make_chain_mdp(100, 0.5, 0.99);
  std::ostringstream a, b;
  data::write_csv(data::generate_chain_dataset(mdp, 5000, 42), a);
  data::write_csv(data::generate_chain_dataset(mdp, 5000, 42), b);
  EXPECT_EQ(a.str(), b.str());
  std::ostringstream c;
  data::write_csv(data::generate_chain_dataset(mdp, 5000, 43), c);
  EXPECT_NE(a.str(), c.str());
}

TEST(Shifted, WeightsAndFrequencies) {
  const auto mdp = env::make_chain_mdp(100, 0.5, 0.99);
  const auto w0 = data::shifted_state_weights(mdp, 0.0);
  for (std::size_t s = 0; s < 99; ++s) EXPECT_NEAR(w0[s], 1.0 / 99.0, 1e-14);
  const auto big = data::shifted_state_weights(mdp, 200.0);
  EXPECT_GT(big[98], 0.99);

  std::vector<double> expect(100, 0.0);
  double z = 0.0;
  for (std::size_t s = 0; s < 99; ++s) z += std::exp(-2.0 + 0.04 * static_cast<double>(s));
  for (std::size_t s = 0; s < 99; ++s) expect[s] = std::exp(-2.0 + 0.04 * static_cast<double>(s)) / z;
  const auto ds = data::resample_shifted(mdp, env::chain_policy(mdp), 1.0, 100000, 5);
  const auto h = state_histogram(ds, 100);
  for (std::size_t s = 0; s < 99; ++s) EXPECT_NEAR(h[s], expect[s], 0.01);
}

TEST(Split, RatioAndPartition) {
  const auto mdp = env::make_chain_mdp(100, 0.5, 0.99);
  const auto ds = data::generate_chain_dataset(mdp, 100, 1);
  const auto [train, valid] = data::split(ds, 0.9, 9);
  EXPECT_EQ(train.size(), 90u);
  EXPECT_EQ(valid.size(), 10u);
  EXPECT_EQ(train.split_tag(), data::SplitTag::train);
  EXPECT_EQ(valid.split_tag(), data::SplitTag::valid);

  std::multiset<std::tuple<std::size_t, std::size_t, bool>> all, parts;
  for (std::size_t i = 0; i < ds.size(); ++i) all.insert({ds.state_index(i), ds.next_state_index(i), ds.terminal(i)});
  for (const auto* part : {&train, &valid})
    for (std::size_t i = 0; i < part->size(); ++i)
      parts.insert({part->state_index(i), part->next_state_index(i), part->terminal(i)});
  EXPECT_EQ(all, parts);

  const auto [train2, valid2] = data::split(ds, 0.9, 9);
  EXPECT_TRUE(train.same_rows(train2));
  EXPECT_TRUE(valid.same_rows(valid2));
}

TEST(Split, FloorsToTrainAndRejectsTiny) {
  const auto mdp = env::make_chain_mdp(100, 0.5, 0.99);
  const auto ds = data::generate_chain_dataset(mdp, 101, 1);
  const auto [train, valid] = data::split(ds, 0.5, 0);
  EXPECT_EQ(train.size(), 50u);
  EXPECT_EQ(valid.size(), 51u);
  EXPECT_THROW(data::split(data::generate_chain_dataset(mdp, 1, 1), 0.9, 0), InvalidArgument);
  EXPECT_THROW(data::split(ds, 1.0, 0), InvalidArgument);
}

TEST(Csv, RoundTripIsFieldExact) {
  data::TransitionDataset ds(2, 77, "handmade");
  ds.push_back(std::vector<double>{0.1, 1.0 / 3.0}, 1, -2.5e-17, std::vector<double>{std::nextafter(1.0, 2.0), 0.0},
               false);
  ds.push_back(std::vector<double>{-1e300, 5.0}, 0, 123456.789, std::vector<double>{0.0, 0.0}, true);
  std::stringstream buf;
  data::write_csv(ds, buf);
  const auto back = data::read_csv(buf);
  EXPECT_TRUE(ds.same_rows(back));
  EXPECT_EQ(back.seed(), 77u);
  EXPECT_EQ(back.source(), "handmade");
}

TEST(Csv, EmptyRoundTrip) {
  data::TransitionDataset ds(1, 0, "empty");
  std::stringstream buf;
  data::write_csv(ds, buf);
  const auto back = data::read_csv(buf);
  EXPECT_EQ(back.size(), 0u);
  EXPECT_EQ(back.state_dim(), 1u);
}

TEST(Csv, HandcraftedFile) {
  std::istringstream in(
      "s_0,a,r,sp_0,terminal\n"
      "0,0,0.5,1,0\n"
      "1,0,0.25,1,0\n"
      "1,0,1,2,1\n");
  const auto ds = data::read_csv(in);
  ASSERT_EQ(ds.size(), 3u);
  EXPECT_EQ(ds.row(0), (data::Transition{{0.0}, 0, 0.5, {1.0}, false}));
  EXPECT_EQ(ds.row(2), (data::Transition{{1.0}, 0, 1.0, {2.0}, true}));
}

TEST(Csv, CorruptRewardReportsLine) {
  std::istringstream in(
      "s_0,a,r,sp_0,terminal\n"
      "0,0,0.5,1,0\n"
      "1,0,abc,1,0\n");
  try {
    data::read_csv(in);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}
