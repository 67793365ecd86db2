#pragma once

// Hyperband search over network depth, width, learning rate and batch size, with
// training epochs as the budgeted resource.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "certopt/surrogate.hpp"

namespace certopt::tuner {

struct SearchSpace {
  std::vector<std::size_t> depth_choices;  // hidden layer counts
  std::vector<std::size_t> width_choices;  // shared by all hidden layers
  std::vector<double> lr_choices;
  std::vector<std::size_t> batch_choices;

  // depths 1..6, widths 20..240 step 20, lr {1e-2, 1e-3, 1e-4}, batch {32}.
  static SearchSpace defaults();
  void validate() const;
};

struct Candidate {
  std::vector<std::size_t> widths;  // input, hidden..., 1
  double learning_rate = 1e-3;
  std::size_t batch_size = 32;

  std::string key() const;
  std::uint64_t hash() const;
};

struct Round {
  std::size_t configs = 0;
  std::size_t epochs = 0;  // cumulative epochs each configuration has trained after this round
};

struct Bracket {
  std::size_t s = 0;
  std::size_t n0 = 0;
  double r0 = 0.0;
  std::vector<Round> rounds;
};

struct HyperbandPlan {
  std::size_t max_resource = 0;  // R
  std::size_t eta = 3;
  std::size_t s_max = 0;
  std::vector<Bracket> brackets;  // s = s_max down to 0

  // Epochs spent by one bracket when every round trains from scratch.
  static std::size_t bracket_cost(const Bracket& b);
};

// Throws ArgumentError if R < 1 or eta < 2.
HyperbandPlan make_plan(std::size_t max_resource, std::size_t eta);

struct LeaderboardEntry {
  Candidate candidate;
  std::size_t bracket = 0;
  std::size_t epochs_trained = 0;
  double val_mse = 0.0;
  bool diverged = false;
  std::size_t rank = 0;
};

struct SearchResult {
  Candidate best;
  std::vector<LeaderboardEntry> leaderboard;  // sorted by rank
};

// `base` supplies split fractions, seed for data splits and activation; the search
// itself trains with a constant learning rate and no early stopping.
// Throws SearchFailed if every configuration diverges.
SearchResult run_search(const SearchSpace& space, const surrogate::RegressionData& data, const HyperbandPlan& plan,
                        std::uint64_t seed, const surrogate::TrainConfig& base = {});

nlohmann::json leaderboard_to_json(const std::vector<LeaderboardEntry>& leaderboard);

}  // namespace certopt::tuner
