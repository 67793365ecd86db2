#include "certopt/tuner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <sstream>

#include "certopt/errors.hpp"
#include "certopt/rng.hpp"

namespace certopt::tuner {

using nlohmann::json;

SearchSpace SearchSpace::defaults() {
  SearchSpace s;
  s.depth_choices = {1, 2, 3, 4, 5, 6};
  for (std::size_t w = 20; w <= 240; w += 20) s.width_choices.push_back(w);
  s.lr_choices = {1e-2, 1e-3, 1e-4};
  s.batch_choices = {32};
  return s;
}

void SearchSpace::validate() const {
  if (depth_choices.empty() || width_choices.empty() || lr_choices.empty() || batch_choices.empty()) {
    throw ArgumentError("search space: every choice set must be nonempty");
  }
  auto positive = [](std::size_t v) { return v > 0; };
  if (!std::all_of(depth_choices.begin(), depth_choices.end(), positive) ||
      !std::all_of(width_choices.begin(), width_choices.end(), positive) ||
      !std::all_of(batch_choices.begin(), batch_choices.end(), positive)) {
    throw ArgumentError("search space: depths, widths and batch sizes must be positive");
  }
  if (!std::all_of(lr_choices.begin(), lr_choices.end(), [](double v) { return v > 0.0; })) {
    throw ArgumentError("search space: learning rates must be positive");
  }
}

std::string Candidate::key() const {
  std::ostringstream os;
  os << "w=";
  for (std::size_t i = 0; i < widths.size(); ++i) os << (i ? "-" : "") << widths[i];
  os << ";lr=" << format_double(learning_rate) << ";b=" << batch_size;
  return os.str();
}

std::uint64_t Candidate::hash() const { return fnv1a(key()); }

std::size_t HyperbandPlan::bracket_cost(const Bracket& b) {
  std::size_t total = 0;
  for (const auto& r : b.rounds) total += r.configs * r.epochs;
  return total;
}

HyperbandPlan make_plan(std::size_t max_resource, std::size_t eta) {
  if (max_resource < 1) throw ArgumentError("hyperband: R must be at least 1");
  if (eta < 2) throw ArgumentError("hyperband: eta must be at least 2");
  HyperbandPlan plan;
  plan.max_resource = max_resource;
  plan.eta = eta;
  // floor(log_eta R) without floating-point logarithms.
  for (std::size_t p = eta; p <= max_resource; p *= eta) ++plan.s_max;

  const double R = static_cast<double>(max_resource);
  const double e = static_cast<double>(eta);
  for (std::size_t s = plan.s_max + 1; s-- > 0;) {
    Bracket b;
    b.s = s;
    const double eta_s = std::pow(e, static_cast<double>(s));
    b.n0 = static_cast<std::size_t>(std::ceil(static_cast<double>(plan.s_max + 1) * eta_s / static_cast<double>(s + 1) - 1e-9));
    b.r0 = R / eta_s;
    std::size_t eta_pow_s = 1;
    for (std::size_t i = 0; i < s; ++i) eta_pow_s *= eta;
    std::size_t n = b.n0;
    std::size_t eta_pow_i = 1;
    for (std::size_t i = 0; i <= s; ++i) {
      // floor(R eta^i / eta^s) in integers: the last round gets exactly R epochs.
      b.rounds.push_back(Round{n, std::max<std::size_t>(1, max_resource * eta_pow_i / eta_pow_s)});
      n = std::max<std::size_t>(1, n / eta);
      eta_pow_i *= eta;
    }
    plan.brackets.push_back(std::move(b));
  }
  return plan;
}

namespace {

Candidate sample_candidate(const SearchSpace& space, std::size_t n_inputs, Rng& rng) {
  Candidate c;
  const std::size_t depth = space.depth_choices[rng.below(space.depth_choices.size())];
  const std::size_t width = space.width_choices[rng.below(space.width_choices.size())];
  c.learning_rate = space.lr_choices[rng.below(space.lr_choices.size())];
  c.batch_size = space.batch_choices[rng.below(space.batch_choices.size())];
  c.widths.push_back(n_inputs);
  for (std::size_t d = 0; d < depth; ++d) c.widths.push_back(width);
  c.widths.push_back(1);
  return c;
}

struct Arm {
  LeaderboardEntry entry;
  std::size_t order = 0;
  std::unique_ptr<surrogate::Trainer> trainer;
};

bool arm_less(const Arm& a, const Arm& b) {
  if (a.entry.val_mse != b.entry.val_mse) return a.entry.val_mse < b.entry.val_mse;
  const auto ha = a.entry.candidate.hash();
  const auto hb = b.entry.candidate.hash();
  if (ha != hb) return ha < hb;
  return a.order < b.order;
}

}  // namespace

SearchResult run_search(const SearchSpace& space, const surrogate::RegressionData& data, const HyperbandPlan& plan,
                        std::uint64_t seed, const surrogate::TrainConfig& base) {
  space.validate();
  if (data.x.rows() == 0) throw ArgumentError("hyperband: dataset is empty");
  Rng rng = Rng::derive(seed, "hyperband");
  std::vector<LeaderboardEntry> finished;
  std::size_t order = 0;
  std::string last_error;

  for (const Bracket& bracket : plan.brackets) {
    std::vector<Arm> arms;
    for (std::size_t i = 0; i < bracket.n0; ++i) {
      Arm arm;
      arm.entry.candidate = sample_candidate(space, data.x.cols(), rng);
      arm.entry.bracket = bracket.s;
      arm.order = order++;
      arms.push_back(std::move(arm));
    }
    for (std::size_t round = 0; round < bracket.rounds.size(); ++round) {
      const std::size_t target_epochs = bracket.rounds[round].epochs;
      for (Arm& arm : arms) {
        if (arm.entry.diverged) continue;
        try {
          if (!arm.trainer) {
            surrogate::TrainConfig cfg = base;
            cfg.learning_rate = arm.entry.candidate.learning_rate;
            cfg.batch_size = arm.entry.candidate.batch_size;
            cfg.schedule = surrogate::LrSchedule::constant;
            cfg.patience = 0;
            cfg.epochs = plan.max_resource;
            cfg.seed = mix64(seed ^ arm.entry.candidate.hash() ^ arm.order);
            arm.trainer = std::make_unique<surrogate::Trainer>(data, arm.entry.candidate.widths, cfg);
          }
          // Checkpoint reuse: survivors resume from where the previous round stopped.
          arm.trainer->train_epochs(target_epochs - arm.trainer->epochs_trained());
          arm.entry.epochs_trained = arm.trainer->epochs_trained();
          arm.entry.val_mse = arm.trainer->validation_loss();
        } catch (const TrainingDiverged& e) {
          arm.entry.diverged = true;
          arm.entry.epochs_trained = e.epoch();
          arm.entry.val_mse = std::numeric_limits<double>::infinity();
          last_error = arm.entry.candidate.key() + ": " + e.what();
          arm.trainer.reset();
        }
      }
      std::stable_sort(arms.begin(), arms.end(), arm_less);
      const bool last_round = round + 1 == bracket.rounds.size();
      const std::size_t keep = last_round ? 0 : std::max<std::size_t>(1, arms.size() / plan.eta);
      for (std::size_t i = keep; i < arms.size(); ++i) finished.push_back(arms[i].entry);
      arms.resize(keep);
    }
  }

  std::vector<std::size_t> idx(finished.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    const auto& ea = finished[a];
    const auto& eb = finished[b];
    if (ea.val_mse != eb.val_mse) return ea.val_mse < eb.val_mse;
    return ea.candidate.hash() < eb.candidate.hash();
  });
  SearchResult result;
  for (std::size_t r = 0; r < idx.size(); ++r) {
    LeaderboardEntry e = finished[idx[r]];
    e.rank = r + 1;
    result.leaderboard.push_back(std::move(e));
  }
  if (result.leaderboard.empty() || result.leaderboard.front().diverged) {
    throw SearchFailed("hyperband: all " + std::to_string(finished.size()) +
                       " configurations diverged; last failure: " + last_error);
  }
  result.best = result.leaderboard.front().candidate;
  return result;
}

json leaderboard_to_json(const std::vector<LeaderboardEntry>& leaderboard) {
  json out = json::array();
  for (const auto& e : leaderboard) {
    json val = e.diverged ? json(nullptr) : json(e.val_mse);
    out.push_back({{"widths", e.candidate.widths},
                   {"lr", e.candidate.learning_rate},
                   {"batch", e.candidate.batch_size},
                   {"epochs_trained", e.epochs_trained},
                   {"val_mse", val},
                   {"diverged", e.diverged},
                   {"bracket", e.bracket},
                   {"rank", e.rank}});
  }
  return out;
}

}  // namespace certopt::tuner
