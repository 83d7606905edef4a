#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "calibra/error.hpp"

namespace calibra {

/// One CTR vector r together with its prior probability lambda(r).
struct CtrState {
  std::vector<double> r;
  double prob = 0.0;
};

inline bool same_point(std::span<const double> a, std::span<const double> b, double tol = 1e-12) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::abs(a[i] - b[i]) > tol) return false;
  }
  return true;
}

/// Finite prior over CTR vectors. Duplicate vectors are merged; probabilities
/// must sum to one within 1e-12 and every coordinate must lie in [r_min, 1].
class CtrPrior {
 public:
  CtrPrior(std::vector<CtrState> states, std::optional<double> min_ctr = std::nullopt) {
    if (states.empty()) throw ValidationError("CTR prior has no states");
    const std::size_t n = states.front().r.size();
    if (n == 0) throw ValidationError("CTR vectors must have at least one coordinate");
    double total = 0.0;
    double lowest = 1.0;
    for (const auto& st : states) {
      if (st.r.size() != n) throw ValidationError("CTR vectors have inconsistent lengths");
      if (!(st.prob > 0.0) || !std::isfinite(st.prob)) {
        throw ValidationError("every CTR state needs a positive probability");
      }
      for (double v : st.r) {
        if (!std::isfinite(v) || v > 1.0) throw ValidationError("CTR values must lie in (0, 1]");
        lowest = std::min(lowest, v);
      }
      total += st.prob;
    }
    if (std::abs(total - 1.0) > 1e-12) {
      throw ValidationError("CTR prior probabilities sum to " + std::to_string(total) + ", not 1");
    }
    min_ctr_ = min_ctr.value_or(lowest);
    if (!(min_ctr_ > 0.0)) throw ValidationError("minimum admissible CTR must be positive");
    if (lowest < min_ctr_ - 1e-15) {
      throw ValidationError("a CTR value lies below the minimum admissible CTR");
    }
    for (auto& st : states) {
      auto it = std::find_if(states_.begin(), states_.end(),
                             [&](const CtrState& s) { return same_point(s.r, st.r); });
      if (it == states_.end()) {
        states_.push_back(std::move(st));
      } else {
        it->prob += st.prob;
      }
    }
    n_ = n;
  }

  /// Rescales probabilities to sum to one before validating.
  static CtrPrior normalized(std::vector<CtrState> states, std::optional<double> min_ctr = std::nullopt) {
    double total = 0.0;
    for (const auto& st : states) total += st.prob;
    if (!(total > 0.0)) throw ValidationError("CTR prior has zero total probability");
    for (auto& st : states) st.prob /= total;
    // Re-summing after division can still be off by a few ulps.
    double resum = 0.0;
    for (const auto& st : states) resum += st.prob;
    if (!states.empty()) states.back().prob += 1.0 - resum;
    return CtrPrior(std::move(states), min_ctr);
  }

  std::size_t bidders() const { return n_; }
  std::size_t size() const { return states_.size(); }
  const std::vector<CtrState>& states() const { return states_; }
  const CtrState& operator[](std::size_t k) const { return states_[k]; }
  double min_ctr() const { return min_ctr_; }

  double bidder_min(std::size_t i) const {
    double m = 1.0;
    for (const auto& st : states_) m = std::min(m, st.r[i]);
    return m;
  }

  double bidder_max(std::size_t i) const {
    double m = 0.0;
    for (const auto& st : states_) m = std::max(m, st.r[i]);
    return m;
  }

  std::optional<std::size_t> find(std::span<const double> r, double tol = 1e-12) const {
    for (std::size_t k = 0; k < states_.size(); ++k) {
      if (same_point(states_[k].r, r, tol)) return k;
    }
    return std::nullopt;
  }

  /// E[r_i] for every bidder.
  std::vector<double> mean() const {
    std::vector<double> m(n_, 0.0);
    for (const auto& st : states_) {
      for (std::size_t i = 0; i < n_; ++i) m[i] += st.prob * st.r[i];
    }
    return m;
  }

  /// Smallest marginal probability P(r_i = v) over bidders and support values.
  double min_marginal_probability() const {
    double best = 1.0;
    for (std::size_t i = 0; i < n_; ++i) {
      std::vector<std::pair<double, double>> marg;
      for (const auto& st : states_) {
        auto it = std::find_if(marg.begin(), marg.end(),
                               [&](const auto& p) { return std::abs(p.first - st.r[i]) <= 1e-12; });
        if (it == marg.end()) {
          marg.emplace_back(st.r[i], st.prob);
        } else {
          it->second += st.prob;
        }
      }
      for (const auto& [v, p] : marg) best = std::min(best, p);
    }
    return best;
  }

  /// Two-bidder exchangeability: lambda(a, b) == lambda(b, a).
  bool exchangeable(double tol = 1e-12) const {
    if (n_ != 2) return false;
    for (const auto& st : states_) {
      const std::vector<double> mirror{st.r[1], st.r[0]};
      const auto k = find(mirror);
      if (!k || std::abs(states_[*k].prob - st.prob) > tol) return false;
    }
    return true;
  }

 private:
  std::vector<CtrState> states_;
  std::size_t n_ = 0;
  double min_ctr_ = 0.0;
};

}  // namespace calibra
