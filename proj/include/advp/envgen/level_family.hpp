#pragma once

#include <cstddef>
#include <string_view>
#include <vector>

#include "advp/common/random.hpp"

namespace advp::envgen {

enum class Split { train, full };

std::string_view to_string(Split split);
Split parse_split(std::string_view text);

/// Uniform distribution over level indices 0..universe_size-1 together with a
/// training subset. The training distribution is the full distribution
/// restricted to the subset and renormalized by its mass.
class LevelFamily {
 public:
  LevelFamily() = default;
  /// Rejects an empty universe, out-of-range or duplicate train indices.
  LevelFamily(std::size_t universe_size, std::vector<std::size_t> train_indices);

  /// Train set = {0, ..., train_count - 1}.
  static LevelFamily first_n(std::size_t universe_size, std::size_t train_count);

  std::size_t universe_size() const { return universe_size_; }
  const std::vector<std::size_t>& train_indices() const { return train_; }

  /// Probability mass of the train subset under the full distribution.
  double m_coeff() const;
  double p_full(std::size_t level) const;
  double p_train(std::size_t level) const;
  bool in_train(std::size_t level) const;

 private:
  std::size_t universe_size_ = 0;
  std::vector<std::size_t> train_;
  std::vector<char> train_mask_;
};

/// Draws a level: uniform over the train subset or over the universe.
std::size_t sample_level(const LevelFamily& family, Split split, Rng& rng);

}  // namespace advp::envgen
