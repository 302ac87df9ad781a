#include "advp/envgen/level_family.hpp"

#include <stdexcept>
#include <string>

namespace advp::envgen {

std::string_view to_string(Split split) { return split == Split::train ? "train" : "full"; }

Split parse_split(std::string_view text) {
  if (text == "train") return Split::train;
  if (text == "full") return Split::full;
  throw std::invalid_argument("unknown split '" + std::string(text) + "' (train|full)");
}

LevelFamily::LevelFamily(std::size_t universe_size, std::vector<std::size_t> train_indices)
    : universe_size_(universe_size), train_(std::move(train_indices)) {
  if (universe_size_ == 0) throw std::invalid_argument("LevelFamily: empty universe");
  train_mask_.assign(universe_size_, 0);
  for (std::size_t m : train_) {
    if (m >= universe_size_)
      throw std::invalid_argument("LevelFamily: train index " + std::to_string(m) +
                                  " outside universe of size " + std::to_string(universe_size_));
    if (train_mask_[m]) throw std::invalid_argument("LevelFamily: duplicate train index");
    train_mask_[m] = 1;
  }
}

LevelFamily LevelFamily::first_n(std::size_t universe_size, std::size_t train_count) {
  if (train_count > universe_size)
    throw std::invalid_argument("LevelFamily: train count exceeds universe size");
  std::vector<std::size_t> train(train_count);
  for (std::size_t i = 0; i < train_count; ++i) train[i] = i;
  return LevelFamily(universe_size, std::move(train));
}

double LevelFamily::m_coeff() const {
  return static_cast<double>(train_.size()) / static_cast<double>(universe_size_);
}

double LevelFamily::p_full(std::size_t level) const {
  return level < universe_size_ ? 1.0 / static_cast<double>(universe_size_) : 0.0;
}

double LevelFamily::p_train(std::size_t level) const {
  if (!in_train(level)) return 0.0;
  return p_full(level) / m_coeff();
}

bool LevelFamily::in_train(std::size_t level) const {
  return level < universe_size_ && train_mask_[level];
}

std::size_t sample_level(const LevelFamily& family, Split split, Rng& rng) {
  if (split == Split::train) {
    const auto& train = family.train_indices();
    if (train.empty()) throw std::invalid_argument("sample_level: train set is empty");
    std::uniform_int_distribution<std::size_t> pick(0, train.size() - 1);
    return train[pick(rng)];
  }
  if (family.universe_size() == 0) throw std::invalid_argument("sample_level: empty universe");
  std::uniform_int_distribution<std::size_t> pick(0, family.universe_size() - 1);
  return pick(rng);
}

}  // namespace advp::envgen
