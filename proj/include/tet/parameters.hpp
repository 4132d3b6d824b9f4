#pragma once

#include <cmath>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "tet/tape.hpp"

namespace tet {

/// Named trainable tensors in registration order. The order is part of the
/// checkpoint format and must stay stable.
template <typename T>
class ParameterStore {
 public:
  struct Entry {
    std::string name;
    Tensor<T> value;
  };

  std::size_t add(const std::string& name, Tensor<T> value) {
    require(!index_.contains(name), [&] { return "duplicate parameter name '" + name + "'"; });
    index_.emplace(name, entries_.size());
    entries_.push_back({name, std::move(value)});
    return entries_.size() - 1;
  }

  std::size_t size() const { return entries_.size(); }
  const Entry& operator[](std::size_t i) const { return entries_[i]; }
  Tensor<T>& value(std::size_t i) { return entries_[i].value; }
  const Tensor<T>& value(std::size_t i) const { return entries_[i].value; }
  const std::string& name(std::size_t i) const { return entries_[i].name; }

  std::optional<std::size_t> find(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }
  std::size_t at(const std::string& name) const {
    auto i = find(name);
    require(i.has_value(), [&] { return "unknown parameter '" + name + "'"; });
    return *i;
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.value.size();
    return n;
  }

  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  bool operator==(const ParameterStore& o) const {
    if (entries_.size() != o.entries_.size()) return false;
    for (std::size_t i = 0; i < entries_.size(); ++i)
      if (entries_[i].name != o.entries_[i].name || entries_[i].value != o.entries_[i].value) return false;
    return true;
  }

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// One gradient tensor per parameter, shaped like the parameter.
template <typename T>
class GradientBuffer {
 public:
  GradientBuffer() = default;
  explicit GradientBuffer(const ParameterStore<T>& store) {
    grads_.reserve(store.size());
    for (const auto& e : store) grads_.emplace_back(e.value.shape());
  }

  std::size_t size() const { return grads_.size(); }
  Tensor<T>& operator[](std::size_t i) { return grads_[i]; }
  const Tensor<T>& operator[](std::size_t i) const { return grads_[i]; }

  void zero() {
    for (auto& g : grads_) g.fill(T{0});
  }

  void accumulate(const GradientBuffer& other) {
    require(other.size() == size(), "gradient buffer size mismatch");
    for (std::size_t i = 0; i < grads_.size(); ++i) {
      auto dst = grads_[i].data();
      auto src = other.grads_[i].data();
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
    }
  }

 private:
  std::vector<Tensor<T>> grads_;
};

/// Lazily places parameters on a tape the first time a forward pass touches
/// them, so each parameter maps to exactly one leaf per tape.
template <typename T>
class ParamBinder {
 public:
  ParamBinder(Tape<T>& tape, const ParameterStore<T>& store, GradientBuffer<T>* grads)
      : tape_(tape), store_(store), grads_(grads), bound_(store.size()) {}

  Var<T> operator()(std::size_t index) {
    auto& slot = bound_[index];
    if (!slot) slot = tape_.parameter(store_.value(index), grads_ ? &(*grads_)[index] : nullptr);
    return *slot;
  }

  Tape<T>& tape() { return tape_; }

 private:
  Tape<T>& tape_;
  const ParameterStore<T>& store_;
  GradientBuffer<T>* grads_;
  std::vector<std::optional<Var<T>>> bound_;
};

/// Glorot-uniform initialisation for a fan_in×fan_out weight.
template <typename T>
Tensor<T> xavier_uniform(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Tensor<T> t = Tensor<T>::matrix(rows, cols);
  for (auto& v : t.data()) v = static_cast<T>(dist(rng));
  return t;
}

template <typename T>
Tensor<T> normal_init(std::size_t rows, std::size_t cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Tensor<T> t = Tensor<T>::matrix(rows, cols);
  for (auto& v : t.data()) v = static_cast<T>(dist(rng));
  return t;
}

}  // namespace tet
