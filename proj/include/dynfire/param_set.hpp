#pragma once

#include <map>
#include <string>
#include <vector>

#include "dynfire/tensor.hpp"

namespace dynfire {

/// Named, shape-tagged tensors in insertion order. Insertion order is the
/// serialization order of checkpoints.
template <typename T>
class BasicParamSet {
 public:
  struct Entry {
    std::string name;
    Tensor<T> tensor;
  };

  void add(std::string name, Tensor<T> tensor) {
    if (index_.contains(name)) throw ConfigError("duplicate parameter '" + name + "'");
    index_.emplace(name, entries_.size());
    entries_.push_back(Entry{std::move(name), std::move(tensor)});
  }

  bool contains(const std::string& name) const { return index_.contains(name); }

  Tensor<T>& at(const std::string& name) { return entries_[lookup(name)].tensor; }
  const Tensor<T>& at(const std::string& name) const { return entries_[lookup(name)].tensor; }

  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }

  std::size_t total_elements() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.tensor.size();
    return n;
  }

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.push_back(e.name);
    return out;
  }

  /// Same names and shapes, all zeros.
  BasicParamSet zeros_like() const {
    BasicParamSet out;
    for (const auto& e : entries_) out.add(e.name, Tensor<T>(e.tensor.shape()));
    return out;
  }

  template <typename U>
  BasicParamSet<U> cast() const {
    BasicParamSet<U> out;
    for (const auto& e : entries_) out.add(e.name, e.tensor.template cast<U>());
    return out;
  }

  friend bool operator==(const BasicParamSet& a, const BasicParamSet& b) {
    if (a.entries_.size() != b.entries_.size()) return false;
    for (std::size_t i = 0; i < a.entries_.size(); ++i) {
      if (a.entries_[i].name != b.entries_[i].name || !(a.entries_[i].tensor == b.entries_[i].tensor)) return false;
    }
    return true;
  }

 private:
  std::size_t lookup(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter '" + name + "'");
    return it->second;
  }

  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

using ParamSet = BasicParamSet<float>;

}  // namespace dynfire
