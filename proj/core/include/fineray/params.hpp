#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "fineray/rng.hpp"
#include "fineray/tape.hpp"
#include "fineray/tensor.hpp"

namespace fineray {

/// Named parameter tensors with a stable iteration order.
template <class Real>
class ParameterStore {
 public:
  Tensor<Real>& add(const std::string& name, Tensor<Real> t) {
    if (index_.count(name)) throw Error("ParameterStore: duplicate parameter " + name);
    index_[name] = names_.size();
    names_.push_back(name);
    values_.push_back(std::move(t));
    return values_.back();
  }

  bool has(const std::string& name) const { return index_.count(name) != 0; }

  Tensor<Real>& get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw Error("ParameterStore: unknown parameter " + name);
    return values_[it->second];
  }
  const Tensor<Real>& get(const std::string& name) const {
    return const_cast<ParameterStore*>(this)->get(name);
  }

  const std::vector<std::string>& names() const { return names_; }
  size_t size() const { return names_.size(); }

  int64_t total_count() const {
    int64_t n = 0;
    for (const auto& t : values_) n += t.size();
    return n;
  }

  int64_t count_with_prefix(const std::string& prefix) const {
    int64_t n = 0;
    for (size_t i = 0; i < names_.size(); ++i)
      if (names_[i].rfind(prefix, 0) == 0) n += values_[i].size();
    return n;
  }

  /// Uniform init in [-limit, limit]; each tensor draws from its own stream
  /// keyed by name, so init values do not depend on creation order of
  /// unrelated parameters.
  Tensor<Real>& add_uniform(const std::string& name, std::vector<int> shape, double limit,
                            uint64_t seed) {
    Tensor<Real> t = Tensor<Real>::zeros(std::move(shape));
    Rng rng = Rng::derive(seed, name);
    for (Real& v : t.data) v = static_cast<Real>(rng.uniform(-limit, limit));
    return add(name, std::move(t));
  }

  Tensor<Real>& add_zeros(const std::string& name, std::vector<int> shape) {
    return add(name, Tensor<Real>::zeros(std::move(shape)));
  }

  template <class R2>
  ParameterStore<R2> cast() const {
    ParameterStore<R2> out;
    for (size_t i = 0; i < names_.size(); ++i) {
      Tensor<R2> t;
      t.shape = values_[i].shape;
      t.data.assign(values_[i].data.begin(), values_[i].data.end());
      out.add(names_[i], std::move(t));
    }
    return out;
  }

 private:
  std::vector<std::string> names_;
  std::vector<Tensor<Real>> values_;
  std::unordered_map<std::string, size_t> index_;
};

/// Per-tape binding of parameters to leaf nodes. Modules request parameters
/// by name; the first use creates the leaf. After backward, gradients are
/// read back per bound parameter.
template <class Real>
class TapeParams {
 public:
  TapeParams(Tape<Real>& tape, ParameterStore<Real>& store) : tape_(&tape), store_(&store) {}

  typename Tape<Real>::Id operator()(const std::string& name) {
    auto it = ids_.find(name);
    if (it != ids_.end()) return it->second;
    auto id = tape_->leaf(store_->get(name));
    ids_[name] = id;
    bound_.push_back(name);
    return id;
  }

  /// Pre-binds a name to an existing tape node (e.g. a leaf created by a
  /// gradient-checking harness) instead of creating a fresh leaf.
  void bind(const std::string& name, typename Tape<Real>::Id id) {
    if (ids_.count(name)) throw Error("TapeParams: " + name + " already bound");
    ids_[name] = id;
    bound_.push_back(name);
  }

  Tape<Real>& tape() { return *tape_; }
  ParameterStore<Real>& store() { return *store_; }

  /// Names bound on this tape, in first-use order (deterministic).
  const std::vector<std::string>& bound() const { return bound_; }
  typename Tape<Real>::Id id_of(const std::string& name) const { return ids_.at(name); }

 private:
  Tape<Real>* tape_;
  ParameterStore<Real>* store_;
  std::unordered_map<std::string, typename Tape<Real>::Id> ids_;
  std::vector<std::string> bound_;
};

}  // namespace fineray
