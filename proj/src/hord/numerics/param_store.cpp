#include "hord/numerics/param_store.hpp"

#include "hord/error.hpp"

namespace hord::num {

ParamStore::ParamStore(std::uint64_t seed) : seed_(seed), rng_(seed) {}

ParamStore::Entry& ParamStore::insert(const std::string& name, Tensor tensor, bool trainable) {
  if (name.empty()) throw UsageError("parameter names must be non-empty");
  auto [it, inserted] = entries_.emplace(name, Entry{std::move(tensor), trainable});
  if (!inserted) throw UsageError("parameter '" + name + "' registered twice");
  return it->second;
}

Tensor& ParamStore::add(const std::string& name, Shape shape, Init init) {
  Tensor t(std::move(shape));
  auto values = t.data();
  switch (init.kind) {
    case Init::Kind::constant:
      for (auto& v : values) v = init.a;
      break;
    case Init::Kind::uniform: {
      std::uniform_real_distribution<double> dist(-init.a, init.a);
      for (auto& v : values) v = dist(rng_);
      break;
    }
    case Init::Kind::normal: {
      std::normal_distribution<double> dist(0.0, init.a);
      for (auto& v : values) v = dist(rng_);
      break;
    }
  }
  t.set_requires_grad(true);
  return insert(name, std::move(t), true).tensor;
}

Tensor& ParamStore::add_buffer(const std::string& name, Shape shape, double fill) {
  return insert(name, Tensor(std::move(shape), fill), false).tensor;
}

bool ParamStore::contains(const std::string& name) const { return entries_.count(name) != 0; }

bool ParamStore::trainable(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw UsageError("unknown parameter '" + name + "'");
  return it->second.trainable;
}

Tensor& ParamStore::get(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw UsageError("unknown parameter '" + name + "'");
  return it->second.tensor;
}

const Tensor& ParamStore::get(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw UsageError("unknown parameter '" + name + "'");
  return it->second.tensor;
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, entry] : entries_) out.push_back(name);
  return out;
}

std::vector<std::string> ParamStore::trainable_names() const {
  std::vector<std::string> out;
  for (const auto& [name, entry] : entries_) {
    if (entry.trainable) out.push_back(name);
  }
  return out;
}

std::size_t ParamStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, entry] : entries_) {
    if (entry.trainable) n += entry.tensor.size();
  }
  return n;
}

void ParamStore::zero_grad() {
  for (auto& [name, entry] : entries_) entry.tensor.zero_grad();
}

}  // namespace hord::num
