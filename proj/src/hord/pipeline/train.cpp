#include "hord/pipeline/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>

#include "hord/error.hpp"

namespace hord::pipeline {

std::vector<std::vector<std::size_t>> epoch_batches(
    const std::vector<std::vector<std::size_t>>& ids, std::size_t batch_p, std::size_t batch_k,
    std::mt19937_64& rng) {
  if (ids.size() < batch_p) {
    throw UsageError("batch_p=" + std::to_string(batch_p) + " exceeds the " +
                     std::to_string(ids.size()) + " training identities");
  }
  std::size_t total = 0;
  for (const auto& members : ids) {
    if (members.size() < 2) throw UsageError("every training identity needs at least 2 samples");
    total += members.size();
  }
  const std::size_t count = (total + batch_p * batch_k - 1) / (batch_p * batch_k);

  std::vector<std::size_t> pool;
  std::vector<std::vector<std::size_t>> batches;
  batches.reserve(count);
  for (std::size_t b = 0; b < count; ++b) {
    std::vector<std::size_t> chosen;
    while (chosen.size() < batch_p) {
      if (pool.empty()) {
        pool.resize(ids.size());
        std::iota(pool.begin(), pool.end(), 0);
        std::shuffle(pool.begin(), pool.end(), rng);
      }
      const auto id = pool.back();
      pool.pop_back();
      if (std::find(chosen.begin(), chosen.end(), id) == chosen.end()) chosen.push_back(id);
    }
    std::vector<std::size_t> batch;
    for (auto id : chosen) {
      auto members = ids[id];
      std::shuffle(members.begin(), members.end(), rng);
      for (std::size_t j = 0; j < batch_k; ++j) batch.push_back(members[j % members.size()]);
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

double learning_rate(const Config& config, std::size_t epoch) {
  const std::size_t first = config.epochs / 4, second = 2 * config.epochs / 3;
  double lr = config.lr;
  if (epoch > first) lr *= 0.1;
  if (epoch > second) lr *= 0.1;
  return lr;
}

std::string format_loss_trace(const std::vector<double>& epoch_loss) {
  std::string out = "epoch,loss\n";
  char line[64];
  for (std::size_t e = 0; e < epoch_loss.size(); ++e) {
    std::snprintf(line, sizeof line, "%zu,%.9g\n", e + 1, epoch_loss[e]);
    out += line;
  }
  return out;
}

TrainResult train(const Dataset& data, const Config& config, const EpochCallback& on_epoch) {
  config.validate();
  if (data.K != config.K || data.c != config.C || data.h != config.h || data.w != config.w) {
    throw UsageError("dataset dimensions K=" + std::to_string(data.K) + " c=" +
                     std::to_string(data.c) + " h=" + std::to_string(data.h) + " w=" +
                     std::to_string(data.w) + " differ from the config");
  }
  const Split split = split_dataset(data);

  std::map<std::uint32_t, std::vector<std::size_t>> by_identity;
  for (auto i : split.train) by_identity[data.samples[i].identity].push_back(i);
  std::vector<std::vector<std::size_t>> ids;
  std::map<std::size_t, std::uint32_t> label_of;
  for (const auto& [identity, members] : by_identity) {
    for (auto i : members) label_of[i] = static_cast<std::uint32_t>(ids.size());
    ids.push_back(members);
  }

  TrainResult result{make_model(config, ids.size()), {}};
  if (config.modules == Modules::global || config.modules == Modules::semantic) return result;
  Model& model = result.model;

  std::map<std::size_t, NodeFeatureSet> features;
  for (auto i : split.train) features.emplace(i, semantic_features(data.samples[i], config));

  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::map<std::string, std::vector<double>> velocity;
  for (const auto& name : model.store.trainable_names()) {
    velocity[name].assign(model.store.get(name).size(), 0.0);
  }

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const double lr = learning_rate(config, epoch);
    double loss_sum = 0.0;
    const auto batches = epoch_batches(ids, config.batch_p, config.batch_k, rng);
    for (const auto& indices : batches) {
      std::vector<NodeFeatureSet> batch;
      std::vector<std::uint32_t> labels;
      for (auto i : indices) {
        batch.push_back(features.at(i));
        labels.push_back(label_of.at(i));
      }
      const auto pairs = config.modules == Modules::full ? sample_pairs(labels, rng)
                                                         : std::vector<VerificationPair>{};
      num::Tape tape;
      num::Tape::Scope scope(tape);
      double value = 0.0;
      try {
        auto loss = total_loss(model, batch, labels, pairs);
        value = loss.total.item();
        if (!std::isfinite(value)) throw NumericalError("non-finite loss");
        tape.backward(loss.total);
      } catch (const NumericalError& e) {
        throw NumericalError("training diverged at epoch " + std::to_string(epoch) + ": " +
                             e.what());
      }
      loss_sum += value;

      for (const auto& name : model.store.trainable_names()) {
        auto& param = model.store.get(name);
        if (!param.has_grad()) continue;
        auto g = param.grad();
        auto v = param.data();
        auto& vel = velocity[name];
        for (std::size_t i = 0; i < v.size(); ++i) {
          const double step = g[i] + config.weight_decay * v[i];
          vel[i] = config.momentum * vel[i] + step;
          v[i] -= lr * vel[i];
        }
        for (double x : v) {
          if (!std::isfinite(x)) {
            throw NumericalError("training diverged at epoch " + std::to_string(epoch) +
                                 ": parameter " + name + " became non-finite");
          }
        }
      }
      model.store.zero_grad();
    }
    const double mean = loss_sum / static_cast<double>(batches.size());
    result.epoch_loss.push_back(mean);
    if (on_epoch) on_epoch(epoch, mean);
  }
  return result;
}

}  // namespace hord::pipeline
